"""Smoke tests for the compiled bindings: a few hand-checked values per
exposed function, mirroring the C++ oracles."""

import math

import pytest

import cfsum


def test_word_gain_worked_example():
    gain = cfsum.word_gain([0.6], [0.4], [1.0])
    assert gain == pytest.approx([math.log(0.6 / 0.4)], abs=1e-9)
    assert abs(gain[0] - 0.405) < 5e-4


def test_copy_targets_and_phrase_truth():
    assert cfsum.copy_targets([4, 5, 6], [5]) == [0.0, 1.0, 0.0]
    assert cfsum.phrase_truth([(0, 3)], [4, 5, 6], [4, 5]) == pytest.approx([2 / 3])


def test_phrase_gain_and_projection():
    assert cfsum.phrase_gain([0.2], [0.4], [0.5]) == pytest.approx([0.2])
    assert cfsum.project_gain([0.5, -0.2], [(0, 2), (2, 4)], 4) == pytest.approx(
        [0.5, 0.5, -0.2, -0.2]
    )


def test_consistency_and_mask():
    value, keep = cfsum.consistency([[1.0, 0.0]], [[1.0, 0.0]], 0.65)
    assert value == pytest.approx(1.0)
    assert keep == 1
    value, keep = cfsum.consistency([[1.0, 0.0]], [[0.0, 1.0]], 0.65)
    assert value == pytest.approx(0.0)
    assert keep == 0

    uniform = [[0.25] * 4 for _ in range(4)]
    masked = cfsum.apply_mask(uniform, 0, 2)
    assert masked[0] == pytest.approx([0.5, 0.5, 0.0, 0.0])
    assert masked[2] == pytest.approx([0.0, 0.0, 0.5, 0.5])
    for got, want in zip(cfsum.apply_mask(uniform, 1, 2), uniform):
        assert got == pytest.approx(want)


def test_image_edge_indicator():
    assert cfsum.image_edge_indicator(0, 3, 2, 4) == 1
    assert cfsum.image_edge_indicator(0, 1, 2, 4) == 0


def test_t2v_uniform():
    c, t = 5, 3
    uniform = [[1.0 / c] * c for _ in range(c)]
    assert cfsum.t2v([uniform], t, c) == pytest.approx([1.0 / c] * t)


def test_softmax_and_cosine():
    rows = cfsum.softmax_rows([[0.0, 0.0], [1.0, 1.0]])
    for row in rows:
        assert row == pytest.approx([0.5, 0.5])
    assert cfsum.cosine([1.0, 0.0], [0.0, 2.0]) == pytest.approx(0.0)


def test_metrics():
    assert cfsum.rouge_n([1, 2, 3], [1, 2, 4], 1) == pytest.approx(200 / 3)
    assert cfsum.rouge_l([1, 3, 2], [1, 2, 3]) == pytest.approx(200 / 3)
    assert cfsum.lcs_length([1, 3, 2], [1, 2, 3]) == 2
    assert cfsum.bleu([[1, 2, 3, 4, 5]], [[1, 2, 3, 4, 5]]) == pytest.approx(100.0)


def test_synth_corpus_deterministic():
    a = cfsum.synth_corpus(5, seed=3)
    b = cfsum.synth_corpus(5, seed=3)
    assert a == b
    assert len(a) == 5
    sample = a[0]
    assert set(sample) == {"id", "text", "summary", "image_regions", "phrases"}
    assert len(sample["summary"].split()) == 8
