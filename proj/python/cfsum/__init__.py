"""Python bindings for the coarse-to-fine multimodal summarization core.

Thin re-export of the compiled `_cfsum` module: plain lists in, plain
lists out, no array-framework dependency.
"""

try:  # installed wheel: the extension lives inside this package
    from ._cfsum import (  # noqa: F401
        apply_mask,
        bleu,
        consistency,
        copy_targets,
        cosine,
        image_edge_indicator,
        lcs_length,
        phrase_gain,
        phrase_truth,
        project_gain,
        rouge_l,
        rouge_n,
        softmax_rows,
        synth_corpus,
        t2v,
        word_gain,
    )
except ImportError:  # in-tree use: extension on sys.path from the build dir
    from _cfsum import (  # noqa: F401
        apply_mask,
        bleu,
        consistency,
        copy_targets,
        cosine,
        image_edge_indicator,
        lcs_length,
        phrase_gain,
        phrase_truth,
        project_gain,
        rouge_l,
        rouge_n,
        softmax_rows,
        synth_corpus,
        t2v,
        word_gain,
    )

__all__ = [
    "apply_mask",
    "bleu",
    "consistency",
    "copy_targets",
    "cosine",
    "image_edge_indicator",
    "lcs_length",
    "phrase_gain",
    "phrase_truth",
    "project_gain",
    "rouge_l",
    "rouge_n",
    "softmax_rows",
    "synth_corpus",
    "t2v",
    "word_gain",
]
