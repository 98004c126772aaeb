#include <cmath>

#include "cfsum/data.hpp"
#include "cfsum/model.hpp"
#include "doctest.h"

using namespace cfsum;

namespace {

ModelConfig small_config(int vocab_size) {
  ModelConfig cfg;
  cfg.layers = 6;
  cfg.hidden = 8;
  cfg.heads = 2;
  cfg.ffn = 16;
  cfg.vocab_size = vocab_size;
  cfg.image_dim = 16;
  cfg.lf = 1;
  cfg.lw = 2;
  cfg.lp = 3;
  cfg.max_decode_len = 12;
  cfg.min_decode_len = 4;
  cfg.dropout = 0.0;
  return cfg;
}

struct Fixture {
  Corpus corpus;
  Model model;

  Fixture()
      : corpus(make_corpus()),
        model(small_config(corpus.vocab.size()), 77) {}

  static Corpus make_corpus() {
    SynthConfig sc;
    sc.n = 4;
    sc.seed = 55;
    return synth_generate(sc);
  }

  const MultimodalSample& sample(int i = 0) const { return corpus.samples[i]; }
};

RunOptions inference(bool filter = true, bool uni = true) {
  RunOptions o;
  o.training = false;
  o.filter_enabled = filter;
  o.need_uni = uni;
  return o;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.size() == b.size());
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a.value(i) - b.value(i)));
  return m;
}

}  // namespace

TEST_CASE("config validation") {
  ModelConfig cfg = small_config(20);
  CHECK_NOTHROW(cfg.validate());
  SUBCASE("hidden must divide by heads") {
    cfg.hidden = 9;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  }
  SUBCASE("placement ordering enforced") {
    cfg.lp = cfg.layers - 2;  // guidance window would overrun
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.lf = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  }
  SUBCASE("json round trip") {
    auto text = cfg.to_json();
    auto back = ModelConfig::from_json(text);
    CHECK(back.layers == cfg.layers);
    CHECK(back.hidden == cfg.hidden);
    CHECK(back.alpha == cfg.alpha);
    CHECK(back.lp == cfg.lp);
  }
}

TEST_CASE("embed: shared text path and shapes") {
  Fixture f;
  NoGradGuard ng;
  auto [bi, uni] = f.model.embed(f.sample());
  const int t = f.sample().text_len();
  const int c = t + f.sample().region_count();
  CHECK(bi.rows() == c);
  CHECK(uni.rows() == t);
  // text rows of the bi-modal input equal the uni-modal input exactly
  for (int r = 0; r < t; ++r)
    for (int col = 0; col < 8; ++col) CHECK(bi(r, col) == uni(r, col));
}

TEST_CASE("embed: zeroed image features collapse to bias + segment") {
  Fixture f;
  NoGradGuard ng;
  auto s = f.sample();
  for (auto& region : s.image_regions)
    std::fill(region.begin(), region.end(), 0.0);
  auto [bi, uni] = f.model.embed(s);
  const int t = s.text_len();
  // every image row is the same projection of zero
  for (int r = t + 1; r < bi.rows(); ++r)
    for (int col = 0; col < 8; ++col) CHECK(bi(r, col) == doctest::Approx(bi(t, col)));
}

TEST_CASE("embed: dimension mismatch rejected") {
  Fixture f;
  auto s = f.sample();
  s.image_regions.assign(2, std::vector<double>(7, 0.5));
  CHECK_THROWS_WITH_AS(f.model.embed(s), doctest::Contains("dim"),
                       std::invalid_argument);
}

TEST_CASE("encode: attention rows sum to 1 in every layer") {
  Fixture f;
  NoGradGuard ng;
  auto trace = f.model.encode(f.sample(), inference());
  REQUIRE(trace.a.size() == 6);
  CHECK(trace.total_len == trace.text_len + f.sample().region_count());
  for (const auto& a : trace.a) {
    REQUIRE(a.rows() == trace.total_len);
    for (int r = 0; r < a.rows(); ++r) {
      double s = 0;
      for (int c = 0; c < a.cols(); ++c) s += a(r, c);
      CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
}

TEST_CASE("encode: kept image means masking-disabled trace is identical") {
  Fixture f;
  NoGradGuard ng;
  RunOptions keep_forced = inference();
  keep_forced.force_keep = 1;
  auto with_filter = f.model.encode(f.sample(), keep_forced);
  auto no_filter = f.model.encode(f.sample(), inference(false));
  REQUIRE(with_filter.m.size() == no_filter.m.size());
  for (std::size_t l = 0; l < with_filter.m.size(); ++l)
    CHECK(max_abs_diff(with_filter.m[l], no_filter.m[l]) == 0.0);
}

TEST_CASE("encode: filtered image degenerates text positions to a text-only run") {
  Fixture f;
  NoGradGuard ng;
  RunOptions opts = inference();
  opts.force_keep = 0;
  auto trace = f.model.encode(f.sample(), opts);
  const int t = trace.text_len;
  const int lf = f.model.config().lf;

  // Oracle: take the bi-modal text features at layer L_f and push them
  // through plain text-only layers; every later layer must match within 1e-9.
  auto seed_features = slice_rows(trace.m[lf - 1], 0, t);
  for (int layer = lf; layer < f.model.config().layers; ++layer) {
    auto oracle = f.model.forward_layers(seed_features, lf, inference(), layer + 1);
    auto got = slice_rows(trace.m[layer], 0, t);
    CHECK(max_abs_diff(got, oracle) < 1e-9);
  }
}

TEST_CASE("decode_step: distribution and image masking") {
  Fixture f;
  NoGradGuard ng;
  auto trace = f.model.encode(f.sample(), inference(false, false));
  auto context = trace.m.back();
  auto state = f.model.decode_init(context);
  const int t = trace.text_len;

  auto step = f.model.decode_step(state, kBos, context, false, t);
  double psum = 0;
  for (std::size_t i = 0; i < step.probs.size(); ++i) psum += step.probs.value(i);
  CHECK(psum == doctest::Approx(1.0).epsilon(1e-9));

  auto masked = f.model.decode_step(state, kBos, context, true, t);
  for (int i = t; i < trace.total_len; ++i)
    CHECK(masked.attention.value(i) == doctest::Approx(0.0).epsilon(1e-12));
  double asum = 0;
  for (std::size_t i = 0; i < masked.attention.size(); ++i)
    asum += masked.attention.value(i);
  CHECK(asum == doctest::Approx(1.0).epsilon(1e-9));

  // deterministic given state and token
  auto again = f.model.decode_step(state, kBos, context, false, t);
  CHECK(max_abs_diff(step.probs, again.probs) == 0.0);
}

TEST_CASE("generation_loss: nonnegative, empty reference rejected") {
  Fixture f;
  NoGradGuard ng;
  auto trace = f.model.encode(f.sample(), inference(false, false));
  auto loss = f.model.generation_loss(trace.m.back(), f.sample().summary_tokens,
                                      false, trace.text_len);
  CHECK(loss.item() >= 0.0);
  CHECK_THROWS_AS(f.model.generation_loss(trace.m.back(), {}, false, trace.text_len),
                  std::invalid_argument);
}

TEST_CASE("generation_loss decreases when overfitting one sample") {
  Fixture f;
  Adam opt(f.model.params().all(), {5e-3, 0.9, 0.98, 1e-8});
  RunOptions opts = inference(false, false);
  auto loss_value = [&]() {
    auto trace = f.model.encode(f.sample(), opts);
    return f.model.generation_loss(trace.m.back(), f.sample().summary_tokens, false,
                                   trace.text_len);
  };
  const double initial = loss_value().item();
  for (int step = 0; step < 50; ++step) {
    f.model.params().zero_grad();
    backward(loss_value());
    opt.step();
  }
  NoGradGuard ng;
  CHECK(loss_value().item() < initial);
}

TEST_CASE("beam search: B=1 equals greedy decoding") {
  Fixture f;
  NoGradGuard ng;
  auto trace = f.model.encode(f.sample(), inference(false, false));
  auto context = trace.m.back();
  const auto& cfg = f.model.config();

  // greedy reference decoder
  std::vector<int> greedy;
  auto state = f.model.decode_init(context);
  int prev = kBos;
  for (int i = 0; i < cfg.max_decode_len; ++i) {
    auto step = f.model.decode_step(state, prev, context, false, trace.text_len);
    int best = -1;
    double best_p = -1.0;
    for (int tok = 0; tok < cfg.vocab_size; ++tok) {
      if (tok == kPad || tok == kBos) continue;
      if (tok == kEos && static_cast<int>(greedy.size()) < cfg.min_decode_len) continue;
      if (step.probs.value(tok) > best_p) {
        best_p = step.probs.value(tok);
        best = tok;
      }
    }
    if (best == kEos) break;
    greedy.push_back(best);
    state = step.state;
    prev = best;
  }

  auto beam1 = f.model.beam_search(context, false, trace.text_len, 1);
  CHECK(beam1 == greedy);
}

TEST_CASE("beam search: minimum length and determinism") {
  Fixture f;
  NoGradGuard ng;
  auto trace = f.model.encode(f.sample(), inference(false, false));
  auto out = f.model.beam_search(trace.m.back(), false, trace.text_len, 4);
  CHECK(static_cast<int>(out.size()) >= f.model.config().min_decode_len);
  for (int tok : out) {
    CHECK(tok != kBos);
    CHECK(tok != kEos);
    CHECK(tok != kPad);
  }
  auto again = f.model.beam_search(trace.m.back(), false, trace.text_len, 4);
  CHECK(out == again);
}

TEST_CASE("checkpoint save/load round trip preserves every value") {
  Fixture f;
  const std::string path = "/tmp/cfsum_test_model.ckpt";
  f.model.params().save(path);
  Model other(small_config(f.corpus.vocab.size()), 123);  // different init
  other.params().load(path);
  auto a = f.model.params().all();
  auto b = other.params().all();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j)
      CHECK(a[i].value(j) == b[i].value(j));
  std::remove(path.c_str());
}

TEST_CASE("aux heads: shared across streams, sane ranges") {
  Fixture f;
  NoGradGuard ng;
  auto trace = f.model.encode(f.sample(), inference(true, true));
  const int t = trace.text_len;
  auto p_bi = f.model.copy_head_probs(slice_rows(trace.m[1], 0, t));
  auto p_uni = f.model.copy_head_probs(trace.u[1]);
  REQUIRE(p_bi.rows() == t);
  REQUIRE(p_uni.rows() == t);
  for (int j = 0; j < t; ++j) {
    CHECK(p_bi(j, 0) > 0.0);
    CHECK(p_bi(j, 0) < 1.0);
  }
  // same features in, same probability out regardless of stream label
  auto p_same = f.model.copy_head_probs(trace.u[1]);
  for (int j = 0; j < t; ++j) CHECK(p_same(j, 0) == p_uni(j, 0));

  auto scores = f.model.phrase_scores(trace.u[2], f.sample().phrase_spans);
  REQUIRE(scores.rows() == static_cast<int>(f.sample().phrase_spans.size()));
  for (int k = 0; k < scores.rows(); ++k) {
    CHECK(scores(k, 0) > 0.0);
    CHECK(scores(k, 0) < 1.0);
  }
}
