#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cfsum/phrase_complement.hpp"
#include "cfsum/train.hpp"
#include "cfsum/word_complement.hpp"
#include "doctest.h"

using namespace cfsum;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

TrainConfig tiny_config(int vocab_size) {
  TrainConfig cfg;
  cfg.model.layers = 6;
  cfg.model.hidden = 8;
  cfg.model.heads = 2;
  cfg.model.ffn = 16;
  cfg.model.vocab_size = vocab_size;
  cfg.model.image_dim = 16;
  cfg.model.lf = 1;
  cfg.model.lw = 2;
  cfg.model.lp = 3;
  cfg.model.max_decode_len = 12;
  cfg.model.min_decode_len = 4;
  cfg.phase1_epochs = 1;
  cfg.phase2_epochs = 1;
  cfg.batch_size = 4;
  cfg.seed = 5;
  return cfg;
}

Corpus tiny_corpus(int n = 12) {
  SynthConfig sc;
  sc.n = n;
  sc.seed = 91;
  return synth_generate(sc);
}

struct TempDir {
  std::string path;
  explicit TempDir(const char* name) : path(std::string("/tmp/cfsum_train_") + name) {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST_CASE("train config json round trip") {
  auto cfg = tiny_config(40);
  cfg.modules.phrase = false;
  cfg.weights.word = 0.5;
  cfg.learning_rate = 3e-4;
  auto back = TrainConfig::from_json(cfg.to_json());
  CHECK(back.model.hidden == cfg.model.hidden);
  CHECK(back.modules.filter == true);
  CHECK(back.modules.phrase == false);
  CHECK(back.weights.word == doctest::Approx(0.5));
  CHECK(back.learning_rate == doctest::Approx(3e-4));
  CHECK(back.seed == cfg.seed);
}

TEST_CASE("sample_losses: phase and switch semantics") {
  auto corpus = tiny_corpus(3);
  auto cfg = tiny_config(corpus.vocab.size());
  Model model(cfg.model, cfg.seed);
  RunOptions opts;
  opts.training = false;

  SUBCASE("phase 1 computes the generation loss only") {
    auto b = sample_losses(model, corpus.samples[0], cfg.modules, cfg.weights,
                           false, opts, nullptr);
    CHECK(b.word == 0.0);
    CHECK(b.phrase == 0.0);
    CHECK(b.copyc == 0.0);
    CHECK(b.copys == 0.0);
    CHECK(b.total == doctest::Approx(b.gen));
  }
  SUBCASE("all modules disabled in phase 2 degenerates to the generation loss") {
    auto b = sample_losses(model, corpus.samples[0], ModuleSwitches::none(),
                           cfg.weights, true, opts, nullptr);
    CHECK(b.total == doctest::Approx(b.gen));
  }
  SUBCASE("phase 2 with all modules sums five nonnegative components") {
    auto b = sample_losses(model, corpus.samples[0], cfg.modules, cfg.weights,
                           true, opts, nullptr);
    CHECK(b.gen >= 0.0);
    CHECK(b.word >= 0.0);
    CHECK(b.phrase >= 0.0);
    CHECK(b.copyc >= 0.0);
    CHECK(b.copys >= 0.0);
    CHECK(b.total ==
          doctest::Approx(b.gen + b.word + b.phrase + b.copyc + b.copys));
  }
  SUBCASE("single-module bundles zero the others") {
    ModuleSwitches only_word{false, true, false};
    auto b = sample_losses(model, corpus.samples[0], only_word, cfg.weights, true,
                           opts, nullptr);
    CHECK(b.word > 0.0);
    CHECK(b.copyc > 0.0);
    CHECK(b.phrase == 0.0);
    CHECK(b.copys == 0.0);
  }
}

TEST_CASE("training is deterministic: byte-identical checkpoints") {
  auto corpus = tiny_corpus();
  auto cfg = tiny_config(corpus.vocab.size());
  TempDir d1("det_a"), d2("det_b");
  train(cfg, corpus, d1.path, true);
  train(cfg, corpus, d2.path, true);
  CHECK(slurp(d1.path + "/model.ckpt") == slurp(d2.path + "/model.ckpt"));
  CHECK(slurp(d1.path + "/model.ckpt").size() > 0);
  CHECK(slurp(d1.path + "/train_log.csv") == slurp(d2.path + "/train_log.csv"));
}

TEST_CASE("phase-2 epochs = 0 reproduces the generation-only baseline") {
  auto corpus = tiny_corpus();
  auto cfg = tiny_config(corpus.vocab.size());
  cfg.phase2_epochs = 0;
  TempDir d1("unig_a"), d2("unig_b");
  train(cfg, corpus, d1.path, true);
  auto none = cfg;
  none.modules = ModuleSwitches::none();
  train(none, corpus, d2.path, true);
  CHECK(slurp(d1.path + "/model.ckpt") == slurp(d2.path + "/model.ckpt"));
}

TEST_CASE("training writes artifacts and the loss log has both phases") {
  auto corpus = tiny_corpus();
  auto cfg = tiny_config(corpus.vocab.size());
  TempDir dir("artifacts");
  auto result = train(cfg, corpus, dir.path, true);
  CHECK(std::filesystem::exists(dir.path + "/model.ckpt"));
  CHECK(std::filesystem::exists(dir.path + "/best.ckpt"));
  CHECK(std::filesystem::exists(dir.path + "/config.json"));
  CHECK(std::filesystem::exists(dir.path + "/vocab.json"));
  REQUIRE(result.log.size() == 2);
  CHECK(result.log[0].phase == 1);
  CHECK(result.log[1].phase == 2);
  CHECK(result.log[0].mean.word == 0.0);

  auto lm = load_model_dir(dir.path);
  CHECK(lm.model.config().hidden == cfg.model.hidden);
  CHECK(lm.vocab.size() == corpus.vocab.size());
}

TEST_CASE("evaluation path never touches the complement losses") {
  auto corpus = tiny_corpus(4);
  auto cfg = tiny_config(corpus.vocab.size());
  Model model(cfg.model, 3);
  const auto before = aux_loss_eval_count();
  evaluate(model, corpus.samples, true);
  CHECK(aux_loss_eval_count() == before);
  // while the training path does
  RunOptions opts;
  sample_losses(model, corpus.samples[0], cfg.modules, cfg.weights, true, opts,
                nullptr);
  CHECK(aux_loss_eval_count() > before);
}

TEST_CASE("evaluation is deterministic and thread-count independent") {
  auto corpus = tiny_corpus(6);
  auto cfg = tiny_config(corpus.vocab.size());
  Model model(cfg.model, 9);
  setenv("CFSUM_THREADS", "1", 1);
  auto serial = evaluate(model, corpus.samples, true);
  setenv("CFSUM_THREADS", "4", 1);
  auto parallel = evaluate(model, corpus.samples, true);
  unsetenv("CFSUM_THREADS");
  CHECK(serial.to_json() == parallel.to_json());
}

TEST_CASE("end-to-end gradient spot check against finite differences") {
  auto corpus = tiny_corpus(2);
  auto cfg = tiny_config(corpus.vocab.size());
  Model model(cfg.model, 13);
  RunOptions opts;
  opts.training = false;       // no dropout: deterministic loss surface
  opts.filter_enabled = false; // the filter's step decision is not differentiable
  opts.need_uni = true;

  // The divergence losses treat the softmax-of-gain targets as constants, so
  // the finite-difference oracle must hold them frozen too; everything else
  // (generation, copy heads, attention paths) is differentiated end to end.
  const auto& sample = corpus.samples[0];
  const auto& mc = cfg.model;
  std::vector<double> frozen_word_gain, frozen_token_gain;
  {
    NoGradGuard ng;
    auto trace = model.encode(sample, opts);
    const int t = trace.text_len;
    auto targets = copy_targets(sample.text_tokens, sample.summary_tokens);
    auto p_bi = model.copy_head_probs(slice_rows(trace.m[mc.lw - 1], 0, t));
    auto p_uni = model.copy_head_probs(trace.u[mc.lw - 1]);
    frozen_word_gain = word_gain(p_bi.data(), p_uni.data(), targets);
    auto truth = phrase_truth(sample.phrase_spans, sample.text_tokens,
                              sample.summary_tokens);
    auto r_bi = model.phrase_scores(slice_rows(trace.m[mc.lp - 1], 0, t),
                                    sample.phrase_spans);
    auto r_uni = model.phrase_scores(trace.u[mc.lp - 1], sample.phrase_spans);
    auto gains = phrase_gain(r_uni.data(), r_bi.data(), truth);
    frozen_token_gain = project_gain(gains, sample.phrase_spans, t);
  }

  auto loss_value = [&]() {
    auto trace = model.encode(sample, opts);
    const int t = trace.text_len;
    auto targets = copy_targets(sample.text_tokens, sample.summary_tokens);
    auto total = model.generation_loss(trace.m.back(), sample.summary_tokens, false, t);
    auto p_bi = model.copy_head_probs(slice_rows(trace.m[mc.lw - 1], 0, t));
    auto p_uni = model.copy_head_probs(trace.u[mc.lw - 1]);
    total = add(total, copyc_loss(p_bi, p_uni, targets));
    std::vector<Tensor> ww(trace.a.begin() + mc.lw, trace.a.begin() + mc.lw + 3);
    total = add(total, attention_divergence_loss(frozen_word_gain,
                                                 t2v(ww, t, trace.total_len)));
    auto truth = phrase_truth(sample.phrase_spans, sample.text_tokens,
                              sample.summary_tokens);
    auto r_bi = model.phrase_scores(slice_rows(trace.m[mc.lp - 1], 0, t),
                                    sample.phrase_spans);
    auto r_uni = model.phrase_scores(trace.u[mc.lp - 1], sample.phrase_spans);
    total = add(total, copys_loss(r_bi, r_uni, truth));
    std::vector<Tensor> pw(trace.a.begin() + mc.lp, trace.a.begin() + mc.lp + 3);
    total = add(total, attention_divergence_loss(frozen_token_gain,
                                                 t2v(pw, t, trace.total_len)));
    return total;
  };

  model.params().zero_grad();
  backward(loss_value());

  // five spot tensors spread across parameter kinds; probe each tensor's
  // largest-gradient entry so the finite difference is above the noise floor
  const char* picks[] = {"embed.token", "enc.0.wq", "enc.3.ffn.w1", "dec.gru.wz",
                         "scorer.w1"};
  const double h = 1e-4;
  for (const char* name : picks) {
    auto& p = model.params().get(name);
    int idx = 0;
    for (std::size_t i = 1; i < p.grad().size(); ++i)
      if (std::abs(p.grad()[i]) > std::abs(p.grad()[idx])) idx = static_cast<int>(i);
    const double analytic = p.grad()[idx];
    const double saved = p.data()[idx];
    NoGradGuard ng;
    p.data()[idx] = saved + h;
    const double up = loss_value().item();
    p.data()[idx] = saved - h;
    const double down = loss_value().item();
    p.data()[idx] = saved;
    const double fd = (up - down) / (2 * h);
    const double denom = std::max({std::abs(fd), std::abs(analytic), 1e-8});
    INFO(name, "[", idx, "] analytic ", analytic, " fd ", fd);
    CHECK(std::abs(fd - analytic) / denom < 1e-3);
  }
}

TEST_CASE("phase-1 generation loss trends downward") {
  auto corpus = tiny_corpus(16);
  auto cfg = tiny_config(corpus.vocab.size());
  cfg.phase1_epochs = 5;
  cfg.phase2_epochs = 0;
  cfg.learning_rate = 2e-3;
  TempDir dir("trend");
  auto result = train(cfg, corpus, dir.path, true);
  REQUIRE(result.log.size() == 5);
  CHECK(result.log.back().mean.gen < result.log.front().mean.gen);
}
