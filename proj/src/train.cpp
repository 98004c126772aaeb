#include "cfsum/train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <stdexcept>
#include <thread>

#include "cfsum/phrase_complement.hpp"
#include "cfsum/word_complement.hpp"
#include "json.hpp"

namespace cfsum {

namespace {
std::atomic<std::int64_t> g_aux_evals{0};
}

std::int64_t aux_loss_eval_count() { return g_aux_evals.load(); }

std::string TrainConfig::to_json() const {
  nlohmann::json j = nlohmann::json::parse(model.to_json());
  j["modules"] = {{"filter", modules.filter}, {"word", modules.word},
                  {"phrase", modules.phrase}};
  j["weights"] = {{"gen", weights.gen}, {"word", weights.word}, {"phrase", weights.phrase},
                  {"copyc", weights.copyc}, {"copys", weights.copys}};
  j["phase1_epochs"] = phase1_epochs;
  j["phase2_epochs"] = phase2_epochs;
  j["batch_size"] = batch_size;
  j["learning_rate"] = learning_rate;
  j["beta1"] = beta1;
  j["beta2"] = beta2;
  j["seed"] = seed;
  return j.dump(2);
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  auto j = nlohmann::json::parse(text);
  TrainConfig c;
  c.model = ModelConfig::from_json(text);
  if (j.contains("modules")) {
    c.modules.filter = j["modules"].value("filter", true);
    c.modules.word = j["modules"].value("word", true);
    c.modules.phrase = j["modules"].value("phrase", true);
  }
  if (j.contains("weights")) {
    c.weights.gen = j["weights"].value("gen", 1.0);
    c.weights.word = j["weights"].value("word", 1.0);
    c.weights.phrase = j["weights"].value("phrase", 1.0);
    c.weights.copyc = j["weights"].value("copyc", 1.0);
    c.weights.copys = j["weights"].value("copys", 1.0);
  }
  c.phase1_epochs = j.value("phase1_epochs", c.phase1_epochs);
  c.phase2_epochs = j.value("phase2_epochs", c.phase2_epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.seed = j.value("seed", c.seed);
  return c;
}

LossBundle sample_losses(const Model& model, const MultimodalSample& sample,
                         const ModuleSwitches& switches, const LossWeights& weights,
                         bool phase2, const RunOptions& opts, Tensor* total_out) {
  const auto& mc = model.config();
  RunOptions run = opts;
  // Phase 1 is pure generation training; all modules, the filter included,
  // only participate in the finetuning phase.
  run.filter_enabled = phase2 && switches.filter;
  run.need_uni = phase2 && switches.any_complement();

  auto trace = model.encode(sample, run);
  const int t = trace.text_len;
  const bool image_masked = switches.filter && trace.filter.keep == 0;

  LossBundle bundle;
  auto gen = model.generation_loss(trace.m.back(), sample.summary_tokens, image_masked, t);
  bundle.gen = gen.item();
  Tensor total = scale(gen, weights.gen);

  if (phase2 && switches.word) {
    g_aux_evals.fetch_add(1, std::memory_order_relaxed);
    auto targets = copy_targets(sample.text_tokens, sample.summary_tokens);
    auto p_bi = model.copy_head_probs(slice_rows(trace.m[mc.lw - 1], 0, t));
    auto p_uni = model.copy_head_probs(trace.u[mc.lw - 1]);
    auto lc = copyc_loss(p_bi, p_uni, targets);
    bundle.copyc = lc.item();
    total = add(total, scale(lc, weights.copyc));

    auto gain = word_gain(p_bi.data(), p_uni.data(), targets);
    std::vector<Tensor> window(trace.a.begin() + mc.lw, trace.a.begin() + mc.lw + 3);
    auto inter = t2v(window, t, trace.total_len);
    auto lw_loss = attention_divergence_loss(gain, inter);
    bundle.word = lw_loss.item();
    total = add(total, scale(lw_loss, weights.word));
  }

  if (phase2 && switches.phrase) {
    g_aux_evals.fetch_add(1, std::memory_order_relaxed);
    auto truth = phrase_truth(sample.phrase_spans, sample.text_tokens,
                              sample.summary_tokens);
    auto r_bi = model.phrase_scores(slice_rows(trace.m[mc.lp - 1], 0, t),
                                    sample.phrase_spans);
    auto r_uni = model.phrase_scores(trace.u[mc.lp - 1], sample.phrase_spans);
    auto ls = copys_loss(r_bi, r_uni, truth);
    bundle.copys = ls.item();
    total = add(total, scale(ls, weights.copys));

    auto gains = phrase_gain(r_uni.data(), r_bi.data(), truth);
    auto token_gain = project_gain(gains, sample.phrase_spans, t);
    std::vector<Tensor> window(trace.a.begin() + mc.lp, trace.a.begin() + mc.lp + 3);
    auto inter = t2v(window, t, trace.total_len);
    auto lp_loss = attention_divergence_loss(token_gain, inter);
    bundle.phrase = lp_loss.item();
    total = add(total, scale(lp_loss, weights.phrase));
  }

  bundle.total = total.item();
  if (total_out) *total_out = total;
  return bundle;
}

TrainResult train(const TrainConfig& cfg, const Corpus& corpus,
                  const std::string& out_dir, bool quiet) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  Model model(cfg.model, cfg.seed);
  Adam opt(model.params().all(), {cfg.learning_rate, cfg.beta1, cfg.beta2, 1e-8});
  Rng shuffle_rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
  Rng dropout_rng(cfg.seed ^ 0x5bd1e995u);

  const int n = static_cast<int>(corpus.samples.size());
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;

  TrainResult result;
  double best_loss = std::numeric_limits<double>::infinity();
  const std::string final_path = out_dir + "/model.ckpt";
  const std::string best_path = out_dir + "/best.ckpt";

  const int total_epochs = cfg.phase1_epochs + cfg.phase2_epochs;
  for (int epoch = 0; epoch < total_epochs; ++epoch) {
    const bool phase2 = epoch >= cfg.phase1_epochs;
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    LossBundle mean;
    int batches = 0;
    for (int start = 0; start < n; start += cfg.batch_size) {
      const int end = std::min(start + cfg.batch_size, n);
      RunOptions opts;
      opts.training = true;
      opts.dropout_rng = &dropout_rng;

      model.params().zero_grad();
      Tensor batch_total;
      for (int b = start; b < end; ++b) {
        Tensor total;
        auto bundle = sample_losses(model, corpus.samples[order[b]], cfg.modules,
                                    cfg.weights, phase2, opts, &total);
        if (!std::isfinite(bundle.total))
          throw std::runtime_error("train: non-finite loss in epoch " +
                                   std::to_string(epoch + 1) + " batch " +
                                   std::to_string(batches + 1) + " (sample " +
                                   corpus.samples[order[b]].id + ")");
        mean.gen += bundle.gen;
        mean.word += bundle.word;
        mean.phrase += bundle.phrase;
        mean.copyc += bundle.copyc;
        mean.copys += bundle.copys;
        mean.total += bundle.total;
        batch_total = batch_total.defined() ? add(batch_total, total) : total;
      }
      backward(scale(batch_total, 1.0 / (end - start)));
      opt.step();
      ++batches;
    }
    const double inv = 1.0 / n;
    mean.gen *= inv;
    mean.word *= inv;
    mean.phrase *= inv;
    mean.copyc *= inv;
    mean.copys *= inv;
    mean.total *= inv;
    result.log.push_back({epoch + 1, phase2 ? 2 : 1, mean});
    if (!quiet)
      std::cerr << "epoch " << (epoch + 1) << " phase " << (phase2 ? 2 : 1)
                << " total " << mean.total << " gen " << mean.gen << "\n";
    if (mean.total < best_loss) {
      best_loss = mean.total;
      model.params().save(best_path);
    }
  }

  model.params().save(final_path);
  {
    std::ofstream os(out_dir + "/config.json", std::ios::trunc);
    os << cfg.to_json() << "\n";
  }
  corpus.vocab.save(out_dir + "/vocab.json");
  {
    std::ofstream os(out_dir + "/train_log.csv", std::ios::trunc);
    os << "epoch,phase,gen,word,phrase,copyc,copys,total\n";
    for (const auto& e : result.log)
      os << e.epoch << "," << e.phase << "," << e.mean.gen << "," << e.mean.word << ","
         << e.mean.phrase << "," << e.mean.copyc << "," << e.mean.copys << ","
         << e.mean.total << "\n";
  }
  result.final_checkpoint = final_path;
  result.best_checkpoint = best_path;
  return result;
}

std::vector<int> decode_sample(const Model& model, const MultimodalSample& sample,
                               bool filter_on) {
  NoGradGuard ng;
  RunOptions opts;
  opts.training = false;
  opts.filter_enabled = filter_on;
  opts.need_uni = false;
  auto trace = model.encode(sample, opts);
  const bool image_masked = filter_on && trace.filter.keep == 0;
  return model.beam_search(trace.m.back(), image_masked, trace.text_len,
                           model.config().beam_size);
}

ScoreReport evaluate(const Model& model, const std::vector<MultimodalSample>& samples,
                     bool filter_on) {
  const int n = static_cast<int>(samples.size());
  std::vector<TokenSeq> hyps(n), refs(n);
  std::vector<std::string> ids(n);

  int threads = 1;
  if (const char* env = std::getenv("CFSUM_THREADS")) threads = std::max(1, std::atoi(env));
  threads = std::min(threads, std::max(1, n));

  auto worker = [&](int w) {
    for (int i = w; i < n; i += threads) {
      hyps[i] = decode_sample(model, samples[i], filter_on);
      refs[i] = samples[i].summary_tokens;
      ids[i] = samples[i].id;
    }
  };
  if (threads == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < threads; ++w) pool.emplace_back(worker, w);
    for (auto& t : pool) t.join();
  }
  return score_corpus(hyps, refs, ids);
}

LoadedModel load_model_dir(const std::string& dir, const std::string& checkpoint) {
  std::ifstream cis(dir + "/config.json");
  if (!cis) throw std::runtime_error("load_model_dir: missing config.json in " + dir);
  std::string text((std::istreambuf_iterator<char>(cis)), std::istreambuf_iterator<char>());
  auto cfg = ModelConfig::from_json(text);
  auto vocab = Vocabulary::load_file(dir + "/vocab.json");
  if (cfg.vocab_size != vocab.size())
    throw std::runtime_error("load_model_dir: vocabulary mismatch between config and vocab.json");
  LoadedModel lm{Model(cfg, 0), std::move(vocab)};
  lm.model.params().load(dir + "/" + checkpoint);
  return lm;
}

}  // namespace cfsum
