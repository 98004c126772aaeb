#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cfsum/data.hpp"
#include "cfsum/metrics.hpp"
#include "cfsum/model.hpp"

namespace cfsum {

struct ModuleSwitches {
  bool filter = true;
  bool word = true;
  bool phrase = true;

  bool any_complement() const { return word || phrase; }
  static ModuleSwitches none() { return {false, false, false}; }
};

struct LossWeights {
  double gen = 1.0, word = 1.0, phrase = 1.0, copyc = 1.0, copys = 1.0;
};

struct TrainConfig {
  ModelConfig model;
  ModuleSwitches modules;
  LossWeights weights;
  int phase1_epochs = 7;
  int phase2_epochs = 3;
  int batch_size = 8;
  double learning_rate = 1e-3;
  double beta1 = 0.9, beta2 = 0.98;
  std::uint64_t seed = 1;

  std::string to_json() const;
  static TrainConfig from_json(const std::string& text);
};

// The five scalar losses and their weighted total. Disabled components are 0.
struct LossBundle {
  double gen = 0, word = 0, phrase = 0, copyc = 0, copys = 0, total = 0;
};

// Full per-sample objective. Complement losses only when phase2 is set.
LossBundle sample_losses(const Model& model, const MultimodalSample& sample,
                         const ModuleSwitches& switches, const LossWeights& weights,
                         bool phase2, const RunOptions& opts, Tensor* total_out);

// Counts complement-loss evaluations (used to assert the inference path
// never computes them).
std::int64_t aux_loss_eval_count();

struct EpochLog {
  int epoch = 0;
  int phase = 1;
  LossBundle mean;
};

struct TrainResult {
  std::vector<EpochLog> log;
  std::string final_checkpoint;
  std::string best_checkpoint;
};

// Two-phase training; writes model.ckpt, best.ckpt, config.json, vocab.json
// and train_log.csv into out_dir. Deterministic given config and corpus.
TrainResult train(const TrainConfig& cfg, const Corpus& corpus,
                  const std::string& out_dir, bool quiet = false);

// Beam-search decode every sample and score against references.
// Parallel workers capped by the CFSUM_THREADS environment variable.
ScoreReport evaluate(const Model& model, const std::vector<MultimodalSample>& samples,
                     bool filter_on);

std::vector<int> decode_sample(const Model& model, const MultimodalSample& sample,
                               bool filter_on);

// Load a trained model directory (config.json + vocab.json + checkpoint).
struct LoadedModel {
  Model model;
  Vocabulary vocab;
};
LoadedModel load_model_dir(const std::string& dir, const std::string& checkpoint = "model.ckpt");

}  // namespace cfsum
