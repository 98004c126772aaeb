#pragma once

#include <string>
#include <vector>

#include "cfsum/train.hpp"

namespace cfsum {

struct MaskExpRow {
  std::string model;
  double rate;
  double rouge1, rouge2, rougeL;
};

// Evaluate both models across image masking rates.
std::vector<MaskExpRow> mask_experiment(const Model& unig, const Model& cfsum,
                                        const std::vector<MultimodalSample>& samples,
                                        const std::vector<double>& rates,
                                        std::uint64_t seed);
std::string mask_experiment_csv(const std::vector<MaskExpRow>& rows);

struct UnpairExpRow {
  std::string model;
  double paired_rouge1 = 0;
  double unpaired_mean = 0;
  double unpaired_std = 0;
};

// Table-4-style protocol: swap `pairs` image pairs inside a `population`
// subset, over `samplings` seeded repetitions.
std::vector<UnpairExpRow> unpair_experiment(const Model& unig, const Model& cfsum,
                                            const std::vector<MultimodalSample>& samples,
                                            int pairs, int population, int samplings,
                                            std::uint64_t seed);
std::string unpair_experiment_csv(const std::vector<UnpairExpRow>& rows);

struct AblationRow {
  int lf = 0;
  int window = 0;  // layers between module starts
  double rouge1 = 0;
};

// Train and evaluate every feasible (L_f, w) placement on the grid.
std::vector<AblationRow> layer_ablation(const TrainConfig& base, const Corpus& train_corpus,
                                        const std::vector<MultimodalSample>& eval_samples,
                                        const std::vector<int>& lf_grid,
                                        const std::vector<int>& windows,
                                        const std::string& work_dir);
std::string layer_ablation_csv(const std::vector<AblationRow>& rows);

// Per-sample filter decision, gains, inter-attention and decoded summary,
// as a JSON array.
std::string export_diagnostics(const Model& model, const Vocabulary& vocab,
                               const std::vector<MultimodalSample>& samples);

}  // namespace cfsum
