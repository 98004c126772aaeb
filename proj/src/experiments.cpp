#include "cfsum/experiments.hpp"

#include <cmath>
#include <filesystem>
#include <sstream>
#include <stdexcept>

#include "cfsum/phrase_complement.hpp"
#include "cfsum/word_complement.hpp"
#include "json.hpp"

namespace cfsum {

namespace {

// The uni-modal baseline is text-only by definition: evaluate it with the
// image features zeroed regardless of what the samples carry.
std::vector<MultimodalSample> text_only(std::vector<MultimodalSample> samples) {
  for (auto& s : samples)
    for (auto& region : s.image_regions)
      std::fill(region.begin(), region.end(), 0.0);
  return samples;
}

double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / v.size();
}

double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / v.size());
}

}  // namespace

std::vector<MaskExpRow> mask_experiment(const Model& unig, const Model& cfsum,
                                        const std::vector<MultimodalSample>& samples,
                                        const std::vector<double>& rates,
                                        std::uint64_t seed) {
  std::vector<MaskExpRow> rows;
  for (double rate : rates) {
    auto masked = mask_images(samples, rate, seed);
    auto cf = evaluate(cfsum, masked, true);
    rows.push_back({"cfsum", rate, cf.rouge1, cf.rouge2, cf.rougeL});
    auto un = evaluate(unig, text_only(masked), false);
    rows.push_back({"unig", rate, un.rouge1, un.rouge2, un.rougeL});
  }
  return rows;
}

std::string mask_experiment_csv(const std::vector<MaskExpRow>& rows) {
  std::ostringstream os;
  os << "model,rate,rouge1,rouge2,rougeL\n";
  for (const auto& r : rows)
    os << r.model << "," << r.rate << "," << r.rouge1 << "," << r.rouge2 << ","
       << r.rougeL << "\n";
  return os.str();
}

std::vector<UnpairExpRow> unpair_experiment(const Model& unig, const Model& cfsum,
                                            const std::vector<MultimodalSample>& samples,
                                            int pairs, int population, int samplings,
                                            std::uint64_t seed) {
  if (static_cast<int>(samples.size()) < population)
    throw std::invalid_argument("unpair_experiment: population exceeds sample count");
  std::vector<MultimodalSample> pool(samples.begin(), samples.begin() + population);

  struct Variant {
    std::string name;
    const Model* model;
    bool filter;
    bool zero_images;
  };
  const Variant variants[] = {{"unig", &unig, false, true},
                              {"cfsum", &cfsum, true, false},
                              {"cfsum-nofilter", &cfsum, false, false}};

  std::vector<UnpairExpRow> rows;
  for (const auto& v : variants) {
    auto base = v.zero_images ? text_only(pool) : pool;
    UnpairExpRow row;
    row.model = v.name;
    row.paired_rouge1 = evaluate(*v.model, base, v.filter).rouge1;
    std::vector<double> scores;
    for (int k = 0; k < samplings; ++k) {
      auto swapped = unpair_swap(pool, pairs, seed + k);
      if (v.zero_images) swapped = text_only(std::move(swapped));
      scores.push_back(evaluate(*v.model, swapped, v.filter).rouge1);
    }
    row.unpaired_mean = mean_of(scores);
    row.unpaired_std = std_of(scores);
    rows.push_back(row);
  }
  return rows;
}

std::string unpair_experiment_csv(const std::vector<UnpairExpRow>& rows) {
  std::ostringstream os;
  os << "model,paired_rouge1,unpaired_mean,unpaired_std,drop\n";
  for (const auto& r : rows)
    os << r.model << "," << r.paired_rouge1 << "," << r.unpaired_mean << ","
       << r.unpaired_std << "," << (r.paired_rouge1 - r.unpaired_mean) << "\n";
  return os.str();
}

std::vector<AblationRow> layer_ablation(const TrainConfig& base, const Corpus& train_corpus,
                                        const std::vector<MultimodalSample>& eval_samples,
                                        const std::vector<int>& lf_grid,
                                        const std::vector<int>& windows,
                                        const std::string& work_dir) {
  namespace fs = std::filesystem;
  std::vector<AblationRow> rows;
  for (int lf : lf_grid) {
    for (int w : windows) {
      TrainConfig cfg = base;
      cfg.model.lf = lf;
      cfg.model.lw = lf + w;
      cfg.model.lp = lf + 2 * w;
      if (lf < 1 || cfg.model.lp > cfg.model.layers - 3) continue;  // infeasible placement
      const std::string dir =
          work_dir + "/ablate_f" + std::to_string(lf) + "_w" + std::to_string(w);
      fs::create_directories(dir);
      train(cfg, train_corpus, dir, /*quiet=*/true);
      LoadedModel lm = load_model_dir(dir);
      rows.push_back({lf, w, evaluate(lm.model, eval_samples, true).rouge1});
    }
  }
  return rows;
}

std::string layer_ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << "lf,window,rouge1\n";
  for (const auto& r : rows)
    os << r.lf << "," << r.window << "," << r.rouge1 << "\n";
  return os.str();
}

std::string export_diagnostics(const Model& model, const Vocabulary& vocab,
                               const std::vector<MultimodalSample>& samples) {
  NoGradGuard ng;
  const auto& mc = model.config();
  nlohmann::json out = nlohmann::json::array();

  auto matrix_json = [](const Tensor& t) {
    nlohmann::json m = nlohmann::json::array();
    const auto& shape = t.shape();
    const auto& d = t.data();
    for (int r = 0; r < shape[0]; ++r) {
      nlohmann::json row = nlohmann::json::array();
      for (int c = 0; c < shape[1]; ++c) row.push_back(d[r * shape[1] + c]);
      m.push_back(row);
    }
    return m;
  };

  for (const auto& sample : samples) {
    RunOptions opts;
    opts.training = false;
    opts.filter_enabled = true;
    opts.need_uni = true;
    auto trace = model.encode(sample, opts);
    const int t = trace.text_len;

    nlohmann::json j;
    j["id"] = sample.id;
    j["consistency"] = trace.filter.consistency;
    j["keep"] = trace.filter.keep;
    j["alpha"] = trace.filter.alpha;

    auto targets = copy_targets(sample.text_tokens, sample.summary_tokens);
    auto p_bi = model.copy_head_probs(slice_rows(trace.m[mc.lw - 1], 0, t));
    auto p_uni = model.copy_head_probs(trace.u[mc.lw - 1]);
    j["word_gain"] = word_gain(p_bi.data(), p_uni.data(), targets);

    auto truth = phrase_truth(sample.phrase_spans, sample.text_tokens,
                              sample.summary_tokens);
    auto r_bi = model.phrase_scores(slice_rows(trace.m[mc.lp - 1], 0, t),
                                    sample.phrase_spans);
    auto r_uni = model.phrase_scores(trace.u[mc.lp - 1], sample.phrase_spans);
    j["phrase_gain"] = phrase_gain(r_uni.data(), r_bi.data(), truth);

    nlohmann::json t2v_layers = nlohmann::json::array();
    for (int l = 0; l < mc.layers; ++l)
      t2v_layers.push_back(t2v({trace.a[l]}, t, trace.total_len).data());
    j["t2v_per_layer"] = t2v_layers;

    nlohmann::json word_attn = nlohmann::json::array();
    nlohmann::json phrase_attn = nlohmann::json::array();
    for (int l = mc.lw; l < mc.lw + 3; ++l) word_attn.push_back(matrix_json(trace.a[l]));
    for (int l = mc.lp; l < mc.lp + 3; ++l) phrase_attn.push_back(matrix_json(trace.a[l]));
    j["word_window_attention"] = word_attn;
    j["phrase_window_attention"] = phrase_attn;

    const bool image_masked = trace.filter.keep == 0;
    auto decoded = model.beam_search(trace.m.back(), image_masked, t, mc.beam_size);
    j["decoded_tokens"] = decoded;
    j["decoded_text"] = vocab.decode(decoded);
    j["reference_text"] = vocab.decode(sample.summary_tokens);
    out.push_back(std::move(j));
  }
  return out.dump(2);
}

}  // namespace cfsum
