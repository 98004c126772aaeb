#include "cfsum/word_complement.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iostream>
#include <stdexcept>
#include <unordered_set>

namespace cfsum {

std::vector<double> copy_targets(const std::vector<int>& text_tokens,
                                 const std::vector<int>& summary_tokens) {
  std::unordered_set<int> in_summary(summary_tokens.begin(), summary_tokens.end());
  std::vector<double> out(text_tokens.size(), 0.0);
  for (std::size_t i = 0; i < text_tokens.size(); ++i)
    if (in_summary.count(text_tokens[i])) out[i] = 1.0;
  return out;
}

std::vector<double> word_gain(const std::vector<double>& p_bi,
                              const std::vector<double>& p_uni,
                              const std::vector<double>& targets) {
  if (p_bi.size() != targets.size() || p_uni.size() != targets.size())
    throw std::invalid_argument("word_gain: length mismatch");
  std::vector<double> gain(targets.size());
  for (std::size_t j = 0; j < targets.size(); ++j) {
    const double clamp_lo = kProbEps, clamp_hi = 1.0 - kProbEps;
    const double pm = std::clamp(targets[j] == 1.0 ? p_bi[j] : 1.0 - p_bi[j],
                                 clamp_lo, clamp_hi);
    const double pu = std::clamp(targets[j] == 1.0 ? p_uni[j] : 1.0 - p_uni[j],
                                 clamp_lo, clamp_hi);
    gain[j] = std::log(pm) - std::log(pu);
  }
  return gain;
}

Tensor copyc_loss(const Tensor& probs_bi, const Tensor& probs_uni,
                  const std::vector<double>& targets) {
  return add(bce_loss(probs_bi, targets), bce_loss(probs_uni, targets));
}

Tensor t2v(const std::vector<Tensor>& attentions, int text_len, int total_len) {
  if (total_len <= text_len)
    throw std::invalid_argument("t2v: no image positions (C == T)");
  if (attentions.empty()) throw std::invalid_argument("t2v: no attention layers");
  const int t = text_len, c = total_len;
  Tensor acc;
  for (const auto& a : attentions) {
    if (a.rows() != c || a.cols() != c)
      throw std::invalid_argument("t2v: attention shape mismatch");
    // inter-attention mass of token j: row j over image columns plus
    // column j over image rows, scaled by 1/(2(C-T))
    auto text_to_img = matmul(slice_cols(slice_rows(a, 0, t), t, c),
                              Tensor::full({c - t, 1}, 1.0));          // T x 1
    auto img_to_text = matmul(Tensor::full({1, c - t}, 1.0),
                              slice_cols(slice_rows(a, t, c), 0, t));  // 1 x T
    auto per_token = scale(add(transpose(text_to_img), img_to_text),
                           1.0 / (2.0 * (c - t)));  // 1 x T
    acc = acc.defined() ? add(acc, per_token) : per_token;
  }
  return scale(acc, 1.0 / static_cast<double>(attentions.size()));
}

Tensor attention_divergence_loss(const std::vector<double>& gain, const Tensor& t2v_avg) {
  if (gain.empty() || gain.size() != t2v_avg.size())
    throw std::invalid_argument("attention_divergence_loss: length mismatch");
  const int t = static_cast<int>(gain.size());

  // Detached softmax target over the gain profile.
  double mx = *std::max_element(gain.begin(), gain.end());
  std::vector<double> target(gain.size());
  double z = 0.0;
  for (std::size_t j = 0; j < gain.size(); ++j) {
    target[j] = std::exp(gain[j] - mx);
    z += target[j];
  }
  for (auto& v : target) v /= z;

  double mass = 0.0;
  for (std::size_t j = 0; j < t2v_avg.size(); ++j) mass += t2v_avg.value(j);
  Tensor q;
  if (mass < 1e-12) {
    // Routine when the filter has cut the image: note it once, not per call.
    static std::atomic<bool> noted{false};
    if (!noted.exchange(true))
      std::cerr << "attention_divergence_loss: all-zero inter-attention, "
                   "using uniform fallback (reported once)\n";
    q = Tensor::full({1, t}, 1.0 / t);
  } else {
    q = normalize_rows_or(t2v_avg, Tensor::full({1, t}, 1.0 / t));
  }
  return kl_loss(Tensor::from(std::move(target), {1, t}), q);
}

}  // namespace cfsum
