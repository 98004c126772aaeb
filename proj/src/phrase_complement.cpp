#include "cfsum/phrase_complement.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_set>

namespace cfsum {

std::vector<double> phrase_truth(const std::vector<Span>& spans,
                                 const std::vector<int>& text_tokens,
                                 const std::vector<int>& summary_tokens) {
  std::unordered_set<int> in_summary(summary_tokens.begin(), summary_tokens.end());
  std::vector<double> out;
  for (const auto& [b, e] : spans) {
    if (e <= b || b < 0 || e > static_cast<int>(text_tokens.size()))
      throw std::invalid_argument("phrase_truth: empty or out-of-range span");
    int hits = 0;
    for (int j = b; j < e; ++j)
      if (in_summary.count(text_tokens[j])) ++hits;
    out.push_back(static_cast<double>(hits) / (e - b));
  }
  return out;
}

std::vector<double> phrase_gain(const std::vector<double>& r_uni,
                                const std::vector<double>& r_bi,
                                const std::vector<double>& truth) {
  if (r_uni.size() != truth.size() || r_bi.size() != truth.size())
    throw std::invalid_argument("phrase_gain: length mismatch");
  std::vector<double> out(truth.size());
  for (std::size_t k = 0; k < truth.size(); ++k)
    out[k] = std::abs(r_uni[k] - truth[k]) - std::abs(r_bi[k] - truth[k]);
  return out;
}

Tensor copys_loss(const Tensor& scores_bi, const Tensor& scores_uni,
                  const std::vector<double>& truth) {
  auto t = Tensor::from(std::vector<double>(truth),
                        {static_cast<int>(truth.size()), 1});
  return add(mse_loss(scores_bi, t), mse_loss(scores_uni, t));
}

std::vector<double> project_gain(const std::vector<double>& phrase_gains,
                                 const std::vector<Span>& spans, int token_count) {
  if (phrase_gains.size() != spans.size())
    throw std::invalid_argument("project_gain: one gain per span expected");
  std::vector<double> out(token_count, -std::numeric_limits<double>::infinity());
  for (std::size_t k = 0; k < spans.size(); ++k)
    for (int j = spans[k].first; j < std::min(spans[k].second, token_count); ++j)
      out[j] = std::max(out[j], phrase_gains[k]);
  for (int j = 0; j < token_count; ++j)
    if (out[j] == -std::numeric_limits<double>::infinity())
      throw std::invalid_argument("project_gain: token " + std::to_string(j) +
                                  " not covered by any phrase");
  return out;
}

}  // namespace cfsum
