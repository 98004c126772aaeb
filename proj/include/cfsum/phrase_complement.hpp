#pragma once

#include <vector>

#include "cfsum/data.hpp"
#include "cfsum/tensor.hpp"

namespace cfsum {

// Fraction of each phrase's tokens whose id occurs in the summary.
std::vector<double> phrase_truth(const std::vector<Span>& spans,
                                 const std::vector<int>& text_tokens,
                                 const std::vector<int>& summary_tokens);

// GS = |R_u - R̂| - |R_m - R̂| per phrase.
std::vector<double> phrase_gain(const std::vector<double>& r_uni,
                                const std::vector<double>& r_bi,
                                const std::vector<double>& truth);

// MSE over both streams' scores against the ground-truth ratios.
Tensor copys_loss(const Tensor& scores_bi, const Tensor& scores_uni,
                  const std::vector<double>& truth);

// Token gain: max over the phrases containing each token.
std::vector<double> project_gain(const std::vector<double>& phrase_gains,
                                 const std::vector<Span>& spans, int token_count);

}  // namespace cfsum
