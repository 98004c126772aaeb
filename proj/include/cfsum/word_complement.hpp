#pragma once

#include <vector>

#include "cfsum/tensor.hpp"

namespace cfsum {

// 1 iff the text token id occurs anywhere in the summary.
std::vector<double> copy_targets(const std::vector<int>& text_tokens,
                                 const std::vector<int>& summary_tokens);

// Per-token image gain: log P(y=ŷ|m) - log P(y=ŷ|u), probabilities clamped.
std::vector<double> word_gain(const std::vector<double>& p_bi,
                              const std::vector<double>& p_uni,
                              const std::vector<double>& targets);

// BCE over both streams' copy probabilities (column vectors, T x 1).
Tensor copyc_loss(const Tensor& probs_bi, const Tensor& probs_uni,
                  const std::vector<double>& targets);

// Per-token inter-attention with the image, averaged over the given layers.
// Each attention matrix is C x C row-stochastic; output is a 1 x T tensor.
Tensor t2v(const std::vector<Tensor>& attentions, int text_len, int total_len);

// KL(softmax(gain) || normalize(t2v)); the gain target is constant.
// All-zero t2v falls back to uniform (no gradient).
Tensor attention_divergence_loss(const std::vector<double>& gain, const Tensor& t2v_avg);

}  // namespace cfsum
