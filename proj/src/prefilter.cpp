#include "cfsum/prefilter.hpp"

#include <cmath>
#include <iostream>
#include <stdexcept>

namespace cfsum {

FilterDecision consistency(const Tensor& uni_features, const Tensor& bi_features,
                           double alpha) {
  NoGradGuard ng;  // the decision is not differentiated
  auto pu = mean_pool_rows(uni_features);
  auto pm = mean_pool_rows(bi_features);
  double nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < pu.size(); ++i) nu += pu.value(i) * pu.value(i);
  for (std::size_t i = 0; i < pm.size(); ++i) nv += pm.value(i) * pm.value(i);
  FilterDecision d;
  d.alpha = alpha;
  if (nu == 0.0 || nv == 0.0) {
    std::cerr << "prefilter: zero-norm pooled feature, treating image as useless\n";
    d.consistency = 0.0;
    d.keep = 0;
    return d;
  }
  d.consistency = cosine(pu, pm).item();
  d.keep = d.consistency - alpha >= 0.0 ? 1 : 0;  // step(0) = 1
  return d;
}

int image_edge_indicator(int r, int s, int text_len, int total_len) {
  if (r < 0 || s < 0 || r >= total_len || s >= total_len)
    throw std::invalid_argument("image_edge_indicator: index out of range");
  return (r >= text_len || s >= text_len) ? 1 : 0;
}

Tensor apply_mask(const Tensor& attention, int keep, int text_len) {
  const int c = attention.cols();
  if (attention.rows() != c)
    throw std::invalid_argument("apply_mask: attention must be square");
  if (keep == 1 || text_len == c) return attention;

  const int t = text_len;
  // Zero every edge touching an image position, then restore row
  // stochasticity: text rows renormalize over text columns (restricted
  // softmax), image rows become uniform over the image self-block.
  std::vector<double> cut(static_cast<std::size_t>(c) * c, 0.0);
  for (int r = 0; r < c; ++r)
    for (int s = 0; s < c; ++s)
      if (image_edge_indicator(r, s, t, c)) cut[static_cast<std::size_t>(r) * c + s] = 1.0;
  auto zeroed = masked_fill(attention, cut, 0.0);
  auto fallback = Tensor::zeros({c, c});
  for (int r = t; r < c; ++r)
    for (int s = t; s < c; ++s)
      fallback.data()[static_cast<std::size_t>(r) * c + s] = 1.0 / (c - t);
  return normalize_rows_or(zeroed, fallback);
}

}  // namespace cfsum
