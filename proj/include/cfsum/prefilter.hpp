#pragma once

#include "cfsum/tensor.hpp"

namespace cfsum {

struct FilterDecision {
  double consistency = 0.0;  // cosine in [-1, 1]
  int keep = 1;              // 1 = image kept, 0 = image cut
  double alpha = 0.65;
};

// Pooled-feature cosine between the uni-modal and bi-modal streams,
// thresholded at alpha. Sign is read as a {0,1} step with step(0) = 1.
// A zero-norm pooled vector yields consistency 0 (filtered).
FilterDecision consistency(const Tensor& uni_features, const Tensor& bi_features,
                           double alpha);

// 1 iff the (r, s) attention edge touches an image position.
int image_edge_indicator(int r, int s, int text_len, int total_len);

// Corrected attention: when keep = 0, image-touching mass is cut, text rows
// are renormalized over text columns, and zeroed image rows fall back to
// uniform attention over the image block. Identity when keep = 1.
Tensor apply_mask(const Tensor& attention, int keep, int text_len);

}  // namespace cfsum
