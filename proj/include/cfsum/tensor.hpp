#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace cfsum {

using Rng = std::mt19937_64;

struct TensorNode;
using TensorNodePtr = std::shared_ptr<TensorNode>;

// Dense f64 value participating in a reverse-mode graph. Row-major.
struct TensorNode {
  std::vector<int> shape;
  std::vector<double> values;
  std::vector<double> grad;  // allocated iff needs_grad
  bool requires_grad = false;
  bool needs_grad = false;  // requires_grad, or downstream of one
  std::vector<TensorNodePtr> parents;
  std::function<void(TensorNode&)> backward_fn;

  std::size_t size() const { return values.size(); }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(TensorNodePtr n) : node_(std::move(n)) {}

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, double v, bool requires_grad = false);
  static Tensor from(std::vector<double> values, std::vector<int> shape,
                     bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);
  // Uniform in [-bound, bound].
  static Tensor rand_uniform(std::vector<int> shape, double bound, Rng& rng,
                             bool requires_grad = true);

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node_->shape; }
  int rows() const;
  int cols() const;
  std::size_t size() const { return node_->values.size(); }
  bool is_scalar() const { return size() == 1; }

  double item() const;
  double value(std::size_t i) const { return node_->values[i]; }
  double operator()(int r, int c) const;
  std::vector<double>& data() { return node_->values; }
  const std::vector<double>& data() const { return node_->values; }

  bool requires_grad() const { return node_->requires_grad; }
  std::vector<double>& grad() { return node_->grad; }
  const std::vector<double>& grad() const { return node_->grad; }
  void zero_grad();

  TensorNodePtr node() const { return node_; }
  // Value copy detached from the graph.
  Tensor detach() const;

 private:
  TensorNodePtr node_;
};

// Scoped switch: while active, ops do not record the graph.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};
bool grad_enabled();

// ---- forward ops ------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);           // same shape
Tensor add_rowvec(const Tensor& a, const Tensor& b);    // [m,n] + [n]
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);           // elementwise
Tensor scale(const Tensor& a, double c);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, std::vector<int> shape);  // same element count
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& a, int r0, int r1);     // [r0, r1)
Tensor slice_cols(const Tensor& a, int c0, int c1);
Tensor embedding_rows(const Tensor& table, const std::vector<int>& ids);
Tensor mean_pool_rows(const Tensor& a);                 // [m,n] -> [n]
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor softmax_rows(const Tensor& a);
Tensor layer_norm_rows(const Tensor& a, const Tensor& gain, const Tensor& bias);
Tensor tanh_op(const Tensor& a);
Tensor sigmoid_op(const Tensor& a);
Tensor relu_op(const Tensor& a);
Tensor log_op(const Tensor& a);                         // input clamped to [1e-12, inf)
Tensor clamp_op(const Tensor& a, double lo, double hi);
Tensor cosine(const Tensor& u, const Tensor& v);        // vectors -> scalar
// out = value where mask != 0, a elsewhere; grad blocked at masked entries.
Tensor masked_fill(const Tensor& a, const std::vector<double>& mask, double value);
// Rows rescaled to sum 1; rows with sum < 1e-300 are replaced by the
// matching row of `fallback` (constant, no grad).
Tensor normalize_rows_or(const Tensor& a, const Tensor& fallback);
Tensor dropout(const Tensor& a, double rate, Rng& rng, bool training);

// ---- losses -----------------------------------------------------------

inline constexpr double kProbEps = 1e-12;

// Mean binary cross-entropy; target is constant 0/1 values.
Tensor bce_loss(const Tensor& pred, const std::vector<double>& target);
// Mean negative log-likelihood of target ids under per-row distributions.
Tensor nll_loss(const Tensor& probs, const std::vector<int>& targets);
Tensor mse_loss(const Tensor& pred, const Tensor& target);
// KL(p || q); both must be distributions (validated within 1e-6).
Tensor kl_loss(const Tensor& p, const Tensor& q);

// ---- backward / optimizer --------------------------------------------

// Reverse-mode sweep from a scalar loss; accumulates into .grad buffers.
void backward(const Tensor& loss);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig cfg);
  // Bias-corrected update from the parameters' current grads.
  void step();
  void zero_grad();
  int64_t step_count() const { return step_count_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  AdamConfig cfg_;
  int64_t step_count_ = 0;
};

}  // namespace cfsum
