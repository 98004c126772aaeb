#include "cfsum/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace cfsum {

namespace {

thread_local bool g_grad_enabled = true;

std::size_t shape_size(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor: non-positive dimension");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_str(const std::vector<int>& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

[[noreturn]] void shape_error(const std::string& op, const Tensor& a, const Tensor& b) {
  throw std::invalid_argument("op " + op + ": shape mismatch " +
                              shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

// Node for an op result. Tracks the graph only while grad mode is on.
Tensor make_result(std::vector<int> shape, std::vector<double> values,
                   std::vector<TensorNodePtr> parents,
                   std::function<void(TensorNode&)> backward_fn) {
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->values = std::move(values);
  if (g_grad_enabled) {
    bool needs = false;
    for (const auto& p : parents) needs = needs || (p && p->needs_grad);
    if (needs) {
      n->needs_grad = true;
      n->grad.assign(n->values.size(), 0.0);
      n->parents = std::move(parents);
      n->backward_fn = std::move(backward_fn);
    }
  }
  return Tensor(n);
}

void check_matrix(const Tensor& a, const char* op) {
  if (a.shape().size() > 2)
    throw std::invalid_argument(std::string("op ") + op + ": expects rank <= 2, got " +
                                shape_str(a.shape()));
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

// ---- Tensor -----------------------------------------------------------

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(std::vector<int> shape, double v, bool requires_grad) {
  auto n = std::make_shared<TensorNode>();
  n->values.assign(shape_size(shape), v);
  n->shape = std::move(shape);
  n->requires_grad = n->needs_grad = requires_grad;
  if (requires_grad) n->grad.assign(n->values.size(), 0.0);
  return Tensor(n);
}

Tensor Tensor::from(std::vector<double> values, std::vector<int> shape,
                    bool requires_grad) {
  if (values.size() != shape_size(shape))
    throw std::invalid_argument("tensor: values length " + std::to_string(values.size()) +
                                " does not match shape " + shape_str(shape));
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->values = std::move(values);
  n->requires_grad = n->needs_grad = requires_grad;
  if (requires_grad) n->grad.assign(n->values.size(), 0.0);
  return Tensor(n);
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return from({v}, {1}, requires_grad);
}

Tensor Tensor::rand_uniform(std::vector<int> shape, double bound, Rng& rng,
                            bool requires_grad) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> vals(shape_size(shape));
  for (auto& v : vals) v = dist(rng);
  return from(std::move(vals), std::move(shape), requires_grad);
}

int Tensor::rows() const {
  return node_->shape.empty() ? 1 : node_->shape[0];
}

int Tensor::cols() const {
  const auto& s = node_->shape;
  if (s.size() >= 2) return s[1];
  return s.empty() ? 1 : s[0];
}

double Tensor::item() const {
  if (size() != 1) throw std::invalid_argument("item(): tensor is not scalar");
  return node_->values[0];
}

double Tensor::operator()(int r, int c) const {
  return node_->values[static_cast<std::size_t>(r) * cols() + c];
}

void Tensor::zero_grad() {
  std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const {
  auto n = std::make_shared<TensorNode>();
  n->shape = node_->shape;
  n->values = node_->values;
  return Tensor(n);
}

// ---- ops --------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_matrix(a, "matmul");
  check_matrix(b, "matmul");
  const int m = a.rows(), k = a.cols(), k2 = b.rows(), n = b.cols();
  if (a.shape().size() < 2 || b.shape().size() < 2 || k != k2)
    shape_error("matmul", a, b);
  std::vector<double> out(static_cast<std::size_t>(m) * n, 0.0);
  const auto& av = a.data();
  const auto& bv = b.data();
  for (int i = 0; i < m; ++i) {
    for (int p = 0; p < k; ++p) {
      const double aip = av[static_cast<std::size_t>(i) * k + p];
      if (aip == 0.0) continue;
      const std::size_t bo = static_cast<std::size_t>(p) * n;
      const std::size_t oo = static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) out[oo + j] += aip * bv[bo + j];
    }
  }
  auto an = a.node(), bn = b.node();
  return make_result({m, n}, std::move(out), {an, bn}, [an, bn, m, k, n](TensorNode& self) {
    if (an->needs_grad) {
      for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
          double acc = 0.0;
          const std::size_t go = static_cast<std::size_t>(i) * n;
          const std::size_t bo = static_cast<std::size_t>(p) * n;
          for (int j = 0; j < n; ++j) acc += self.grad[go + j] * bn->values[bo + j];
          an->grad[static_cast<std::size_t>(i) * k + p] += acc;
        }
    }
    if (bn->needs_grad) {
      for (int i = 0; i < m; ++i) {
        const std::size_t go = static_cast<std::size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
          const double aip = an->values[static_cast<std::size_t>(i) * k + p];
          if (aip == 0.0) continue;
          const std::size_t bo = static_cast<std::size_t>(p) * n;
          for (int j = 0; j < n; ++j) bn->grad[bo + j] += aip * self.grad[go + j];
        }
      }
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("add", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value(i) + b.value(i);
  auto an = a.node(), bn = b.node();
  return make_result(a.shape(), std::move(out), {an, bn}, [an, bn](TensorNode& self) {
    if (an->needs_grad)
      for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
    if (bn->needs_grad)
      for (std::size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] += self.grad[i];
  });
}

Tensor add_rowvec(const Tensor& a, const Tensor& b) {
  const int m = a.rows(), n = a.cols();
  if (a.shape().size() != 2 || static_cast<int>(b.size()) != n)
    shape_error("add_rowvec", a, b);
  std::vector<double> out(a.size());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out[static_cast<std::size_t>(i) * n + j] = a(i, j) + b.value(j);
  auto an = a.node(), bn = b.node();
  return make_result(a.shape(), std::move(out), {an, bn}, [an, bn, m, n](TensorNode& self) {
    if (an->needs_grad)
      for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
    if (bn->needs_grad)
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
          bn->grad[j] += self.grad[static_cast<std::size_t>(i) * n + j];
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("sub", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value(i) - b.value(i);
  auto an = a.node(), bn = b.node();
  return make_result(a.shape(), std::move(out), {an, bn}, [an, bn](TensorNode& self) {
    if (an->needs_grad)
      for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
    if (bn->needs_grad)
      for (std::size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] -= self.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("mul", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value(i) * b.value(i);
  auto an = a.node(), bn = b.node();
  return make_result(a.shape(), std::move(out), {an, bn}, [an, bn](TensorNode& self) {
    if (an->needs_grad)
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        an->grad[i] += self.grad[i] * bn->values[i];
    if (bn->needs_grad)
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        bn->grad[i] += self.grad[i] * an->values[i];
  });
}

Tensor scale(const Tensor& a, double c) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value(i) * c;
  auto an = a.node();
  return make_result(a.shape(), std::move(out), {an}, [an, c](TensorNode& self) {
    if (an->needs_grad)
      for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += c * self.grad[i];
  });
}

Tensor transpose(const Tensor& a) {
  if (a.shape().size() != 2) throw std::invalid_argument("transpose: expects rank 2");
  const int m = a.rows(), n = a.cols();
  std::vector<double> out(a.size());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out[static_cast<std::size_t>(j) * m + i] = a(i, j);
  auto an = a.node();
  return make_result({n, m}, std::move(out), {an}, [an, m, n](TensorNode& self) {
    if (!an->needs_grad) return;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        an->grad[static_cast<std::size_t>(i) * n + j] +=
            self.grad[static_cast<std::size_t>(j) * m + i];
  });
}

Tensor reshape(const Tensor& a, std::vector<int> shape) {
  if (shape_size(shape) != a.size())
    throw std::invalid_argument("reshape: element count mismatch for " +
                                shape_str(a.shape()) + " -> " + shape_str(shape));
  auto an = a.node();
  std::vector<double> out = a.data();
  return make_result(std::move(shape), std::move(out), {an}, [an](TensorNode& self) {
    if (!an->needs_grad) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: empty input");
  const int n = parts[0].cols();
  int m = 0;
  std::vector<double> out;
  std::vector<TensorNodePtr> parents;
  for (const auto& p : parts) {
    if (p.shape().size() != 2 || p.cols() != n) shape_error("concat_rows", parts[0], p);
    m += p.rows();
    out.insert(out.end(), p.data().begin(), p.data().end());
    parents.push_back(p.node());
  }
  auto ps = parents;
  return make_result({m, n}, std::move(out), std::move(parents), [ps](TensorNode& self) {
    std::size_t off = 0;
    for (const auto& p : ps) {
      if (p->needs_grad)
        for (std::size_t i = 0; i < p->values.size(); ++i)
          p->grad[i] += self.grad[off + i];
      off += p->values.size();
    }
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: empty input");
  const int m = parts[0].rows();
  int n = 0;
  for (const auto& p : parts) {
    if (p.shape().size() != 2 || p.rows() != m) shape_error("concat_cols", parts[0], p);
    n += p.cols();
  }
  std::vector<double> out(static_cast<std::size_t>(m) * n);
  int coff = 0;
  std::vector<TensorNodePtr> parents;
  for (const auto& p : parts) {
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < p.cols(); ++j)
        out[static_cast<std::size_t>(i) * n + coff + j] = p(i, j);
    coff += p.cols();
    parents.push_back(p.node());
  }
  auto ps = parents;
  return make_result({m, n}, std::move(out), std::move(parents), [ps, m, n](TensorNode& self) {
    int coff2 = 0;
    for (const auto& p : ps) {
      const int pc = p->shape[1];
      if (p->needs_grad)
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < pc; ++j)
            p->grad[static_cast<std::size_t>(i) * pc + j] +=
                self.grad[static_cast<std::size_t>(i) * n + coff2 + j];
      coff2 += pc;
    }
  });
}

Tensor slice_rows(const Tensor& a, int r0, int r1) {
  const int m = a.rows(), n = a.cols();
  if (a.shape().size() != 2 || r0 < 0 || r1 > m || r0 >= r1)
    throw std::invalid_argument("slice_rows: bad range [" + std::to_string(r0) + "," +
                                std::to_string(r1) + ") for " + std::to_string(m) + " rows");
  std::vector<double> out(a.data().begin() + static_cast<std::size_t>(r0) * n,
                          a.data().begin() + static_cast<std::size_t>(r1) * n);
  auto an = a.node();
  return make_result({r1 - r0, n}, std::move(out), {an}, [an, r0, n](TensorNode& self) {
    if (!an->needs_grad) return;
    const std::size_t off = static_cast<std::size_t>(r0) * n;
    for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[off + i] += self.grad[i];
  });
}

Tensor slice_cols(const Tensor& a, int c0, int c1) {
  const int m = a.rows(), n = a.cols();
  if (a.shape().size() != 2 || c0 < 0 || c1 > n || c0 >= c1)
    throw std::invalid_argument("slice_cols: bad range [" + std::to_string(c0) + "," +
                                std::to_string(c1) + ") for " + std::to_string(n) + " cols");
  const int w = c1 - c0;
  std::vector<double> out(static_cast<std::size_t>(m) * w);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < w; ++j) out[static_cast<std::size_t>(i) * w + j] = a(i, c0 + j);
  auto an = a.node();
  return make_result({m, w}, std::move(out), {an}, [an, m, n, c0, w](TensorNode& self) {
    if (!an->needs_grad) return;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < w; ++j)
        an->grad[static_cast<std::size_t>(i) * n + c0 + j] +=
            self.grad[static_cast<std::size_t>(i) * w + j];
  });
}

Tensor embedding_rows(const Tensor& table, const std::vector<int>& ids) {
  if (table.shape().size() != 2) throw std::invalid_argument("embedding_rows: table must be rank 2");
  const int v = table.rows(), n = table.cols();
  std::vector<double> out;
  out.reserve(ids.size() * n);
  for (int id : ids) {
    if (id < 0 || id >= v)
      throw std::invalid_argument("embedding_rows: id " + std::to_string(id) +
                                  " out of range for table with " + std::to_string(v) + " rows");
    out.insert(out.end(), table.data().begin() + static_cast<std::size_t>(id) * n,
               table.data().begin() + static_cast<std::size_t>(id + 1) * n);
  }
  auto tn = table.node();
  auto ids_copy = ids;
  return make_result({static_cast<int>(ids.size()), n}, std::move(out), {tn},
                     [tn, ids_copy, n](TensorNode& self) {
                       if (!tn->needs_grad) return;
                       for (std::size_t i = 0; i < ids_copy.size(); ++i)
                         for (int j = 0; j < n; ++j)
                           tn->grad[static_cast<std::size_t>(ids_copy[i]) * n + j] +=
                               self.grad[i * n + j];
                     });
}

Tensor mean_pool_rows(const Tensor& a) {
  if (a.shape().size() != 2) throw std::invalid_argument("mean_pool_rows: expects rank 2");
  const int m = a.rows(), n = a.cols();
  std::vector<double> out(n, 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out[j] += a(i, j);
  for (int j = 0; j < n; ++j) out[j] /= m;
  auto an = a.node();
  return make_result({n}, std::move(out), {an}, [an, m, n](TensorNode& self) {
    if (!an->needs_grad) return;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        an->grad[static_cast<std::size_t>(i) * n + j] += self.grad[j] / m;
  });
}

Tensor sum(const Tensor& a) {
  double s = std::accumulate(a.data().begin(), a.data().end(), 0.0);
  auto an = a.node();
  return make_result({1}, {s}, {an}, [an](TensorNode& self) {
    if (!an->needs_grad) return;
    for (auto& g : an->grad) g += self.grad[0];
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

Tensor softmax_rows(const Tensor& a) {
  const int n = a.cols();
  const int m = static_cast<int>(a.size()) / n;
  if (n < 1) throw std::invalid_argument("softmax_rows: empty axis");
  std::vector<double> out(a.size());
  for (int i = 0; i < m; ++i) {
    const std::size_t off = static_cast<std::size_t>(i) * n;
    double mx = a.value(off);
    for (int j = 1; j < n; ++j) mx = std::max(mx, a.value(off + j));
    double z = 0.0;
    for (int j = 0; j < n; ++j) {
      out[off + j] = std::exp(a.value(off + j) - mx);
      z += out[off + j];
    }
    for (int j = 0; j < n; ++j) out[off + j] /= z;
  }
  auto an = a.node();
  auto shape = a.shape();
  return make_result(std::move(shape), std::move(out), {an}, [an, m, n](TensorNode& self) {
    if (!an->needs_grad) return;
    for (int i = 0; i < m; ++i) {
      const std::size_t off = static_cast<std::size_t>(i) * n;
      double dot = 0.0;
      for (int j = 0; j < n; ++j) dot += self.grad[off + j] * self.values[off + j];
      for (int j = 0; j < n; ++j)
        an->grad[off + j] += self.values[off + j] * (self.grad[off + j] - dot);
    }
  });
}

Tensor layer_norm_rows(const Tensor& a, const Tensor& gain, const Tensor& bias) {
  constexpr double kEps = 1e-5;
  const int m = a.rows(), n = a.cols();
  if (static_cast<int>(gain.size()) != n || static_cast<int>(bias.size()) != n)
    shape_error("layer_norm_rows", a, gain);
  std::vector<double> out(a.size()), xhat(a.size()), inv_std(m);
  for (int i = 0; i < m; ++i) {
    const std::size_t off = static_cast<std::size_t>(i) * n;
    double mu = 0.0;
    for (int j = 0; j < n; ++j) mu += a.value(off + j);
    mu /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) {
      const double d = a.value(off + j) - mu;
      var += d * d;
    }
    var /= n;
    inv_std[i] = 1.0 / std::sqrt(var + kEps);
    for (int j = 0; j < n; ++j) {
      xhat[off + j] = (a.value(off + j) - mu) * inv_std[i];
      out[off + j] = xhat[off + j] * gain.value(j) + bias.value(j);
    }
  }
  auto an = a.node(), gn = gain.node(), bn = bias.node();
  return make_result(a.shape(), std::move(out), {an, gn, bn},
                     [an, gn, bn, m, n, xhat = std::move(xhat),
                      inv_std = std::move(inv_std)](TensorNode& self) {
                       for (int i = 0; i < m; ++i) {
                         const std::size_t off = static_cast<std::size_t>(i) * n;
                         if (gn->needs_grad)
                           for (int j = 0; j < n; ++j)
                             gn->grad[j] += self.grad[off + j] * xhat[off + j];
                         if (bn->needs_grad)
                           for (int j = 0; j < n; ++j) bn->grad[j] += self.grad[off + j];
                         if (an->needs_grad) {
                           double mean_dx = 0.0, mean_dxx = 0.0;
                           for (int j = 0; j < n; ++j) {
                             const double dxh = self.grad[off + j] * gn->values[j];
                             mean_dx += dxh;
                             mean_dxx += dxh * xhat[off + j];
                           }
                           mean_dx /= n;
                           mean_dxx /= n;
                           for (int j = 0; j < n; ++j) {
                             const double dxh = self.grad[off + j] * gn->values[j];
                             an->grad[off + j] +=
                                 inv_std[i] * (dxh - mean_dx - xhat[off + j] * mean_dxx);
                           }
                         }
                       }
                     });
}

Tensor tanh_op(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(a.value(i));
  auto an = a.node();
  return make_result(a.shape(), std::move(out), {an}, [an](TensorNode& self) {
    if (!an->needs_grad) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      an->grad[i] += self.grad[i] * (1.0 - self.values[i] * self.values[i]);
  });
}

Tensor sigmoid_op(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-a.value(i)));
  auto an = a.node();
  return make_result(a.shape(), std::move(out), {an}, [an](TensorNode& self) {
    if (!an->needs_grad) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      an->grad[i] += self.grad[i] * self.values[i] * (1.0 - self.values[i]);
  });
}

Tensor relu_op(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(0.0, a.value(i));
  auto an = a.node();
  return make_result(a.shape(), std::move(out), {an}, [an](TensorNode& self) {
    if (!an->needs_grad) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      if (an->values[i] > 0.0) an->grad[i] += self.grad[i];
  });
}

Tensor log_op(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(std::max(a.value(i), kProbEps));
  auto an = a.node();
  return make_result(a.shape(), std::move(out), {an}, [an](TensorNode& self) {
    if (!an->needs_grad) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      if (an->values[i] > kProbEps) an->grad[i] += self.grad[i] / an->values[i];
  });
}

Tensor clamp_op(const Tensor& a, double lo, double hi) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(a.value(i), lo, hi);
  auto an = a.node();
  return make_result(a.shape(), std::move(out), {an}, [an, lo, hi](TensorNode& self) {
    if (!an->needs_grad) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      if (an->values[i] > lo && an->values[i] < hi) an->grad[i] += self.grad[i];
  });
}

Tensor cosine(const Tensor& u, const Tensor& v) {
  if (u.size() != v.size()) shape_error("cosine", u, v);
  const std::size_t n = u.size();
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    dot += u.value(i) * v.value(i);
    nu += u.value(i) * u.value(i);
    nv += v.value(i) * v.value(i);
  }
  nu = std::sqrt(nu);
  nv = std::sqrt(nv);
  if (nu == 0.0 || nv == 0.0)
    throw std::invalid_argument("cosine: zero-norm vector");
  const double c = dot / (nu * nv);
  auto un = u.node(), vn = v.node();
  return make_result({1}, {c}, {un, vn}, [un, vn, c, nu, nv, n](TensorNode& self) {
    const double g = self.grad[0];
    for (std::size_t i = 0; i < n; ++i) {
      if (un->needs_grad)
        un->grad[i] += g * (vn->values[i] / (nu * nv) - c * un->values[i] / (nu * nu));
      if (vn->needs_grad)
        vn->grad[i] += g * (un->values[i] / (nu * nv) - c * vn->values[i] / (nv * nv));
    }
  });
}

Tensor masked_fill(const Tensor& a, const std::vector<double>& mask, double value) {
  if (mask.size() != a.size())
    throw std::invalid_argument("masked_fill: mask length does not match tensor");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = mask[i] != 0.0 ? value : a.value(i);
  auto an = a.node();
  auto m = mask;
  return make_result(a.shape(), std::move(out), {an}, [an, m = std::move(m)](TensorNode& self) {
    if (!an->needs_grad) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      if (m[i] == 0.0) an->grad[i] += self.grad[i];
  });
}

Tensor normalize_rows_or(const Tensor& a, const Tensor& fallback) {
  if (a.shape() != fallback.shape()) shape_error("normalize_rows_or", a, fallback);
  const int m = a.rows(), n = a.cols();
  std::vector<double> out(a.size());
  std::vector<double> rowsum(m, 0.0);
  for (int i = 0; i < m; ++i) {
    const std::size_t off = static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) rowsum[i] += a.value(off + j);
    if (rowsum[i] < 1e-300) {
      for (int j = 0; j < n; ++j) out[off + j] = fallback.value(off + j);
    } else {
      for (int j = 0; j < n; ++j) out[off + j] = a.value(off + j) / rowsum[i];
    }
  }
  auto an = a.node();
  return make_result(a.shape(), std::move(out), {an},
                     [an, m, n, rowsum = std::move(rowsum)](TensorNode& self) {
                       if (!an->needs_grad) return;
                       for (int i = 0; i < m; ++i) {
                         if (rowsum[i] < 1e-300) continue;
                         const std::size_t off = static_cast<std::size_t>(i) * n;
                         double dot = 0.0;
                         for (int j = 0; j < n; ++j)
                           dot += self.grad[off + j] * self.values[off + j];
                         for (int j = 0; j < n; ++j)
                           an->grad[off + j] += (self.grad[off + j] - dot) / rowsum[i];
                       }
                     });
}

Tensor dropout(const Tensor& a, double rate, Rng& rng, bool training) {
  if (!training || rate <= 0.0) return a;
  std::bernoulli_distribution keep(1.0 - rate);
  std::vector<double> mask(a.size());
  const double inv = 1.0 / (1.0 - rate);
  for (auto& v : mask) v = keep(rng) ? inv : 0.0;
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value(i) * mask[i];
  auto an = a.node();
  return make_result(a.shape(), std::move(out), {an},
                     [an, mask = std::move(mask)](TensorNode& self) {
                       if (!an->needs_grad) return;
                       for (std::size_t i = 0; i < self.grad.size(); ++i)
                         an->grad[i] += self.grad[i] * mask[i];
                     });
}

// ---- losses -----------------------------------------------------------

Tensor bce_loss(const Tensor& pred, const std::vector<double>& target) {
  if (target.size() != pred.size())
    throw std::invalid_argument("bce_loss: target length does not match prediction");
  const std::size_t n = pred.size();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = std::clamp(pred.value(i), kProbEps, 1.0 - kProbEps);
    total -= target[i] * std::log(p) + (1.0 - target[i]) * std::log(1.0 - p);
  }
  auto pn = pred.node();
  auto t = target;
  return make_result({1}, {total / n}, {pn}, [pn, t = std::move(t), n](TensorNode& self) {
    if (!pn->needs_grad) return;
    const double g = self.grad[0] / n;
    for (std::size_t i = 0; i < n; ++i) {
      const double p = pn->values[i];
      if (p <= kProbEps || p >= 1.0 - kProbEps) continue;
      pn->grad[i] += g * (p - t[i]) / (p * (1.0 - p));
    }
  });
}

Tensor nll_loss(const Tensor& probs, const std::vector<int>& targets) {
  const int n = probs.cols();
  const int m = static_cast<int>(probs.size()) / n;
  if (static_cast<int>(targets.size()) != m)
    throw std::invalid_argument("nll_loss: one target per row expected");
  double total = 0.0;
  for (int i = 0; i < m; ++i) {
    if (targets[i] < 0 || targets[i] >= n)
      throw std::invalid_argument("nll_loss: target id out of range");
    total -= std::log(std::max(probs(i, targets[i]), kProbEps));
  }
  auto pn = probs.node();
  auto t = targets;
  return make_result({1}, {total / m}, {pn}, [pn, t = std::move(t), m, n](TensorNode& self) {
    if (!pn->needs_grad) return;
    const double g = self.grad[0] / m;
    for (int i = 0; i < m; ++i) {
      const std::size_t idx = static_cast<std::size_t>(i) * n + t[i];
      if (pn->values[idx] > kProbEps) pn->grad[idx] -= g / pn->values[idx];
    }
  });
}

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) shape_error("mse_loss", pred, target);
  const std::size_t n = pred.size();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = pred.value(i) - target.value(i);
    total += d * d;
  }
  auto pn = pred.node(), tn = target.node();
  return make_result({1}, {total / n}, {pn, tn}, [pn, tn, n](TensorNode& self) {
    const double g = 2.0 * self.grad[0] / n;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = pn->values[i] - tn->values[i];
      if (pn->needs_grad) pn->grad[i] += g * d;
      if (tn->needs_grad) tn->grad[i] -= g * d;
    }
  });
}

Tensor kl_loss(const Tensor& p, const Tensor& q) {
  if (p.size() != q.size()) shape_error("kl_loss", p, q);
  const std::size_t n = p.size();
  auto check_dist = [n](const Tensor& d, const char* name) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (d.value(i) < -1e-12)
        throw std::invalid_argument(std::string("kl_loss: negative entry in ") + name);
      s += d.value(i);
    }
    if (std::abs(s - 1.0) > 1e-6)
      throw std::invalid_argument(std::string("kl_loss: ") + name +
                                  " does not sum to 1 (sum=" + std::to_string(s) + ")");
  };
  check_dist(p, "p");
  check_dist(q, "q");
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double pi = std::clamp(p.value(i), kProbEps, 1.0);
    const double qi = std::clamp(q.value(i), kProbEps, 1.0);
    if (p.value(i) > 0.0) total += pi * (std::log(pi) - std::log(qi));
  }
  total = std::max(total, 0.0);
  auto pn = p.node(), qn = q.node();
  return make_result({1}, {total}, {pn, qn}, [pn, qn, n](TensorNode& self) {
    const double g = self.grad[0];
    for (std::size_t i = 0; i < n; ++i) {
      const double pi = std::clamp(pn->values[i], kProbEps, 1.0);
      const double qi = std::clamp(qn->values[i], kProbEps, 1.0);
      if (pn->needs_grad && pn->values[i] > kProbEps)
        pn->grad[i] += g * (std::log(pi) - std::log(qi) + 1.0);
      if (qn->needs_grad && qn->values[i] > kProbEps) qn->grad[i] -= g * pi / qi;
    }
  });
}

// ---- backward ---------------------------------------------------------

void backward(const Tensor& loss) {
  if (!loss.is_scalar()) throw std::invalid_argument("backward: loss must be scalar");
  TensorNodePtr root = loss.node();
  if (!root->needs_grad) return;

  // Iterative post-order topological sort over the parent DAG.
  std::vector<TensorNode*> topo;
  std::vector<std::pair<TensorNode*, std::size_t>> stack;
  std::unordered_set<const TensorNode*> seen;
  stack.push_back({root.get(), 0});
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      TensorNode* p = node->parents[idx].get();
      ++idx;
      if (p && p->needs_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      topo.push_back(node);
      stack.pop_back();
    }
  }

  // Intermediate grads are scratch for this sweep; only leaf parameters
  // (requires_grad) accumulate across calls.
  for (auto* n : topo)
    if (!n->requires_grad) std::fill(n->grad.begin(), n->grad.end(), 0.0);
  root->grad[0] += 1.0;
  for (auto it = topo.rbegin(); it != topo.rend(); ++it)
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
}

// ---- Adam -------------------------------------------------------------

Adam::Adam(std::vector<Tensor> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  for (const auto& p : params_) {
    if (!p.requires_grad())
      throw std::invalid_argument("Adam: all parameters must require grad");
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void Adam::step() {
  ++step_count_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_count_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& p = params_[k];
    if (p.grad().size() != p.size())
      throw std::invalid_argument("Adam: parameter has no gradient");
    auto& vals = p.data();
    const auto& g = p.grad();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      m_[k][i] = cfg_.beta1 * m_[k][i] + (1.0 - cfg_.beta1) * g[i];
      v_[k][i] = cfg_.beta2 * v_[k][i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double mhat = m_[k][i] / bc1;
      const double vhat = v_[k][i] / bc2;
      vals[i] -= cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace cfsum
