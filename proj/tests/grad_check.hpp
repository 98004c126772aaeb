#pragma once

// Central finite-difference oracle used to check analytic gradients.

#include <cmath>
#include <functional>
#include <vector>

#include "cfsum/tensor.hpp"

namespace cfsum::testing {

// Max relative error between analytic grad and central differences over
// all entries of all inputs. f must rebuild the graph from the inputs.
inline double grad_max_rel_error(
    std::vector<Tensor> inputs,
    const std::function<Tensor(const std::vector<Tensor>&)>& f,
    double h = 1e-5) {
  Tensor loss = f(inputs);
  for (auto& in : inputs) in.zero_grad();
  backward(loss);
  double worst = 0.0;
  for (auto& in : inputs) {
    for (std::size_t i = 0; i < in.size(); ++i) {
      const double orig = in.data()[i];
      in.data()[i] = orig + h;
      const double up = f(inputs).item();
      in.data()[i] = orig - h;
      const double dn = f(inputs).item();
      in.data()[i] = orig;
      const double num = (up - dn) / (2.0 * h);
      const double ana = in.grad()[i];
      const double denom = std::max({std::abs(num), std::abs(ana), 1e-6});
      worst = std::max(worst, std::abs(num - ana) / denom);
    }
  }
  return worst;
}

}  // namespace cfsum::testing
