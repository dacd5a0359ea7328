#pragma once

#include <functional>
#include <vector>

#include "vitl/tensor.hpp"

namespace vitl {

// Central-difference oracle for reverse-mode gradients. loss_builder must
// rebuild the same deterministic scalar loss on any tape it is given
// (dropout disabled or with a frozen mask). Intended for S = double; finite
// differences are unreliable in single precision.
template <class S>
double finite_diff_check(const std::function<Tensor<S>(Tape<S>&)>& loss_builder,
                         const std::vector<Tensor<S>>& params, double step = 1e-6) {
  // Reverse-mode gradients.
  for (const auto& p : params) p.zero_grad();
  {
    Tape<S> tape;
    auto loss = loss_builder(tape);
    tape.backward(loss);
  }
  std::vector<std::vector<S>> ad_grads;
  ad_grads.reserve(params.size());
  for (const auto& p : params) {
    p.ensure_grad();
    ad_grads.push_back(p.grad());
  }

  auto eval = [&]() -> double {
    Tape<S> tape(false);
    return static_cast<double>(loss_builder(tape).at(0));
  };

  double worst = 0.0;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = const_cast<Tensor<S>&>(params[pi]);
    for (size_t i = 0; i < p.size(); ++i) {
      const S orig = p.at(i);
      p.at(i) = orig + S(step);
      const double f_plus = eval();
      p.at(i) = orig - S(step);
      const double f_minus = eval();
      p.at(i) = orig;
      const double g_fd = (f_plus - f_minus) / (2.0 * step);
      const double g_ad = static_cast<double>(ad_grads[pi][i]);
      const double rel = std::abs(g_ad - g_fd) / (std::abs(g_ad) + std::abs(g_fd) + 1e-12);
      if (rel > worst) worst = rel;
    }
  }
  return worst;
}

}  // namespace vitl
