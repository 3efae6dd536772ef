#pragma once

// Central-difference verification of reverse-mode gradients. The loss
// callback must rebuild its trace from the current leaf values on every
// invocation so that perturbing a parameter element is observed.

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "vgnet/tensor.hpp"

namespace vgnet {

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
  std::size_t nonzero_grads = 0;  // guards against a vacuous pass on dead outputs
};

// Compares the analytic gradient of loss_fn() against central differences
// for every element of every named parameter. Relative error:
//   |a - n| / max(|a|, |n|, 1e-8)
inline GradCheckResult grad_check(const std::function<Tensor()>& loss_fn,
                                  std::vector<std::pair<std::string, Tensor>> params,
                                  double h = 1e-5) {
  for (auto& [name, p] : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  Tensor loss = loss_fn();
  backward(loss);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (auto& [name, p] : params) analytic.push_back(p.grad());

  GradCheckResult res;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& p = params[pi].second;
    std::vector<double>& v = p.raw();
    for (std::size_t i = 0; i < v.size(); ++i) {
      double saved = v[i];
      v[i] = saved + h;
      double lp = loss_fn().item();
      v[i] = saved - h;
      double lm = loss_fn().item();
      v[i] = saved;
      double numeric = (lp - lm) / (2.0 * h);
      double a = analytic[pi][i];
      double rel = std::fabs(a - numeric) /
                   std::max({std::fabs(a), std::fabs(numeric), 1e-8});
      ++res.checked;
      if (a != 0.0) ++res.nonzero_grads;
      if (rel > res.max_rel_err) {
        res.max_rel_err = rel;
        res.worst_param = params[pi].first;
        res.worst_index = i;
        res.worst_analytic = a;
        res.worst_numeric = numeric;
      }
    }
  }
  return res;
}

}  // namespace vgnet
