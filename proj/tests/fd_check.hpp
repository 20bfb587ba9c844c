#pragma once

// Central finite-difference gradient oracle shared by the unit tests and the
// acceptance suite. The loss callback must be a pure function of the params:
// with_grad=true builds a fresh graph, runs backward, and leaves gradients in
// the set; with_grad=false only evaluates the value.

#include <cmath>
#include <functional>
#include <string>

#include "tavi/numerics/params.hpp"

namespace tavi::testing {

struct FdReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
};

using LossFn = std::function<double(numerics::ParamSet&, bool with_grad)>;

inline FdReport fd_check(numerics::ParamSet& params, const LossFn& loss, double h = 1e-5) {
  params.zero_grads();
  loss(params, true);
  FdReport report;
  for (const auto& name : params.names()) {
    numerics::Tensor& value = params.value(name);
    const numerics::Tensor& grad = params.grad(name);
    for (std::size_t i = 0; i < value.numel(); ++i) {
      double orig = value[i];
      value[i] = orig + h;
      double f_plus = loss(params, false);
      value[i] = orig - h;
      double f_minus = loss(params, false);
      value[i] = orig;
      double fd = (f_plus - f_minus) / (2.0 * h);
      double denom = std::max(std::abs(fd), std::abs(grad[i]));
      if (denom < 1e-10) continue;  // both effectively zero
      double rel = std::abs(fd - grad[i]) / denom;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_param = name;
        report.worst_index = i;
      }
    }
  }
  return report;
}

}  // namespace tavi::testing
