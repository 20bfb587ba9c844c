#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "tavi/numerics/tensor.hpp"

namespace tavi::numerics {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Named parameter tensors with matching gradient and Adam moment buffers.
// Iteration follows definition order so training loops are deterministic.
class ParamSet {
 public:
  void def(const std::string& name, Tensor init);
  bool has(const std::string& name) const { return entries_.count(name) != 0; }

  Tensor& value(const std::string& name);
  const Tensor& value(const std::string& name) const;
  Tensor& grad(const std::string& name);
  const Tensor& grad(const std::string& name) const;
  Tensor& moment1(const std::string& name);
  const Tensor& moment1(const std::string& name) const;
  Tensor& moment2(const std::string& name);
  const Tensor& moment2(const std::string& name) const;

  // Gradient buffers accumulate across backward passes until cleared here.
  void zero_grads();

  const std::vector<std::string>& names() const { return order_; }
  std::size_t size() const { return order_.size(); }

  std::uint64_t step_count() const { return step_count_; }
  void set_step_count(std::uint64_t t) { step_count_ = t; }

 private:
  struct Entry {
    Tensor value, grad, m, v;
  };
  const Entry& entry(const std::string& name) const;
  Entry& entry(const std::string& name);

  std::vector<std::string> order_;
  std::unordered_map<std::string, Entry> entries_;
  std::uint64_t step_count_ = 0;  // Adam timestep for bias correction
};

// One Adam update over every parameter in the set. Bias-corrected with the
// set's step counter; moments start at zero. Negative lr is a ConfigError.
void adam_step(ParamSet& params, double lr, const AdamConfig& cfg = {});

// target <- tau * source + (1 - tau) * target, elementwise over all params.
// Both sets must hold identical names and shapes.
void soft_update(ParamSet& target, const ParamSet& source, double tau);

}  // namespace tavi::numerics
