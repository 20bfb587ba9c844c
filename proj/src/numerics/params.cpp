#include "tavi/numerics/params.hpp"

#include <cmath>

#include "tavi/errors.hpp"

namespace tavi::numerics {

void ParamSet::def(const std::string& name, Tensor init) {
  if (has(name)) throw ConfigError("param already defined: " + name);
  init.ensure_finite("param init");
  Entry e;
  e.grad = Tensor(init.shape());
  e.m = Tensor(init.shape());
  e.v = Tensor(init.shape());
  e.value = std::move(init);
  entries_.emplace(name, std::move(e));
  order_.push_back(name);
}

const ParamSet::Entry& ParamSet::entry(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ConfigError("unknown param: " + name);
  return it->second;
}

ParamSet::Entry& ParamSet::entry(const std::string& name) {
  return const_cast<Entry&>(static_cast<const ParamSet*>(this)->entry(name));
}

Tensor& ParamSet::value(const std::string& name) { return entry(name).value; }
const Tensor& ParamSet::value(const std::string& name) const { return entry(name).value; }
Tensor& ParamSet::grad(const std::string& name) { return entry(name).grad; }
const Tensor& ParamSet::grad(const std::string& name) const { return entry(name).grad; }
Tensor& ParamSet::moment1(const std::string& name) { return entry(name).m; }
const Tensor& ParamSet::moment1(const std::string& name) const { return entry(name).m; }
Tensor& ParamSet::moment2(const std::string& name) { return entry(name).v; }
const Tensor& ParamSet::moment2(const std::string& name) const { return entry(name).v; }

void ParamSet::zero_grads() {
  for (auto& name : order_) entries_[name].grad.fill(0.0);
}

void adam_step(ParamSet& params, double lr, const AdamConfig& cfg) {
  if (lr < 0.0) throw ConfigError("adam: negative learning rate");
  params.set_step_count(params.step_count() + 1);
  const double t = static_cast<double>(params.step_count());
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (const auto& name : params.names()) {
    Tensor& p = params.value(name);
    const Tensor& g = params.grad(name);
    Tensor& m = params.moment1(name);
    Tensor& v = params.moment2(name);
    for (std::size_t i = 0; i < p.numel(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      double mhat = m[i] / bc1;
      double vhat = v[i] / bc2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
    p.ensure_finite("adam");
  }
}

void soft_update(ParamSet& target, const ParamSet& source, double tau) {
  if (target.names() != source.names()) {
    throw ConfigError("soft_update: parameter sets differ");
  }
  for (const auto& name : target.names()) {
    Tensor& t = target.value(name);
    const Tensor& s = source.value(name);
    if (!t.same_shape(s)) throw ShapeError("soft_update: shape mismatch for " + name);
    for (std::size_t i = 0; i < t.numel(); ++i) {
      t[i] = tau * s[i] + (1.0 - tau) * t[i];
    }
  }
}

}  // namespace tavi::numerics
