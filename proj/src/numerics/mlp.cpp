#include "tavi/numerics/mlp.hpp"

#include <cmath>

#include "tavi/errors.hpp"

namespace tavi::numerics {

Activation activation_from_name(std::string_view name) {
  if (name == "linear") return Activation::linear;
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  throw ConfigError("unknown activation: " + std::string(name));
}

std::string activation_name(Activation act) {
  switch (act) {
    case Activation::linear: return "linear";
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
  }
  throw ConfigError("unknown activation enum");
}

namespace {

std::string wname(std::string_view prefix, std::size_t i) {
  return std::string(prefix) + "w" + std::to_string(i);
}
std::string bname(std::string_view prefix, std::size_t i) {
  return std::string(prefix) + "b" + std::to_string(i);
}

void check_arch(const MlpArch& arch) {
  if (arch.input_dim == 0) throw ConfigError("mlp: input_dim must be positive");
  if (arch.layers.empty()) throw ConfigError("mlp: at least one layer required");
  for (const auto& l : arch.layers) {
    if (l.width == 0) throw ConfigError("mlp: zero-width layer");
  }
}

}  // namespace

void init_mlp(ParamSet& params, const MlpArch& arch, std::string_view prefix, RngStream& rng) {
  check_arch(arch);
  std::size_t fan_in = arch.input_dim;
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    std::size_t width = arch.layers[i].width;
    double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Tensor w({fan_in, width});
    for (std::size_t j = 0; j < w.numel(); ++j) w[j] = rng.uniform(-bound, bound);
    params.def(wname(prefix, i), std::move(w));
    params.def(bname(prefix, i), Tensor({width}));
    fan_in = width;
  }
}

void zero_output_layer(ParamSet& params, const MlpArch& arch, std::string_view prefix) {
  check_arch(arch);
  std::size_t last = arch.layers.size() - 1;
  params.value(wname(prefix, last)).fill(0.0);
  params.value(bname(prefix, last)).fill(0.0);
}

Var forward_mlp(Graph& g, ParamSet& params, const MlpArch& arch, std::string_view prefix, Var input) {
  check_arch(arch);
  if (input.value().rank() != 2 || input.value().cols() != arch.input_dim) {
    throw ShapeError("forward_mlp: input " + input.value().shape_str() + " does not match input_dim " +
                     std::to_string(arch.input_dim));
  }
  Var h = input;
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    Var w = g.param(params, wname(prefix, i));
    Var b = g.param(params, bname(prefix, i));
    h = add_rowvec(matmul(h, w), b);
    switch (arch.layers[i].act) {
      case Activation::linear: break;
      case Activation::relu: h = relu(h); break;
      case Activation::tanh: h = tanh(h); break;
    }
  }
  return h;
}

Tensor forward_mlp_inference(const ParamSet& params, const MlpArch& arch, std::string_view prefix,
                             const Tensor& input) {
  check_arch(arch);
  if (input.rank() != 2 || input.cols() != arch.input_dim) {
    throw ShapeError("forward_mlp_inference: input " + input.shape_str() +
                     " does not match input_dim " + std::to_string(arch.input_dim));
  }
  Tensor h = input;
  std::size_t m = input.rows();
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const Tensor& w = params.value(wname(prefix, i));
    const Tensor& b = params.value(bname(prefix, i));
    std::size_t k = w.rows(), n = w.cols();
    Tensor out({m, n});
    for (std::size_t r = 0; r < m; ++r) {
      const double* hr = h.values().data() + r * k;
      double* orow = out.values().data() + r * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] = b[j];
      for (std::size_t p = 0; p < k; ++p) {
        double hv = hr[p];
        if (hv == 0.0) continue;
        const double* wp = w.values().data() + p * n;
        for (std::size_t j = 0; j < n; ++j) orow[j] += hv * wp[j];
      }
    }
    switch (arch.layers[i].act) {
      case Activation::linear: break;
      case Activation::relu:
        for (double& x : out.values()) x = x > 0.0 ? x : 0.0;
        break;
      case Activation::tanh:
        for (double& x : out.values()) x = std::tanh(x);
        break;
    }
    out.ensure_finite("forward_mlp_inference");
    h = std::move(out);
  }
  return h;
}

}  // namespace tavi::numerics
