#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "tavi/numerics/graph.hpp"
#include "tavi/numerics/params.hpp"
#include "tavi/numerics/rng.hpp"
#include "tavi/numerics/tensor.hpp"

namespace tavi::numerics {

enum class Activation { linear, relu, tanh };

Activation activation_from_name(std::string_view name);
std::string activation_name(Activation act);

struct LayerSpec {
  std::size_t width = 0;
  Activation act = Activation::linear;
};

// Fully connected stack: input_dim -> layers[0].width -> ... Parameters are
// stored under "<prefix>w<i>" / "<prefix>b<i>".
struct MlpArch {
  std::size_t input_dim = 0;
  std::vector<LayerSpec> layers;

  std::size_t output_dim() const {
    return layers.empty() ? input_dim : layers.back().width;
  }
};

// Defines weights and biases in `params`. Weights are uniform in
// +-1/sqrt(fan_in); biases start at zero.
void init_mlp(ParamSet& params, const MlpArch& arch, std::string_view prefix, RngStream& rng);

// Overwrites the last layer's weight and bias with zeros; used for actors
// that must start as an exact no-op.
void zero_output_layer(ParamSet& params, const MlpArch& arch, std::string_view prefix);

// Forward pass with the computation graph retained for backward.
// input is [batch, input_dim]; returns [batch, output_dim].
Var forward_mlp(Graph& g, ParamSet& params, const MlpArch& arch, std::string_view prefix, Var input);

// Same math without graph bookkeeping, for inference and target networks.
Tensor forward_mlp_inference(const ParamSet& params, const MlpArch& arch, std::string_view prefix,
                             const Tensor& input);

}  // namespace tavi::numerics
