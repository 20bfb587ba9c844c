#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "tavi/env/render.hpp"
#include "tavi/env/tactile.hpp"
#include "tavi/env/trajectory.hpp"
#include "tavi/numerics/graph.hpp"
#include "tavi/numerics/mlp.hpp"
#include "tavi/numerics/params.hpp"
#include "tavi/numerics/rng.hpp"
#include "tavi/numerics/tensor.hpp"

namespace tavi::repr {

using numerics::Graph;
using numerics::MlpArch;
using numerics::ParamSet;
using numerics::RngStream;
using numerics::Tensor;
using numerics::Var;

// Latent widths. Rasters are average-pooled 2x2 before the first dense
// layer, so the visual stack sees a 16x16 grid flattened to 256 inputs.
inline constexpr std::size_t kPooledDim = 256;
inline constexpr std::size_t kVisualLatentDim = 32;
inline constexpr std::size_t kTactileLatentDim = 16;

// Which terms the representation loss is built from. `combined` optimizes
// the contrastive term plus the weighted state-change term; the other two
// drop one term entirely (its value is never even computed).
enum class LossVariant { combined, contrastive_only, joint_difference };

LossVariant variant_from_name(std::string_view name);
std::string variant_name(LossVariant v);

struct ReprTrainConfig {
  int gap = 5;            // temporal offset k between anchor and positive
  double lambda_weight = 1.0;
  bool auto_lambda = true;  // calibrate lambda on the first batch instead
  LossVariant variant = LossVariant::combined;
  std::size_t batch = 64;
  int epochs = 40;
  double lr = 1e-3;
  bool log_batches = false;  // record drawn pair indices in the train log
};

// The three trainable pieces: visual encoder, tactile encoder, and the head
// that predicts robot-state change from a pair of visual latents. Each
// ParamSet carries its own optimizer state; the arch structs make encode()
// and checkpointing self-describing.
struct EncoderParams {
  MlpArch visual_arch;
  ParamSet visual;
  MlpArch tactile_arch;
  ParamSet tactile;
  MlpArch delta_arch;
  ParamSet delta;
  // Set by the trainers and preserved through checkpoints, so downstream
  // consumers can reject a modality whose encoder was never trained.
  bool visual_trained = false;
  bool tactile_trained = false;
};

// Fresh parameters for all three networks. Consumes no draws from `rng`
// itself, only from derived child streams, so callers can reproduce the
// exact initialization later from the same parent seed. The encoders' final
// bias starts slightly off zero so an all-zero input still lands away from
// the normalization singularity.
EncoderParams init_encoder_params(const RngStream& rng);

void save_encoder_params(const std::string& path, const EncoderParams& params);
EncoderParams load_encoder_params(const std::string& path);

// 2x2 average pooling of the raster, scaled to [0, 1]. Returns [kPooledDim].
Tensor pool_raster(const env::VisualObs& obs);
// Stacks pooled rasters into [n, kPooledDim].
Tensor pool_rasters(const std::vector<env::VisualObs>& obs);

// Deterministic encoders. Visual and tactile latents come back unit-norm.
// Batch forms take [n, kPooledDim] / [n, kTactileDim] and return [n, d].
Tensor encode_visual(const EncoderParams& params, const env::VisualObs& obs);
Tensor encode_visual_batch(const EncoderParams& params, const Tensor& pooled);
Tensor encode_tactile(const EncoderParams& params, const env::TactileReading& reading);
Tensor encode_tactile_batch(const EncoderParams& params, const Tensor& readings);

// Contrastive loss with similarity exp(x . y). Every anchor is scored
// against its own positive plus the shared negative set, with the positive
// kept in the denominator, so the loss is nonnegative and equals log(n+1)
// when all latents coincide. Graph form for training, plain form for
// evaluation. anchors/positives are [m, d] with paired rows, negatives is
// [n, d] with n >= 1 (ConfigError otherwise).
Var infonce_node(Graph& g, Var anchors, Var positives, Var negatives);
double infonce_loss(const Tensor& anchors, const Tensor& positives, const Tensor& negatives);

// In-batch variant used by the trainers: anchor i scores against all
// positives, its own acting as the positive and the other m-1 as negatives.
// Requires m >= 2.
Var infonce_inbatch_node(Graph& g, Var anchors, Var positives);

// Norm of the state-change residual: || (s_next - s_now) - head(z_now,
// z_next) ||, averaged over the batch. States are [m, state_dim], latents
// [m, d]; the head input is the latent pair concatenated.
Var delta_node(Graph& g, EncoderParams& params, Var s_now, Var s_next, Var z_now, Var z_next);
double delta_loss(const EncoderParams& params, const Tensor& s_now, const Tensor& s_next,
                  const Tensor& z_now, const Tensor& z_next);

// Weight that brings the two loss terms to the same magnitude: l_nce /
// l_delta clamped to [1e-3, 1e3]. A zero l_delta yields 1.0 with a warning
// on stderr instead of a division blowup.
double calibrate_lambda(double l_nce, double l_delta);

struct TrainEpoch {
  int epoch = 0;
  double l_nce = 0.0;    // NaN when the variant never computes the term
  double l_delta = 0.0;  // likewise
  double lambda = 1.0;
};

struct TrainLog {
  std::vector<TrainEpoch> epochs;
  // Pair indices drawn per batch, in draw order; filled only when
  // cfg.log_batches is set. The draw sequence depends on the seed and the
  // dataset size alone, never on the loss variant.
  std::vector<std::vector<std::size_t>> batch_indices;
};

// epoch,l_nce,l_delta,lambda rows with round-trip double formatting.
void write_train_csv(const std::string& path, const TrainLog& log);

// Trains the visual encoder and state-change head on temporal pairs
// (t, t+gap) drawn from the demos, leaving the tactile encoder at its
// initialization. Pairs are shuffled each epoch from a derived stream;
// a trailing batch of fewer than two pairs is dropped since it carries no
// negatives. Any demo shorter than gap+1 steps is a DataError.
EncoderParams train_visual_encoder(const std::vector<env::Trajectory>& demos,
                                   const ReprTrainConfig& cfg, const RngStream& rng,
                                   TrainLog* log = nullptr);

// Trains the tactile encoder with the same temporal contrastive objective
// on the demos' tactile streams. The variant and lambda fields of cfg are
// ignored: there is no state-change head on the tactile side.
EncoderParams train_tactile_encoder(EncoderParams params,
                                    const std::vector<env::Trajectory>& demos,
                                    const ReprTrainConfig& cfg, const RngStream& rng,
                                    TrainLog* log = nullptr);

}  // namespace tavi::repr
