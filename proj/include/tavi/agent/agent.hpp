#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "tavi/env/render.hpp"
#include "tavi/env/sim.hpp"
#include "tavi/env/tactile.hpp"
#include "tavi/env/trajectory.hpp"
#include "tavi/numerics/mlp.hpp"
#include "tavi/numerics/params.hpp"
#include "tavi/numerics/rng.hpp"
#include "tavi/numerics/tensor.hpp"
#include "tavi/ot/ot.hpp"
#include "tavi/repr/repr.hpp"

namespace tavi::agent {

using numerics::MlpArch;
using numerics::ParamSet;
using numerics::RngStream;
using numerics::Tensor;

// Which latents the offset policy consumes.
enum class Modality { visual_tactile, visual_only, tactile_only };

Modality modality_from_name(std::string_view name);
std::string modality_name(Modality m);
std::size_t policy_input_dim(Modality m);

// Per-dimension switch over the 8 action dims. Disabled dims always pass the
// base action through untouched.
struct ActionMask {
  std::array<bool, env::kActionDim> enabled;

  ActionMask() { enabled.fill(true); }
  std::size_t count_enabled() const;
  // At least one dim must stay enabled for the offset policy to train.
  void validate() const;
};

struct AgentConfig {
  double lr = 1e-4;
  double std_schedule = 0.1;  // exploration and target-smoothing noise scale
  double std_clip = 0.3;      // hard bound on any injected noise sample
  double tau = 1e-2;          // critic target soft-update rate
  int actor_period = 4;
  int critic_period = 2;
  int target_period = 4;
  std::size_t batch = 256;
  std::size_t replay_capacity = 150000;
  int exploration_steps = 1000;
  int aug_pad = 4;
  double discount = 0.99;
  // Offset bound per action dim, matching the simulator's per-step clamps so
  // the residual can span the full action range.
  std::array<double, env::kActionDim> offset_limit = {
      env::kArmStepLimit,   env::kArmStepLimit,   env::kJointStepLimit, env::kJointStepLimit,
      env::kJointStepLimit, env::kJointStepLimit, env::kJointStepLimit, env::kJointStepLimit};
  ot::FrameMatchConfig frame_match;

  void validate() const;
};

// Exact-key serialization: unknown keys are a ConfigError on the way in,
// missing keys keep their defaults.
nlohmann::json agent_config_to_json(const AgentConfig& cfg);
AgentConfig agent_config_from_json(const nlohmann::json& j);

// Mean-reverting exploration noise: x <- x + theta * (0 - x) + sigma * xi
// with xi standard normal per dim. The state is kept unclipped so the
// recursion's stationary statistics hold; act() clips the applied sample.
struct OUNoise {
  std::array<double, env::kActionDim> x{};
  double theta = 0.15;
  double sigma = 0.1;
};

// Advances the state by one step and returns it. sigma < 0 or theta outside
// [0, 1] is a ConfigError. Consumes one normal draw per dim.
std::array<double, env::kActionDim> ou_step(OUNoise& noise, RngStream& rng);
void ou_reset(OUNoise& noise);

// One stored environment transition. Rasters stay raw so every update can
// re-augment them before encoding; the offset is the normalized masked
// residual in [-1, 1] per dim.
struct Transition {
  std::vector<std::uint8_t> pix, next_pix;
  std::array<double, env::kTactileDim> tactile{}, next_tactile{};
  std::array<double, env::kActionDim> offset{};
  double reward = 0.0;
  bool done = false;
};

// Fixed-capacity ring. Pushes overwrite the oldest entry once full; sampling
// is uniform with replacement and fully determined by the stream.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(Transition t);
  std::vector<std::size_t> sample_indices(std::size_t n, RngStream& rng) const;
  const Transition& at(std::size_t i) const { return data_[i]; }
  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }

 private:
  std::vector<Transition> data_;
  std::size_t next_ = 0;
  std::size_t capacity_;
};

// Actor, critic, and the critic's target copy. The actor's output layer is
// zero-initialized so the residual policy starts as an exact no-op.
struct PolicyParams {
  Modality modality = Modality::visual_tactile;
  MlpArch actor_arch;
  ParamSet actor;
  MlpArch critic_arch;
  ParamSet critic;
  ParamSet critic_target;
};

PolicyParams init_policy_params(Modality m, const RngStream& rng);
void save_policy_params(const std::string& path, const PolicyParams& params);
PolicyParams load_policy_params(const std::string& path);

// The demo action at step t, clamped to the final action past the end. The
// recorded demo terminates in a zero action, so a clamped base policy holds
// still once the demo is exhausted.
env::Action base_policy(const env::Trajectory& demo, int t);

// Latent the policy sees for one frame, assembled per modality. Throws
// ConfigError when the modality needs an encoder that was never trained.
Tensor policy_input_latent(const repr::EncoderParams& enc, Modality m,
                           const env::VisualObs& obs, const env::TactileReading& tactile);

enum class ActPhase {
  noise_only,  // before exploration ends: offset is pure noise
  train,       // actor offset plus noise
  eval         // actor offset only
};

struct ActResult {
  env::Action action{};                              // base + masked offset
  std::array<double, env::kActionDim> offset{};      // normalized, post-mask
};

// Residual action: base_policy(demo, t) plus the masked, limit-scaled
// offset. Noise samples are clipped to +-std_clip, the combined normalized
// offset to +-1, so |action - base| never exceeds the per-dim limit.
ActResult act(const PolicyParams& policy, const Tensor& latent, const env::Trajectory& demo,
              int t, const ActionMask& mask, OUNoise& noise, RngStream& rng, ActPhase phase,
              const AgentConfig& cfg);

// Replicate-edge pad followed by a random crop back to the original size.
// Draws the row shift then the column shift; pad 0 returns the input
// untouched without consuming draws.
env::VisualObs random_shift_aug(const env::VisualObs& obs, int pad, RngStream& rng);

struct RelabelResult {
  std::vector<Transition> transitions;
  ot::TrajectoryReward reward;
};

// Scores a finished episode against the expert demo with the transport
// reward over the configured modality's latents, then turns it into replay
// transitions. The transition from frame t to t+1 carries the arrived
// frame's reward; offsets are recovered as (action - base) / limit on
// enabled dims. Rewards are never positive.
RelabelResult relabel_episode(const env::Trajectory& episode, const env::Trajectory& expert,
                              const repr::EncoderParams& enc, Modality modality,
                              const ActionMask& mask, const AgentConfig& cfg,
                              ot::CostMetric metric = ot::CostMetric::cosine,
                              const ot::SinkhornConfig& solver = {});

struct UpdateDiag {
  bool ran = false;  // false while the buffer is short or exploration lasts
  bool critic_step = false;
  bool actor_step = false;
  bool target_step = false;
  double critic_loss = std::numeric_limits<double>::quiet_NaN();
  double actor_loss = std::numeric_limits<double>::quiet_NaN();
};

// One scheduler tick. Steps are 1-indexed; the critic trains every
// critic_period steps, the actor every actor_period, the target copy
// soft-updates every target_period. Latents are recomputed from freshly
// augmented rasters each time with the encoders frozen.
UpdateDiag update(ReplayBuffer& buffer, PolicyParams& policy, const repr::EncoderParams& enc,
                  const AgentConfig& cfg, const ActionMask& mask, int step, RngStream& rng);

struct TrainRow {
  int episode = 0;
  int env_steps = 0;
  double total_reward = 0.0;
  bool success = false;
  double actor_loss = std::numeric_limits<double>::quiet_NaN();
  double critic_loss = std::numeric_limits<double>::quiet_NaN();
};

// episode,env_steps,total_reward,success,actor_loss,critic_loss rows.
void write_train_log(const std::string& path, const std::vector<TrainRow>& rows);

}  // namespace tavi::agent
