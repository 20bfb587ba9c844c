#include "tavi/agent/agent.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <utility>

#include "tavi/errors.hpp"
#include "tavi/numerics/checkpoint.hpp"
#include "tavi/numerics/graph.hpp"

namespace tavi::agent {

namespace {

using numerics::Graph;
using numerics::Var;

bool uses_visual(Modality m) { return m != Modality::tactile_only; }
bool uses_tactile(Modality m) { return m != Modality::visual_only; }

void check_encoders(const repr::EncoderParams& enc, Modality m) {
  if (uses_visual(m) && !enc.visual_trained) {
    throw ConfigError("modality '" + modality_name(m) + "' needs a trained visual encoder");
  }
  if (uses_tactile(m) && !enc.tactile_trained) {
    throw ConfigError("modality '" + modality_name(m) + "' needs a trained tactile encoder");
  }
}

double clamp_sym(double v, double bound) { return std::clamp(v, -bound, bound); }

}  // namespace

Modality modality_from_name(std::string_view name) {
  if (name == "visual_tactile") return Modality::visual_tactile;
  if (name == "visual_only") return Modality::visual_only;
  if (name == "tactile_only") return Modality::tactile_only;
  throw ConfigError("unknown modality '" + std::string(name) + "'");
}

std::string modality_name(Modality m) {
  switch (m) {
    case Modality::visual_tactile: return "visual_tactile";
    case Modality::visual_only: return "visual_only";
    case Modality::tactile_only: return "tactile_only";
  }
  throw ConfigError("unknown modality value");
}

std::size_t policy_input_dim(Modality m) {
  std::size_t dim = 0;
  if (uses_visual(m)) dim += repr::kVisualLatentDim;
  if (uses_tactile(m)) dim += repr::kTactileLatentDim;
  return dim;
}

std::size_t ActionMask::count_enabled() const {
  return static_cast<std::size_t>(std::count(enabled.begin(), enabled.end(), true));
}

void ActionMask::validate() const {
  if (count_enabled() == 0) {
    throw ConfigError("action mask disables every dimension");
  }
}

void AgentConfig::validate() const {
  if (lr < 0.0) throw ConfigError("lr must be nonnegative");
  if (std_schedule < 0.0) throw ConfigError("std_schedule must be nonnegative");
  if (std_clip < 0.0) throw ConfigError("std_clip must be nonnegative");
  if (tau < 0.0 || tau > 1.0) throw ConfigError("tau must lie in [0, 1]");
  if (actor_period < 1 || critic_period < 1 || target_period < 1) {
    throw ConfigError("update periods must be at least 1");
  }
  if (batch < 1) throw ConfigError("batch must be at least 1");
  if (replay_capacity < batch) {
    throw ConfigError("replay capacity below the batch size can never serve an update");
  }
  if (exploration_steps < 0) throw ConfigError("exploration_steps must be nonnegative");
  if (aug_pad < 0) throw ConfigError("aug_pad must be nonnegative");
  if (discount < 0.0 || discount > 1.0) throw ConfigError("discount must lie in [0, 1]");
  for (double lim : offset_limit) {
    if (lim < 0.0) throw ConfigError("offset limits must be nonnegative");
  }
  if (frame_match.episode_frames < 1 || frame_match.expert_frames < 1) {
    throw ConfigError("frame match window sizes must be at least 1");
  }
}

nlohmann::json agent_config_to_json(const AgentConfig& cfg) {
  nlohmann::json j;
  j["lr"] = cfg.lr;
  j["std_schedule"] = cfg.std_schedule;
  j["std_clip"] = cfg.std_clip;
  j["tau"] = cfg.tau;
  j["actor_period"] = cfg.actor_period;
  j["critic_period"] = cfg.critic_period;
  j["target_period"] = cfg.target_period;
  j["batch"] = cfg.batch;
  j["replay_capacity"] = cfg.replay_capacity;
  j["exploration_steps"] = cfg.exploration_steps;
  j["aug_pad"] = cfg.aug_pad;
  j["discount"] = cfg.discount;
  j["offset_limit"] = cfg.offset_limit;
  j["frame_match"] = {{"episode_frames", cfg.frame_match.episode_frames},
                      {"expert_frames", cfg.frame_match.expert_frames}};
  return j;
}

AgentConfig agent_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("agent config must be a JSON object");
  AgentConfig cfg;
  for (const auto& [key, val] : j.items()) {
    if (key == "lr") {
      cfg.lr = val.get<double>();
    } else if (key == "std_schedule") {
      cfg.std_schedule = val.get<double>();
    } else if (key == "std_clip") {
      cfg.std_clip = val.get<double>();
    } else if (key == "tau") {
      cfg.tau = val.get<double>();
    } else if (key == "actor_period") {
      cfg.actor_period = val.get<int>();
    } else if (key == "critic_period") {
      cfg.critic_period = val.get<int>();
    } else if (key == "target_period") {
      cfg.target_period = val.get<int>();
    } else if (key == "batch") {
      cfg.batch = val.get<std::size_t>();
    } else if (key == "replay_capacity") {
      cfg.replay_capacity = val.get<std::size_t>();
    } else if (key == "exploration_steps") {
      cfg.exploration_steps = val.get<int>();
    } else if (key == "aug_pad") {
      cfg.aug_pad = val.get<int>();
    } else if (key == "discount") {
      cfg.discount = val.get<double>();
    } else if (key == "offset_limit") {
      auto lims = val.get<std::vector<double>>();
      if (lims.size() != cfg.offset_limit.size()) {
        throw ConfigError("offset_limit must list all " +
                          std::to_string(cfg.offset_limit.size()) + " dims");
      }
      std::copy(lims.begin(), lims.end(), cfg.offset_limit.begin());
    } else if (key == "frame_match") {
      if (!val.is_object()) throw ConfigError("frame_match must be a JSON object");
      for (const auto& [fk, fv] : val.items()) {
        if (fk == "episode_frames") {
          cfg.frame_match.episode_frames = fv.get<std::size_t>();
        } else if (fk == "expert_frames") {
          cfg.frame_match.expert_frames = fv.get<std::size_t>();
        } else {
          throw ConfigError("unknown frame_match key '" + fk + "'");
        }
      }
    } else {
      throw ConfigError("unknown agent config key '" + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

std::array<double, env::kActionDim> ou_step(OUNoise& noise, RngStream& rng) {
  if (noise.sigma < 0.0) throw ConfigError("OU sigma must be nonnegative");
  if (noise.theta < 0.0 || noise.theta > 1.0) throw ConfigError("OU theta must lie in [0, 1]");
  for (double& xi : noise.x) {
    xi += noise.theta * (0.0 - xi) + noise.sigma * rng.normal();
  }
  return noise.x;
}

void ou_reset(OUNoise& noise) { noise.x.fill(0.0); }

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("replay capacity must be positive");
}

void ReplayBuffer::push(Transition t) {
  if (data_.size() < capacity_) {
    data_.push_back(std::move(t));
  } else {
    data_[next_] = std::move(t);
    next_ = (next_ + 1) % capacity_;
  }
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t n, RngStream& rng) const {
  if (data_.empty()) throw DataError("cannot sample from an empty replay buffer");
  std::vector<std::size_t> idx(n);
  for (std::size_t& i : idx) i = rng.uniform_index(data_.size());
  return idx;
}

PolicyParams init_policy_params(Modality m, const RngStream& rng) {
  using numerics::Activation;
  PolicyParams p;
  p.modality = m;
  p.actor_arch.input_dim = policy_input_dim(m);
  p.actor_arch.layers = {{64, Activation::relu},
                         {64, Activation::relu},
                         {static_cast<std::size_t>(env::kActionDim), Activation::linear}};
  RngStream actor_rng = rng.derive("init.actor");
  numerics::init_mlp(p.actor, p.actor_arch, "", actor_rng);
  numerics::zero_output_layer(p.actor, p.actor_arch, "");

  p.critic_arch.input_dim = policy_input_dim(m) + env::kActionDim;
  p.critic_arch.layers = {
      {64, Activation::relu}, {64, Activation::relu}, {1, Activation::linear}};
  RngStream critic_rng = rng.derive("init.critic");
  numerics::init_mlp(p.critic, p.critic_arch, "", critic_rng);
  p.critic_target = p.critic;
  return p;
}

void save_policy_params(const std::string& path, const PolicyParams& params) {
  numerics::Checkpoint ckpt;
  ckpt.sections["actor"] = params.actor;
  ckpt.sections["critic"] = params.critic;
  ckpt.sections["critic_target"] = params.critic_target;
  ckpt.meta["kind"] = "policy";
  ckpt.meta["modality"] = modality_name(params.modality);
  ckpt.meta["actor_arch"] = numerics::arch_to_json(params.actor_arch);
  ckpt.meta["critic_arch"] = numerics::arch_to_json(params.critic_arch);
  numerics::save_checkpoint(path, ckpt);
}

PolicyParams load_policy_params(const std::string& path) {
  numerics::Checkpoint ckpt = numerics::load_checkpoint(path);
  if (ckpt.meta.value("kind", "") != "policy") {
    throw DataError(path + " is not a policy checkpoint");
  }
  PolicyParams p;
  p.modality = modality_from_name(ckpt.meta.at("modality").get<std::string>());
  p.actor_arch = numerics::arch_from_json(ckpt.meta.at("actor_arch"));
  p.critic_arch = numerics::arch_from_json(ckpt.meta.at("critic_arch"));
  p.actor = std::move(ckpt.sections.at("actor"));
  p.critic = std::move(ckpt.sections.at("critic"));
  p.critic_target = std::move(ckpt.sections.at("critic_target"));
  return p;
}

env::Action base_policy(const env::Trajectory& demo, int t) {
  if (demo.steps.empty()) throw ConfigError("base policy needs a non-empty demo");
  if (t < 0) throw ConfigError("base policy step index must be nonnegative");
  std::size_t idx = std::min<std::size_t>(static_cast<std::size_t>(t), demo.steps.size() - 1);
  return demo.steps[idx].action;
}

Tensor policy_input_latent(const repr::EncoderParams& enc, Modality m,
                           const env::VisualObs& obs, const env::TactileReading& tactile) {
  check_encoders(enc, m);
  std::vector<double> vals;
  vals.reserve(policy_input_dim(m));
  if (uses_visual(m)) {
    Tensor z = repr::encode_visual(enc, obs);
    vals.insert(vals.end(), z.values().begin(), z.values().end());
  }
  if (uses_tactile(m)) {
    Tensor z = repr::encode_tactile(enc, tactile);
    vals.insert(vals.end(), z.values().begin(), z.values().end());
  }
  return Tensor::vector(std::move(vals));
}

ActResult act(const PolicyParams& policy, const Tensor& latent, const env::Trajectory& demo,
              int t, const ActionMask& mask, OUNoise& noise, RngStream& rng, ActPhase phase,
              const AgentConfig& cfg) {
  std::size_t want = policy_input_dim(policy.modality);
  if (latent.rank() != 1 || latent.numel() != want) {
    throw ShapeError("policy latent must be a vector of length " + std::to_string(want));
  }

  std::array<double, env::kActionDim> raw{};
  if (phase != ActPhase::noise_only) {
    Tensor input({1, want}, latent.values());
    Tensor out = numerics::forward_mlp_inference(policy.actor, policy.actor_arch, "", input);
    for (int d = 0; d < env::kActionDim; ++d) raw[d] = std::tanh(out[d]);
  }
  if (phase != ActPhase::eval) {
    auto sample = ou_step(noise, rng);
    for (int d = 0; d < env::kActionDim; ++d) {
      raw[d] += clamp_sym(sample[d], cfg.std_clip);
    }
  }

  ActResult res;
  res.action = base_policy(demo, t);
  for (int d = 0; d < env::kActionDim; ++d) {
    if (!mask.enabled[d]) continue;
    res.offset[d] = std::clamp(raw[d], -1.0, 1.0);
    double scaled = res.offset[d] * cfg.offset_limit[d];
    if (scaled != 0.0) res.action[d] += scaled;
  }
  return res;
}

env::VisualObs random_shift_aug(const env::VisualObs& obs, int pad, RngStream& rng) {
  if (pad < 0) throw ConfigError("shift augmentation pad must be nonnegative");
  if (obs.pix.size() != static_cast<std::size_t>(obs.h) * obs.w) {
    throw ShapeError("raster buffer does not match its height and width");
  }
  if (pad == 0) return obs;

  int dr = static_cast<int>(rng.uniform_index(2 * pad + 1)) - pad;
  int dc = static_cast<int>(rng.uniform_index(2 * pad + 1)) - pad;
  env::VisualObs out;
  out.h = obs.h;
  out.w = obs.w;
  out.pix.resize(obs.pix.size());
  for (int r = 0; r < obs.h; ++r) {
    for (int c = 0; c < obs.w; ++c) {
      // Reading shifted coordinates with clamping is the crop of the
      // replicate-padded image at offset (dr + pad, dc + pad).
      int sr = std::clamp(r + dr, 0, obs.h - 1);
      int sc = std::clamp(c + dc, 0, obs.w - 1);
      out.pix[r * obs.w + c] = obs.pix[sr * obs.w + sc];
    }
  }
  return out;
}

RelabelResult relabel_episode(const env::Trajectory& episode, const env::Trajectory& expert,
                              const repr::EncoderParams& enc, Modality modality,
                              const ActionMask& mask, const AgentConfig& cfg,
                              ot::CostMetric metric, const ot::SinkhornConfig& solver) {
  if (episode.steps.size() < 2) throw DataError("episode has no transitions to relabel");
  if (expert.steps.empty()) throw DataError("expert demo is empty");
  check_encoders(enc, modality);

  auto latent_seq = [&](const env::Trajectory& traj) {
    ot::LatentSeq seq;
    seq.reserve(traj.steps.size());
    for (const env::TrajStep& step : traj.steps) {
      Tensor z = policy_input_latent(enc, modality, step.obs, step.tactile);
      seq.push_back(z.values());
    }
    return seq;
  };

  RelabelResult res;
  res.reward = ot::trajectory_reward(latent_seq(episode), latent_seq(expert), cfg.frame_match,
                                     metric, solver);

  std::size_t n = episode.steps.size();
  res.transitions.reserve(n - 1);
  for (std::size_t t = 0; t + 1 < n; ++t) {
    Transition tr;
    tr.pix = episode.steps[t].obs.pix;
    tr.next_pix = episode.steps[t + 1].obs.pix;
    tr.tactile = episode.steps[t].tactile.values;
    tr.next_tactile = episode.steps[t + 1].tactile.values;
    env::Action base = base_policy(expert, static_cast<int>(t));
    for (int d = 0; d < env::kActionDim; ++d) {
      if (!mask.enabled[d] || cfg.offset_limit[d] <= 0.0) continue;
      double norm = (episode.steps[t].action[d] - base[d]) / cfg.offset_limit[d];
      tr.offset[d] = std::clamp(norm, -1.0, 1.0);
    }
    tr.reward = res.reward.per_frame[t + 1];
    tr.done = (t + 2 == n);
    res.transitions.push_back(std::move(tr));
  }
  return res;
}

namespace {

// Latents for a sampled batch, recomputed from freshly augmented rasters.
// Augmentation draws go transition by transition, current frame before next.
struct BatchLatents {
  Tensor z;       // [B, input_dim]
  Tensor z_next;
  Tensor offsets; // [B, kActionDim]
  std::vector<double> rewards;
  std::vector<bool> dones;
};

BatchLatents gather_batch(const ReplayBuffer& buffer, const std::vector<std::size_t>& idx,
                          const repr::EncoderParams& enc, Modality modality,
                          const AgentConfig& cfg, RngStream& rng) {
  std::size_t n = idx.size();
  std::vector<env::VisualObs> obs_now, obs_next;
  if (uses_visual(modality)) {
    obs_now.reserve(n);
    obs_next.reserve(n);
  }
  Tensor tac_now({n, static_cast<std::size_t>(env::kTactileDim)});
  Tensor tac_next({n, static_cast<std::size_t>(env::kTactileDim)});
  BatchLatents out;
  out.offsets = Tensor({n, static_cast<std::size_t>(env::kActionDim)});
  out.rewards.resize(n);
  out.dones.resize(n);

  for (std::size_t i = 0; i < n; ++i) {
    const Transition& tr = buffer.at(idx[i]);
    if (uses_visual(modality)) {
      env::VisualObs raw{env::kRasterSize, env::kRasterSize, tr.pix};
      env::VisualObs raw_next{env::kRasterSize, env::kRasterSize, tr.next_pix};
      obs_now.push_back(random_shift_aug(raw, cfg.aug_pad, rng));
      obs_next.push_back(random_shift_aug(raw_next, cfg.aug_pad, rng));
    }
    for (int k = 0; k < env::kTactileDim; ++k) {
      tac_now.at(i, k) = tr.tactile[k];
      tac_next.at(i, k) = tr.next_tactile[k];
    }
    for (int d = 0; d < env::kActionDim; ++d) out.offsets.at(i, d) = tr.offset[d];
    out.rewards[i] = tr.reward;
    out.dones[i] = tr.done;
  }

  auto assemble = [&](const std::vector<env::VisualObs>& obs, const Tensor& tac) {
    Tensor vis_z, tac_z;
    if (uses_visual(modality)) vis_z = repr::encode_visual_batch(enc, repr::pool_rasters(obs));
    if (uses_tactile(modality)) tac_z = repr::encode_tactile_batch(enc, tac);
    if (!uses_tactile(modality)) return vis_z;
    if (!uses_visual(modality)) return tac_z;
    Tensor z({n, vis_z.cols() + tac_z.cols()});
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < vis_z.cols(); ++c) z.at(i, c) = vis_z.at(i, c);
      for (std::size_t c = 0; c < tac_z.cols(); ++c) z.at(i, vis_z.cols() + c) = tac_z.at(i, c);
    }
    return z;
  };
  out.z = assemble(obs_now, tac_now);
  out.z_next = assemble(obs_next, tac_next);
  return out;
}

}  // namespace

UpdateDiag update(ReplayBuffer& buffer, PolicyParams& policy, const repr::EncoderParams& enc,
                  const AgentConfig& cfg, const ActionMask& mask, int step, RngStream& rng) {
  cfg.validate();
  if (step < 1) throw ConfigError("update steps are 1-indexed");

  UpdateDiag diag;
  if (buffer.size() < cfg.batch || step <= cfg.exploration_steps) return diag;
  diag.ran = true;

  bool do_critic = step % cfg.critic_period == 0;
  bool do_actor = step % cfg.actor_period == 0;
  bool do_target = step % cfg.target_period == 0;

  if (do_critic || do_actor) {
    check_encoders(enc, policy.modality);
    std::vector<std::size_t> idx = buffer.sample_indices(cfg.batch, rng);
    BatchLatents batch = gather_batch(buffer, idx, enc, policy.modality, cfg, rng);
    std::size_t n = cfg.batch;
    std::size_t adim = static_cast<std::size_t>(env::kActionDim);

    if (do_critic) {
      // Target action: the online actor's output smoothed with clipped
      // Gaussian noise, squashed and masked like the behavior policy.
      Tensor a_next = numerics::forward_mlp_inference(policy.actor, policy.actor_arch, "",
                                                      batch.z_next);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t d = 0; d < adim; ++d) {
          double eps = clamp_sym(rng.normal() * cfg.std_schedule, cfg.std_clip);
          double v = std::clamp(std::tanh(a_next.at(i, d)) + eps, -1.0, 1.0);
          a_next.at(i, d) = mask.enabled[d] ? v : 0.0;
        }
      }
      Tensor target_in({n, policy.critic_arch.input_dim});
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < batch.z_next.cols(); ++c) {
          target_in.at(i, c) = batch.z_next.at(i, c);
        }
        for (std::size_t d = 0; d < adim; ++d) {
          target_in.at(i, batch.z_next.cols() + d) = a_next.at(i, d);
        }
      }
      Tensor q_next = numerics::forward_mlp_inference(policy.critic_target, policy.critic_arch,
                                                      "", target_in);
      Tensor y({n, 1});
      for (std::size_t i = 0; i < n; ++i) {
        double cont = batch.dones[i] ? 0.0 : cfg.discount * q_next.at(i, 0);
        y.at(i, 0) = batch.rewards[i] + cont;
      }

      Graph g;
      Var zin = g.input(batch.z);
      Var ain = g.input(batch.offsets);
      Var q = numerics::forward_mlp(g, policy.critic, policy.critic_arch, "",
                                    numerics::concat_cols(zin, ain));
      Var d = numerics::sub(q, g.input(y));
      Var loss = numerics::mean(numerics::mul(d, d));
      g.backward(loss);
      numerics::adam_step(policy.critic, cfg.lr);
      policy.critic.zero_grads();
      diag.critic_loss = loss.value()[0];
      diag.critic_step = true;
    }

    if (do_actor) {
      Tensor mask_rows({n, adim});
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t d = 0; d < adim; ++d) mask_rows.at(i, d) = mask.enabled[d] ? 1.0 : 0.0;
      }
      Graph g;
      Var zin = g.input(batch.z);
      Var a = numerics::mul(
          numerics::tanh(numerics::forward_mlp(g, policy.actor, policy.actor_arch, "", zin)),
          g.input(mask_rows));
      Var q = numerics::forward_mlp(g, policy.critic, policy.critic_arch, "",
                                    numerics::concat_cols(zin, a));
      Var loss = numerics::scale(numerics::mean(q), -1.0);
      g.backward(loss);
      numerics::adam_step(policy.actor, cfg.lr);
      policy.actor.zero_grads();
      // The actor pass backpropagates through the critic too; drop those
      // gradients so the next critic step starts clean.
      policy.critic.zero_grads();
      diag.actor_loss = loss.value()[0];
      diag.actor_step = true;
    }
  }

  if (do_target) {
    numerics::soft_update(policy.critic_target, policy.critic, cfg.tau);
    diag.target_step = true;
  }
  return diag;
}

void write_train_log(const std::string& path, const std::vector<TrainRow>& rows) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out << "episode,env_steps,total_reward,success,actor_loss,critic_loss\n";
  for (const TrainRow& r : rows) {
    out << r.episode << ',' << r.env_steps << ',' << numerics::format_double(r.total_reward)
        << ',' << (r.success ? 1 : 0) << ',' << numerics::format_double(r.actor_loss) << ','
        << numerics::format_double(r.critic_loss) << '\n';
  }
}

}  // namespace tavi::agent
