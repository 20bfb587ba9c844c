#include "tavi/harness/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <utility>

#include "tavi/errors.hpp"
#include "tavi/numerics/rng.hpp"
#include "tavi/numerics/tensor.hpp"

namespace tavi::harness {

namespace {

using numerics::RngStream;

constexpr std::size_t kAllFrames = 1000000;  // clamps to any episode length
constexpr std::uint64_t kDemoSeed = 1;       // suite-wide demo fixture seed

double nan_value() { return std::numeric_limits<double>::quiet_NaN(); }

// Symmetric relative gap, stable when one side is (near) zero.
double relative_gap(double a, double b) {
  double scale = std::max(std::abs(a), std::abs(b));
  if (scale < 1e-12) return 0.0;
  return std::abs(a - b) / scale;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path + " for writing");
  return out;
}

nlohmann::json parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path);
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw DataError(path + " is not valid JSON");
  return j;
}

}  // namespace

RewardModality reward_modality_from_name(std::string_view name) {
  if (name == "visual") return RewardModality::visual;
  if (name == "tactile") return RewardModality::tactile;
  if (name == "both") return RewardModality::both;
  throw ConfigError("unknown reward modality '" + std::string(name) + "'");
}

std::string reward_modality_name(RewardModality rm) {
  switch (rm) {
    case RewardModality::visual: return "visual";
    case RewardModality::tactile: return "tactile";
    case RewardModality::both: return "both";
  }
  throw ConfigError("unknown reward modality value");
}

agent::Modality reward_latent_modality(RewardModality rm) {
  switch (rm) {
    case RewardModality::visual: return agent::Modality::visual_only;
    case RewardModality::tactile: return agent::Modality::tactile_only;
    case RewardModality::both: return agent::Modality::visual_tactile;
  }
  throw ConfigError("unknown reward modality value");
}

FrameMode frame_mode_from_name(std::string_view name) {
  if (name == "final_frame") return FrameMode::final_frame;
  if (name == "all_frames") return FrameMode::all_frames;
  throw ConfigError("unknown frame mode '" + std::string(name) + "'");
}

std::string frame_mode_name(FrameMode mode) {
  return mode == FrameMode::final_frame ? "final_frame" : "all_frames";
}

void ExperimentConfig::validate() const {
  (void)env::task_from_name(task);
  if (episodes < 1) throw ConfigError("episodes must be at least 1");
  if (eval_period < 0) throw ConfigError("eval_period must be nonnegative");
  if (stop_success < 0.0) throw ConfigError("stop_success must be nonnegative");
  if (eval_poses < 1) throw ConfigError("eval_poses must be at least 1");
  agent.validate();
}

agent::AgentConfig ExperimentConfig::effective_agent() const {
  agent::AgentConfig out = agent;
  if (frame_mode == FrameMode::all_frames) {
    out.frame_match.episode_frames = kAllFrames;
    out.frame_match.expert_frames = kAllFrames;
  }
  return out;
}

nlohmann::json repr_train_config_to_json(const repr::ReprTrainConfig& cfg) {
  return {{"gap", cfg.gap},
          {"lambda_weight", cfg.lambda_weight},
          {"auto_lambda", cfg.auto_lambda},
          {"variant", repr::variant_name(cfg.variant)},
          {"batch", cfg.batch},
          {"epochs", cfg.epochs},
          {"lr", cfg.lr}};
}

repr::ReprTrainConfig repr_train_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("encoder config must be a JSON object");
  repr::ReprTrainConfig cfg;
  for (const auto& [key, val] : j.items()) {
    if (key == "gap") {
      cfg.gap = val.get<int>();
    } else if (key == "lambda_weight") {
      cfg.lambda_weight = val.get<double>();
    } else if (key == "auto_lambda") {
      cfg.auto_lambda = val.get<bool>();
    } else if (key == "variant") {
      cfg.variant = repr::variant_from_name(val.get<std::string>());
    } else if (key == "batch") {
      cfg.batch = val.get<std::size_t>();
    } else if (key == "epochs") {
      cfg.epochs = val.get<int>();
    } else if (key == "lr") {
      cfg.lr = val.get<double>();
    } else {
      throw ConfigError("unknown encoder config key '" + key + "'");
    }
  }
  return cfg;
}

nlohmann::json experiment_config_to_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["task"] = cfg.task;
  j["seed"] = cfg.seed;
  j["reward_modality"] = reward_modality_name(cfg.reward_modality);
  j["policy_input"] = agent::modality_name(cfg.policy_input);
  j["frame_mode"] = frame_mode_name(cfg.frame_mode);
  j["episodes"] = cfg.episodes;
  j["eval_period"] = cfg.eval_period;
  j["stop_success"] = cfg.stop_success;
  j["eval_poses"] = cfg.eval_poses;
  j["eval_pose_seed"] = cfg.eval_pose_seed;
  j["action_mask"] = cfg.mask.enabled;
  j["agent"] = agent::agent_config_to_json(cfg.agent);
  j["encoder"] = repr_train_config_to_json(cfg.encoder);
  return j;
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
  ExperimentConfig cfg;
  for (const auto& [key, val] : j.items()) {
    if (key == "task") {
      cfg.task = val.get<std::string>();
    } else if (key == "seed") {
      cfg.seed = val.get<std::uint64_t>();
    } else if (key == "reward_modality") {
      cfg.reward_modality = reward_modality_from_name(val.get<std::string>());
    } else if (key == "policy_input") {
      cfg.policy_input = agent::modality_from_name(val.get<std::string>());
    } else if (key == "frame_mode") {
      cfg.frame_mode = frame_mode_from_name(val.get<std::string>());
    } else if (key == "episodes") {
      cfg.episodes = val.get<int>();
    } else if (key == "eval_period") {
      cfg.eval_period = val.get<int>();
    } else if (key == "stop_success") {
      cfg.stop_success = val.get<double>();
    } else if (key == "eval_poses") {
      cfg.eval_poses = val.get<std::size_t>();
    } else if (key == "eval_pose_seed") {
      cfg.eval_pose_seed = val.get<std::uint64_t>();
    } else if (key == "action_mask") {
      auto mask = val.get<std::vector<bool>>();
      if (mask.size() != cfg.mask.enabled.size()) {
        throw ConfigError("action_mask must list all " +
                          std::to_string(cfg.mask.enabled.size()) + " dims");
      }
      std::copy(mask.begin(), mask.end(), cfg.mask.enabled.begin());
    } else if (key == "agent") {
      cfg.agent = agent::agent_config_from_json(val);
    } else if (key == "encoder") {
      cfg.encoder = repr_train_config_from_json(val);
    } else {
      throw ConfigError("unknown experiment config key '" + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  return experiment_config_from_json(parse_file(path));
}

const std::vector<std::string> kMethodNames = {"tavi", "tactile_only", "image_tactile_reward",
                                               "avi", "all_frames"};

ExperimentConfig method_preset(std::string_view method, const std::string& task,
                               std::uint64_t seed) {
  ExperimentConfig cfg;
  cfg.task = task;
  cfg.seed = seed;
  if (method == "tavi") {
    cfg.reward_modality = RewardModality::visual;
    cfg.policy_input = agent::Modality::visual_tactile;
    cfg.frame_mode = FrameMode::final_frame;
  } else if (method == "tactile_only") {
    cfg.reward_modality = RewardModality::tactile;
    cfg.policy_input = agent::Modality::tactile_only;
    cfg.frame_mode = FrameMode::final_frame;
  } else if (method == "image_tactile_reward") {
    cfg.reward_modality = RewardModality::both;
    cfg.policy_input = agent::Modality::visual_tactile;
    cfg.frame_mode = FrameMode::final_frame;
  } else if (method == "avi") {
    cfg.reward_modality = RewardModality::visual;
    cfg.policy_input = agent::Modality::visual_only;
    cfg.frame_mode = FrameMode::final_frame;
  } else if (method == "all_frames") {
    cfg.reward_modality = RewardModality::visual;
    cfg.policy_input = agent::Modality::visual_tactile;
    cfg.frame_mode = FrameMode::all_frames;
  } else {
    throw ConfigError("unknown method '" + std::string(method) + "'");
  }
  return cfg;
}

env::Trajectory record_demo(const env::TaskSpec& task, const env::PoseSample& pose,
                            std::uint64_t seed) {
  env::SimState start = env::reset_task(task, pose);
  env::ExpertPlan plan = env::scripted_expert(task, start);
  env::Trajectory raw = env::record_demo_trajectory(task, start, plan, seed);
  if (!raw.success) {
    throw DataError("scripted demo failed the task predicate on " + task.name);
  }
  return env::preprocess_demo(raw);
}

std::vector<env::PoseSample> eval_pose_set(const env::TaskSpec& task, std::size_t count,
                                           std::uint64_t seed) {
  RngStream rng = RngStream(seed).derive("eval." + task.name);
  std::vector<env::PoseSample> poses(count);
  for (env::PoseSample& p : poses) p = env::sample_pose(task, rng);
  return poses;
}

repr::EncoderParams train_encoders(const std::vector<env::Trajectory>& demos,
                                   const ExperimentConfig& cfg, repr::TrainLog* visual_log) {
  RngStream root(cfg.seed);
  repr::EncoderParams enc =
      repr::train_visual_encoder(demos, cfg.encoder, root.derive("encoder.visual"), visual_log);
  repr::ReprTrainConfig tactile_cfg = cfg.encoder;
  tactile_cfg.variant = repr::LossVariant::contrastive_only;
  return repr::train_tactile_encoder(std::move(enc), demos, tactile_cfg,
                                     root.derive("encoder.tactile"));
}

PolicyKind policy_kind_from_name(std::string_view name) {
  if (name == "checkpoint") return PolicyKind::checkpoint;
  if (name == "base") return PolicyKind::base;
  if (name == "expert") return PolicyKind::expert;
  throw ConfigError("unknown policy kind '" + std::string(name) + "'");
}

std::string policy_kind_name(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::checkpoint: return "checkpoint";
    case PolicyKind::base: return "base";
    case PolicyKind::expert: return "expert";
  }
  throw ConfigError("unknown policy kind value");
}

namespace {

struct EpisodeRecord {
  env::Trajectory traj;
  bool success = false;
};

// Captures one full observed episode: frame at t, action from it, terminal
// frame with a zero action. Success is latched across every visited state.
template <typename ActionFn>
EpisodeRecord rollout(const env::TaskSpec& task, const env::SimState& start, int steps,
                      ActionFn&& pick_action) {
  EpisodeRecord rec;
  rec.traj.task = task.name;
  rec.traj.hz = 10.0;
  env::SimState s = start;
  rec.success = env::task_success(task, s);
  for (int t = 0; t < steps; ++t) {
    env::TrajStep step;
    step.t = t / rec.traj.hz;
    step.state = s;
    step.tactile = env::sense_tactile(s);
    step.obs = env::render_visual(s);
    step.action = pick_action(t, step.obs, step.tactile);
    rec.traj.steps.push_back(step);
    s = env::step(s, rec.traj.steps.back().action);
    rec.success = rec.success || env::task_success(task, s);
  }
  env::TrajStep last;
  last.t = steps / rec.traj.hz;
  last.state = s;
  last.tactile = env::sense_tactile(s);
  last.obs = env::render_visual(s);
  rec.traj.steps.push_back(last);
  rec.traj.success = rec.success;
  return rec;
}

}  // namespace

EvalReport evaluate_policy(const ExperimentConfig& cfg, const agent::PolicyParams* policy,
                           const repr::EncoderParams& enc, const env::Trajectory& demo,
                           PolicyKind kind) {
  cfg.validate();
  if (demo.steps.empty()) throw DataError("evaluation needs a non-empty demo");
  if (kind == PolicyKind::checkpoint) {
    if (policy == nullptr) throw ConfigError("checkpoint evaluation needs a policy");
    if (policy->modality != cfg.policy_input) {
      throw ConfigError("policy checkpoint modality '" + agent::modality_name(policy->modality) +
                        "' does not match the configured input '" +
                        agent::modality_name(cfg.policy_input) + "'");
    }
  }
  env::TaskSpec task = env::make_task(env::task_from_name(cfg.task));
  agent::AgentConfig acfg = cfg.effective_agent();
  agent::Modality reward_mod = reward_latent_modality(cfg.reward_modality);

  auto t0 = std::chrono::steady_clock::now();
  EvalReport report;
  for (const env::PoseSample& pose : eval_pose_set(task, cfg.eval_poses, cfg.eval_pose_seed)) {
    env::SimState start = env::reset_task(task, pose);
    EpisodeRecord rec;
    if (kind == PolicyKind::expert) {
      env::ExpertPlan plan = env::scripted_expert(task, start);
      rec = rollout(task, start, static_cast<int>(plan.actions.size()),
                    [&](int t, const env::VisualObs&, const env::TactileReading&) {
                      return plan.actions[static_cast<std::size_t>(t)];
                    });
    } else if (kind == PolicyKind::base) {
      rec = rollout(task, start, task.episode_steps,
                    [&](int t, const env::VisualObs&, const env::TactileReading&) {
                      return agent::base_policy(demo, t);
                    });
    } else {
      agent::OUNoise noise;  // untouched in the eval phase
      RngStream rng(0);
      rec = rollout(task, start, task.episode_steps,
                    [&](int t, const env::VisualObs& obs, const env::TactileReading& tac) {
                      numerics::Tensor latent =
                          agent::policy_input_latent(enc, cfg.policy_input, obs, tac);
                      return agent::act(*policy, latent, demo, t, cfg.mask, noise, rng,
                                        agent::ActPhase::eval, acfg)
                          .action;
                    });
    }
    agent::RelabelResult scored =
        agent::relabel_episode(rec.traj, demo, enc, reward_mod, cfg.mask, acfg);
    report.pose_success.push_back(rec.success);
    report.total_reward.push_back(scored.reward.total);
  }
  std::size_t wins = static_cast<std::size_t>(
      std::count(report.pose_success.begin(), report.pose_success.end(), true));
  report.success_rate = static_cast<double>(wins) / static_cast<double>(cfg.eval_poses);
  report.wall_clock_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

void write_eval_report(const std::string& json_path, const std::string& csv_path,
                       const EvalReport& report) {
  nlohmann::json j;
  j["format"] = "tavi.eval";
  j["success_rate"] = report.success_rate;
  j["successes"] = report.pose_success;
  j["total_reward"] = report.total_reward;
  std::ofstream out = open_out(json_path);
  out << j.dump(2) << '\n';

  std::ofstream csv = open_out(csv_path);
  csv << "pose,success,total_reward\n";
  for (std::size_t i = 0; i < report.pose_success.size(); ++i) {
    csv << i << ',' << (report.pose_success[i] ? 1 : 0) << ','
        << numerics::format_double(report.total_reward[i]) << '\n';
  }
}

TrainResult run_training(const ExperimentConfig& cfg, const env::Trajectory& demo,
                         const repr::EncoderParams& enc) {
  cfg.validate();
  if (demo.steps.empty()) throw DataError("training needs a non-empty demo");
  env::TaskSpec task = env::make_task(env::task_from_name(cfg.task));
  agent::AgentConfig acfg = cfg.effective_agent();
  agent::Modality reward_mod = reward_latent_modality(cfg.reward_modality);

  RngStream root(cfg.seed);
  TrainResult result;
  result.policy = agent::init_policy_params(cfg.policy_input, root.derive("policy"));
  agent::ReplayBuffer buffer(acfg.replay_capacity);
  RngStream pose_rng = root.derive("train.poses");
  RngStream update_rng = root.derive("updates");

  int global_step = 0;
  for (int episode = 1; episode <= cfg.episodes; ++episode) {
    env::PoseSample pose = env::sample_pose(task, pose_rng);
    env::SimState start = env::reset_task(task, pose);
    agent::OUNoise noise;
    RngStream act_rng = root.derive("act." + std::to_string(episode));
    double actor_loss = nan_value(), critic_loss = nan_value();

    EpisodeRecord rec =
        rollout(task, start, task.episode_steps,
                [&](int t, const env::VisualObs& obs, const env::TactileReading& tac) {
                  numerics::Tensor latent =
                      agent::policy_input_latent(enc, cfg.policy_input, obs, tac);
                  agent::ActPhase phase = global_step < acfg.exploration_steps
                                              ? agent::ActPhase::noise_only
                                              : agent::ActPhase::train;
                  env::Action a = agent::act(result.policy, latent, demo, t, cfg.mask, noise,
                                             act_rng, phase, acfg)
                                      .action;
                  ++global_step;
                  agent::UpdateDiag diag = agent::update(buffer, result.policy, enc, acfg,
                                                         cfg.mask, global_step, update_rng);
                  if (diag.critic_step) critic_loss = diag.critic_loss;
                  if (diag.actor_step) actor_loss = diag.actor_loss;
                  return a;
                });

    agent::RelabelResult scored =
        agent::relabel_episode(rec.traj, demo, enc, reward_mod, cfg.mask, acfg);
    for (agent::Transition& tr : scored.transitions) buffer.push(std::move(tr));

    agent::TrainRow row;
    row.episode = episode;
    row.env_steps = global_step;
    row.total_reward = scored.reward.total;
    row.success = rec.success;
    row.actor_loss = actor_loss;
    row.critic_loss = critic_loss;
    result.log.push_back(row);

    if (cfg.eval_period > 0 && episode % cfg.eval_period == 0) {
      EvalReport report =
          evaluate_policy(cfg, &result.policy, enc, demo, PolicyKind::checkpoint);
      result.evals.push_back({episode, report.success_rate});
      if (report.success_rate >= cfg.stop_success) {
        result.stopped_early = true;
        break;
      }
    }
  }
  return result;
}

void write_eval_snapshots(const std::string& path, const std::vector<EvalSnapshot>& evals) {
  std::ofstream out = open_out(path);
  out << "episode,success_rate\n";
  for (const EvalSnapshot& e : evals) {
    out << e.episode << ',' << numerics::format_double(e.success_rate) << '\n';
  }
}

nlohmann::json suite_spec_to_json(const SuiteSpec& spec) {
  return {{"methods", spec.methods},
          {"tasks", spec.tasks},
          {"seeds", spec.seeds},
          {"encoder_variants", spec.encoder_variants},
          {"base", experiment_config_to_json(spec.base)}};
}

SuiteSpec suite_spec_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("suite spec must be a JSON object");
  SuiteSpec spec;
  for (const auto& [key, val] : j.items()) {
    if (key == "methods") {
      spec.methods = val.get<std::vector<std::string>>();
    } else if (key == "tasks") {
      spec.tasks = val.get<std::vector<std::string>>();
    } else if (key == "seeds") {
      spec.seeds = val.get<std::vector<std::uint64_t>>();
    } else if (key == "encoder_variants") {
      spec.encoder_variants = val.get<std::vector<std::string>>();
    } else if (key == "base") {
      spec.base = experiment_config_from_json(val);
    } else {
      throw ConfigError("unknown suite spec key '" + key + "'");
    }
  }
  if (spec.methods.empty() || spec.tasks.empty() || spec.seeds.empty() ||
      spec.encoder_variants.empty()) {
    throw ConfigError("suite spec needs at least one method, task, seed, and variant");
  }
  // Every name must parse before any cell runs.
  for (const std::string& m : spec.methods) (void)method_preset(m, "pinch_lift", 1);
  for (const std::string& t : spec.tasks) (void)env::task_from_name(t);
  for (const std::string& v : spec.encoder_variants) (void)repr::variant_from_name(v);
  return spec;
}

SuiteSpec load_suite_spec(const std::string& path) {
  return suite_spec_from_json(parse_file(path));
}

SuiteResult ablation_suite(const SuiteSpec& spec) {
  std::map<std::string, env::Trajectory> demo_cache;
  std::map<std::string, repr::EncoderParams> encoder_cache;
  SuiteResult result;

  for (const std::string& variant : spec.encoder_variants) {
    for (const std::string& method : spec.methods) {
      std::string label = variant == "combined" ? method : method + "/" + variant;
      for (const std::string& task_name : spec.tasks) {
        for (std::uint64_t seed : spec.seeds) {
          SuiteCell cell;
          cell.method = label;
          cell.task = task_name;
          cell.seed = seed;
          try {
            ExperimentConfig cfg = spec.base;
            ExperimentConfig preset = method_preset(method, task_name, seed);
            cfg.task = preset.task;
            cfg.seed = preset.seed;
            cfg.reward_modality = preset.reward_modality;
            cfg.policy_input = preset.policy_input;
            cfg.frame_mode = preset.frame_mode;
            cfg.encoder.variant = repr::variant_from_name(variant);
            cfg.validate();

            env::TaskSpec task = env::make_task(env::task_from_name(task_name));
            auto demo_it = demo_cache.find(task_name);
            if (demo_it == demo_cache.end()) {
              demo_it = demo_cache.emplace(task_name, record_demo(task, {}, kDemoSeed)).first;
            }
            const env::Trajectory& demo = demo_it->second;

            std::string enc_key = task_name + "|" + variant + "|" + std::to_string(seed);
            auto enc_it = encoder_cache.find(enc_key);
            if (enc_it == encoder_cache.end()) {
              enc_it = encoder_cache.emplace(enc_key, train_encoders({demo}, cfg)).first;
            }
            const repr::EncoderParams& enc = enc_it->second;

            TrainResult trained = run_training(cfg, demo, enc);
            EvalReport report =
                evaluate_policy(cfg, &trained.policy, enc, demo, PolicyKind::checkpoint);
            cell.success_rate = report.success_rate;
            double sum = 0.0;
            for (double r : report.total_reward) sum += r;
            cell.mean_reward = sum / static_cast<double>(report.total_reward.size());
          } catch (const Error& e) {
            cell.failed = true;
            cell.error = e.what();
          }
          result.cells.push_back(std::move(cell));
        }
      }
    }
  }
  return result;
}

void write_suite_cells(const std::string& path, const SuiteResult& result) {
  std::ofstream out = open_out(path);
  out << "method,task,seed,failed,success_rate,mean_reward,error\n";
  for (const SuiteCell& c : result.cells) {
    std::string error = c.error;
    std::replace(error.begin(), error.end(), ',', ';');
    out << c.method << ',' << c.task << ',' << c.seed << ',' << (c.failed ? 1 : 0) << ',';
    if (!c.failed) {
      out << numerics::format_double(c.success_rate) << ','
          << numerics::format_double(c.mean_reward);
    } else {
      out << ',';
    }
    out << ',' << error << '\n';
  }
}

void write_suite_table(const std::string& path, const SuiteResult& result,
                       const SuiteSpec& spec) {
  // Row labels in suite order, one column per task, mean success over seeds.
  std::vector<std::string> labels;
  for (const std::string& variant : spec.encoder_variants) {
    for (const std::string& method : spec.methods) {
      labels.push_back(variant == "combined" ? method : method + "/" + variant);
    }
  }
  std::ofstream out = open_out(path);
  out << "method";
  for (const std::string& task : spec.tasks) out << ',' << task;
  out << '\n';
  for (const std::string& label : labels) {
    out << label;
    for (const std::string& task : spec.tasks) {
      double sum = 0.0;
      int n = 0;
      for (const SuiteCell& c : result.cells) {
        if (c.method == label && c.task == task && !c.failed) {
          sum += c.success_rate;
          ++n;
        }
      }
      out << ',';
      if (n > 0) out << numerics::format_double(sum / n);
    }
    out << '\n';
  }
}

PathologyRepro reward_pathology_repro(const env::Trajectory& demo, const repr::EncoderParams& enc,
                                      const ExperimentConfig& cfg) {
  cfg.validate();
  if (demo.steps.empty()) throw DataError("empty demo given to the pathology repro");
  agent::Modality reward_mod = reward_latent_modality(cfg.reward_modality);
  auto latents = [&](const env::Trajectory& traj) {
    ot::LatentSeq seq;
    seq.reserve(traj.steps.size());
    for (const env::TrajStep& step : traj.steps) {
      seq.push_back(agent::policy_input_latent(enc, reward_mod, step.obs, step.tactile).values());
    }
    return seq;
  };
  ot::LatentSeq expert = latents(demo);

  env::TaskSpec task = env::make_task(env::task_from_name(demo.task));
  env::ExpertPlan nominal_plan = env::scripted_expert(task, env::reset_task(task));

  // Euclidean costs keep latent magnitudes, so the shifted object stays
  // visible in the last frame where cosine can wash it out.
  const ot::CostMetric metric = ot::CostMetric::euclidean;
  const ot::FrameMatchConfig all{kAllFrames, kAllFrames};
  const ot::FrameMatchConfig fin{1, 1};

  PathologyRepro best;
  bool have_best = false;
  double best_score = std::numeric_limits<double>::infinity();
  for (const env::PoseSample& pose : env::replay_break_poses(task.id)) {
    // The failure runs the nominal-pose plan against the shifted object:
    // the hand retraces the demo while the object never moves. The success
    // plans fresh from the shifted pose. Either leg coming out with the
    // wrong outcome disqualifies the offset.
    env::SimState world = env::reset_task(task, pose);
    env::Trajectory fail_raw = env::record_demo_trajectory(task, world, nominal_plan, demo.seed);
    env::Trajectory succ_raw =
        env::record_demo_trajectory(task, world, env::scripted_expert(task, world), demo.seed);
    if (fail_raw.success || !succ_raw.success) continue;
    ot::LatentSeq failure = latents(env::preprocess_demo(fail_raw));
    ot::LatentSeq success = latents(env::preprocess_demo(succ_raw));

    PathologyRepro attempt;
    attempt.pose = pose;
    attempt.success_all = ot::trajectory_reward(success, expert, all, metric);
    attempt.failure_all = ot::trajectory_reward(failure, expert, all, metric);
    attempt.all_frames_success = attempt.success_all.total;
    attempt.all_frames_failure = attempt.failure_all.total;
    attempt.final_success = ot::trajectory_reward(success, expert, fin, metric).total;
    attempt.final_failure = ot::trajectory_reward(failure, expert, fin, metric).total;
    attempt.all_frames_gap = relative_gap(attempt.all_frames_success, attempt.all_frames_failure);
    attempt.final_gap = relative_gap(attempt.final_success, attempt.final_failure);
    if (attempt.all_frames_gap <= 0.10 && attempt.final_gap > 0.50) return attempt;

    // Distance from the target region, for the diagnostic.
    double score = std::max(attempt.all_frames_gap - 0.10, 0.0) +
                   std::max(0.50 - attempt.final_gap, 0.0);
    if (score < best_score) {
      best_score = score;
      best = attempt;
      have_best = true;
    }
  }
  std::ostringstream msg;
  msg << "no object offset produced the matched-motion pathology";
  if (have_best) {
    msg << "; closest was (" << best.pose.dx << ", " << best.pose.dy << ", " << best.pose.dyaw
        << ") with all-frames gap " << best.all_frames_gap << " and final-frame gap "
        << best.final_gap;
  } else {
    msg << "; no offset yielded a failing replay alongside a succeeding replan";
  }
  throw DataError(msg.str());
}

void write_pathology_repro(const std::string& out_dir, const PathologyRepro& repro) {
  std::filesystem::create_directories(out_dir);
  ot::write_cost_csv(out_dir + "/cost_success.csv", repro.success_all.window_cost);
  ot::write_cost_csv(out_dir + "/cost_failure.csv", repro.failure_all.window_cost);
  ot::write_plan_csv(out_dir + "/plan_success.csv", repro.success_all.plan);
  ot::write_plan_csv(out_dir + "/plan_failure.csv", repro.failure_all.plan);
  nlohmann::json j;
  j["format"] = "tavi.pathology_repro";
  j["pose"] = {{"dx", repro.pose.dx}, {"dy", repro.pose.dy}, {"dyaw", repro.pose.dyaw}};
  j["all_frames_success"] = repro.all_frames_success;
  j["all_frames_failure"] = repro.all_frames_failure;
  j["final_success"] = repro.final_success;
  j["final_failure"] = repro.final_failure;
  j["all_frames_gap"] = repro.all_frames_gap;
  j["final_gap"] = repro.final_gap;
  std::ofstream out = open_out(out_dir + "/report.json");
  out << j.dump(2) << '\n';
}

}  // namespace tavi::harness
