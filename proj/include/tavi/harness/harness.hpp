#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "tavi/agent/agent.hpp"
#include "tavi/env/expert.hpp"
#include "tavi/env/sim.hpp"
#include "tavi/env/trajectory.hpp"
#include "tavi/ot/ot.hpp"
#include "tavi/repr/repr.hpp"

namespace tavi::harness {

// Which latents feed the transport reward. Independent of the policy input
// modality: a policy can read both senses while being rewarded on one.
enum class RewardModality { visual, tactile, both };

RewardModality reward_modality_from_name(std::string_view name);
std::string reward_modality_name(RewardModality rm);
// The encoder modality that produces the reward latents.
agent::Modality reward_latent_modality(RewardModality rm);

// final_frame keeps the configured trailing match window; all_frames widens
// it to cover both trajectories end to end.
enum class FrameMode { final_frame, all_frames };

FrameMode frame_mode_from_name(std::string_view name);
std::string frame_mode_name(FrameMode mode);

struct ExperimentConfig {
  std::string task = "pinch_lift";
  std::uint64_t seed = 1;
  RewardModality reward_modality = RewardModality::visual;
  agent::Modality policy_input = agent::Modality::visual_tactile;
  FrameMode frame_mode = FrameMode::final_frame;
  int episodes = 500;
  int eval_period = 25;      // episodes between eval snapshots; 0 disables
  double stop_success = 0.9; // stop once a snapshot reaches this rate
  std::size_t eval_poses = 10;
  std::uint64_t eval_pose_seed = 7;
  agent::ActionMask mask;
  agent::AgentConfig agent;
  repr::ReprTrainConfig encoder;

  void validate() const;
  // The agent config with the frame mode folded into the match window.
  agent::AgentConfig effective_agent() const;
};

// Exact-key serialization, mirroring the agent config conventions: unknown
// keys are ConfigErrors, missing keys keep defaults.
nlohmann::json repr_train_config_to_json(const repr::ReprTrainConfig& cfg);
repr::ReprTrainConfig repr_train_config_from_json(const nlohmann::json& j);
nlohmann::json experiment_config_to_json(const ExperimentConfig& cfg);
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::string& path);

// Named method presets covering the comparison grid: "tavi" (visual reward,
// both senses as input, trailing window), "tactile_only",
// "image_tactile_reward" (reward on both senses), "avi" (no tactile input),
// and "all_frames" (tavi with the window spanning whole trajectories).
extern const std::vector<std::string> kMethodNames;
ExperimentConfig method_preset(std::string_view method, const std::string& task,
                               std::uint64_t seed);

// Scripted demo at the given pose, recorded at the doubled rate and
// preprocessed down to the control rate. A demo whose rollout misses the
// task predicate is a DataError; an unplannable pose is a PlanningError.
env::Trajectory record_demo(const env::TaskSpec& task, const env::PoseSample& pose,
                            std::uint64_t seed);

// The frozen evaluation poses: `count` draws from the task's perturbation
// bounds on a stream derived from (seed, task name).
std::vector<env::PoseSample> eval_pose_set(const env::TaskSpec& task, std::size_t count,
                                           std::uint64_t seed);

// Trains the visual encoder (with cfg.encoder) and the tactile encoder
// (contrastive across the same pairs) on the demos, both seeded from
// cfg.seed. The optional log captures the visual trainer's epochs.
repr::EncoderParams train_encoders(const std::vector<env::Trajectory>& demos,
                                   const ExperimentConfig& cfg,
                                   repr::TrainLog* visual_log = nullptr);

enum class PolicyKind {
  checkpoint,  // trained residual policy, deterministic offsets
  base,        // open-loop demo replay, no offsets
  expert       // scripted planner re-run per pose
};

PolicyKind policy_kind_from_name(std::string_view name);
std::string policy_kind_name(PolicyKind kind);

struct EvalReport {
  std::vector<bool> pose_success;
  double success_rate = 0.0;
  std::vector<double> total_reward;  // transport total per pose episode
  double wall_clock_sec = 0.0;       // sidecar only, never in metric files
};

// Noise-free rollouts over the frozen pose set. `policy` is required for
// PolicyKind::checkpoint and ignored otherwise.
EvalReport evaluate_policy(const ExperimentConfig& cfg, const agent::PolicyParams* policy,
                           const repr::EncoderParams& enc, const env::Trajectory& demo,
                           PolicyKind kind);

void write_eval_report(const std::string& json_path, const std::string& csv_path,
                       const EvalReport& report);

struct EvalSnapshot {
  int episode = 0;
  double success_rate = 0.0;
};

struct TrainResult {
  agent::PolicyParams policy;
  std::vector<agent::TrainRow> log;
  std::vector<EvalSnapshot> evals;
  bool stopped_early = false;
};

// Online episodic training: act with exploration noise, score the finished
// episode against the demo, insert its transitions, and run one scheduler
// tick per environment step. Every stream is derived from cfg.seed, so a
// config determines the result bit for bit.
TrainResult run_training(const ExperimentConfig& cfg, const env::Trajectory& demo,
                         const repr::EncoderParams& enc);

void write_eval_snapshots(const std::string& path, const std::vector<EvalSnapshot>& evals);

struct SuiteSpec {
  std::vector<std::string> methods = {"tavi", "tactile_only", "image_tactile_reward", "avi"};
  std::vector<std::string> tasks = {"pinch_lift"};
  std::vector<std::uint64_t> seeds = {1};
  // Encoder variants crossed with the methods; non-default variants get a
  // "method/variant" row label.
  std::vector<std::string> encoder_variants = {"combined"};
  // Budget and overrides applied to every cell before the preset fields.
  ExperimentConfig base;
};

nlohmann::json suite_spec_to_json(const SuiteSpec& spec);
SuiteSpec suite_spec_from_json(const nlohmann::json& j);
SuiteSpec load_suite_spec(const std::string& path);

struct SuiteCell {
  std::string method;  // row label, including any variant suffix
  std::string task;
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
  double success_rate = 0.0;
  double mean_reward = 0.0;  // mean episode transport total at eval
};

struct SuiteResult {
  std::vector<SuiteCell> cells;
};

// Runs every (method x variant) x task x seed cell through the full
// pipeline: one shared demo per task, encoders per (task, variant, seed),
// then training and a final eval. A failing cell is recorded with its error
// and the suite continues.
SuiteResult ablation_suite(const SuiteSpec& spec);

// cells.csv: one row per cell with its outcome.
void write_suite_cells(const std::string& path, const SuiteResult& result);
// table.csv: one row per method, one column per task, mean success over
// seeds; failed cells are left blank.
void write_suite_table(const std::string& path, const SuiteResult& result,
                       const SuiteSpec& spec);

struct PathologyRepro {
  env::PoseSample pose;  // object offset that produced the matched-motion failure
  double all_frames_success = 0.0;
  double all_frames_failure = 0.0;
  double final_success = 0.0;
  double final_failure = 0.0;
  double all_frames_gap = 0.0;  // relative gaps, |a-b| / max(|a|,|b|)
  double final_gap = 0.0;
  ot::TrajectoryReward success_all;  // all-frames scoring, for the heatmaps
  ot::TrajectoryReward failure_all;
};

// Reproduces the matching-window failure mode. The failure replays the
// demo's hand motion on a world whose object was shifted away, so every
// frame shows the demonstrated poses next to an untouched object; the
// success reruns the planner from that same world. Whole-trajectory
// matching scores the pair within 10% of each other because the cheap
// hand matches absorb the object mismatch, while last-frame against
// last-frame separates them by more than 50%. Offsets come from
// env::replay_break_poses; the first one whose pair meets both bounds
// wins, and none qualifying is a DataError naming the closest attempt.
PathologyRepro reward_pathology_repro(const env::Trajectory& demo, const repr::EncoderParams& enc,
                                      const ExperimentConfig& cfg);

// cost_success.csv / cost_failure.csv heatmap data with the matched
// transport plans alongside, plus report.json, under out_dir.
void write_pathology_repro(const std::string& out_dir, const PathologyRepro& repro);

}  // namespace tavi::harness
