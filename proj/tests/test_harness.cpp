#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tavi/errors.hpp"
#include "tavi/harness/harness.hpp"

using namespace tavi;
using namespace tavi::harness;

namespace {

const env::TaskSpec& pinch_task() {
  static env::TaskSpec task = env::make_task(env::TaskId::pinch_lift);
  return task;
}

// One nominal-pose demo shared read-only across cases.
const env::Trajectory& shared_demo() {
  static env::Trajectory demo = record_demo(pinch_task(), {}, 1);
  return demo;
}

// Encoders trained once with the default budget; milliseconds on this sim.
const repr::EncoderParams& shared_encoders() {
  static repr::EncoderParams enc = [] {
    ExperimentConfig cfg;
    return train_encoders({shared_demo()}, cfg);
  }();
  return enc;
}

// Budget small enough that a full training run stays in the millisecond
// range while still exercising every scheduler branch.
ExperimentConfig tiny_config() {
  ExperimentConfig cfg;
  cfg.episodes = 2;
  cfg.eval_period = 0;
  cfg.eval_poses = 2;
  cfg.agent.batch = 8;
  cfg.agent.replay_capacity = 512;
  cfg.agent.exploration_steps = 30;
  cfg.encoder.epochs = 2;
  return cfg;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int line_count(const std::string& path) {
  std::ifstream in(path);
  int n = 0;
  std::string line;
  while (std::getline(in, line)) ++n;
  return n;
}

bool same_steps(const env::Trajectory& a, const env::Trajectory& b) {
  if (a.steps.size() != b.steps.size()) return false;
  for (std::size_t i = 0; i < a.steps.size(); ++i) {
    const env::TrajStep& x = a.steps[i];
    const env::TrajStep& y = b.steps[i];
    if (x.t != y.t || x.action != y.action) return false;
    if (x.obs.pix != y.obs.pix || x.tactile.values != y.tactile.values) return false;
    if (x.state.arm_x != y.state.arm_x || x.state.arm_y != y.state.arm_y) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("modality and mode names round trip") {
  for (RewardModality rm : {RewardModality::visual, RewardModality::tactile, RewardModality::both}) {
    CHECK(reward_modality_from_name(reward_modality_name(rm)) == rm);
  }
  for (FrameMode fm : {FrameMode::final_frame, FrameMode::all_frames}) {
    CHECK(frame_mode_from_name(frame_mode_name(fm)) == fm);
  }
  for (PolicyKind pk : {PolicyKind::checkpoint, PolicyKind::base, PolicyKind::expert}) {
    CHECK(policy_kind_from_name(policy_kind_name(pk)) == pk);
  }
  CHECK_THROWS_AS((void)reward_modality_from_name("sonar"), ConfigError);
  CHECK_THROWS_AS((void)frame_mode_from_name("weekly"), ConfigError);
  CHECK_THROWS_AS((void)policy_kind_from_name("oracle"), ConfigError);

  CHECK(reward_latent_modality(RewardModality::visual) == agent::Modality::visual_only);
  CHECK(reward_latent_modality(RewardModality::tactile) == agent::Modality::tactile_only);
  CHECK(reward_latent_modality(RewardModality::both) == agent::Modality::visual_tactile);
}

TEST_CASE("experiment config JSON round trips every field") {
  ExperimentConfig cfg;
  cfg.task = "unstack";
  cfg.seed = 99;
  cfg.reward_modality = RewardModality::both;
  cfg.policy_input = agent::Modality::tactile_only;
  cfg.frame_mode = FrameMode::all_frames;
  cfg.episodes = 123;
  cfg.eval_period = 7;
  cfg.stop_success = 0.75;
  cfg.eval_poses = 4;
  cfg.eval_pose_seed = 21;
  cfg.mask.enabled[5] = false;
  cfg.agent.lr = 3e-4;
  cfg.agent.batch = 32;
  cfg.agent.frame_match = {5, 2};
  cfg.encoder.gap = 3;
  cfg.encoder.epochs = 11;
  cfg.encoder.variant = repr::LossVariant::contrastive_only;
  cfg.encoder.auto_lambda = false;
  cfg.encoder.lambda_weight = 0.5;

  ExperimentConfig back = experiment_config_from_json(experiment_config_to_json(cfg));
  CHECK(back.task == cfg.task);
  CHECK(back.seed == cfg.seed);
  CHECK(back.reward_modality == cfg.reward_modality);
  CHECK(back.policy_input == cfg.policy_input);
  CHECK(back.frame_mode == cfg.frame_mode);
  CHECK(back.episodes == cfg.episodes);
  CHECK(back.eval_period == cfg.eval_period);
  CHECK(back.stop_success == cfg.stop_success);
  CHECK(back.eval_poses == cfg.eval_poses);
  CHECK(back.eval_pose_seed == cfg.eval_pose_seed);
  CHECK(back.mask.enabled == cfg.mask.enabled);
  CHECK(back.agent.lr == cfg.agent.lr);
  CHECK(back.agent.batch == cfg.agent.batch);
  CHECK(back.agent.frame_match.episode_frames == cfg.agent.frame_match.episode_frames);
  CHECK(back.agent.frame_match.expert_frames == cfg.agent.frame_match.expert_frames);
  CHECK(back.encoder.gap == cfg.encoder.gap);
  CHECK(back.encoder.epochs == cfg.encoder.epochs);
  CHECK(back.encoder.variant == cfg.encoder.variant);
  CHECK(back.encoder.auto_lambda == cfg.encoder.auto_lambda);
  CHECK(back.encoder.lambda_weight == cfg.encoder.lambda_weight);

  // Serialization is key-exact in both directions.
  nlohmann::json j = experiment_config_to_json(cfg);
  ExperimentConfig twice = experiment_config_from_json(experiment_config_to_json(back));
  CHECK(experiment_config_to_json(twice) == j);
}

TEST_CASE("unknown config keys are rejected at every level") {
  nlohmann::json j = experiment_config_to_json(ExperimentConfig{});
  nlohmann::json top = j;
  top["surprise"] = 1;
  CHECK_THROWS_AS((void)experiment_config_from_json(top), ConfigError);

  nlohmann::json agent_bad = j;
  agent_bad["agent"]["warmup"] = 10;
  CHECK_THROWS_AS((void)experiment_config_from_json(agent_bad), ConfigError);

  nlohmann::json enc_bad = j;
  enc_bad["encoder"]["temperature"] = 0.1;
  CHECK_THROWS_AS((void)experiment_config_from_json(enc_bad), ConfigError);

  // Missing keys keep defaults rather than erroring.
  nlohmann::json sparse;
  sparse["task"] = "flip";
  ExperimentConfig cfg = experiment_config_from_json(sparse);
  CHECK(cfg.task == "flip");
  CHECK(cfg.episodes == 500);
  CHECK(cfg.eval_poses == 10);

  CHECK_THROWS_AS((void)load_experiment_config("no_such_config.json"), DataError);
  const std::string path = "harness_bad_config_test.json";
  {
    std::ofstream out(path);
    out << "{ not json";
  }
  CHECK_THROWS_AS((void)load_experiment_config(path), DataError);
  std::remove(path.c_str());
}

TEST_CASE("config validation rejects bad budgets") {
  ExperimentConfig cfg;
  cfg.episodes = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.eval_period = -1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.eval_poses = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.stop_success = -0.1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.task = "juggle";
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK_NOTHROW(ExperimentConfig{}.validate());
}

TEST_CASE("method presets pin the comparison grid") {
  REQUIRE(kMethodNames.size() == 5);
  ExperimentConfig tavi_cfg = method_preset("tavi", "pinch_lift", 3);
  CHECK(tavi_cfg.reward_modality == RewardModality::visual);
  CHECK(tavi_cfg.policy_input == agent::Modality::visual_tactile);
  CHECK(tavi_cfg.frame_mode == FrameMode::final_frame);
  CHECK(tavi_cfg.seed == 3);

  ExperimentConfig tac = method_preset("tactile_only", "pinch_lift", 3);
  CHECK(tac.reward_modality == RewardModality::tactile);
  CHECK(tac.policy_input == agent::Modality::tactile_only);

  ExperimentConfig itr = method_preset("image_tactile_reward", "pinch_lift", 3);
  CHECK(itr.reward_modality == RewardModality::both);
  CHECK(itr.policy_input == agent::Modality::visual_tactile);

  ExperimentConfig avi = method_preset("avi", "pinch_lift", 3);
  CHECK(avi.reward_modality == RewardModality::visual);
  CHECK(avi.policy_input == agent::Modality::visual_only);
  CHECK(avi.frame_mode == FrameMode::final_frame);

  ExperimentConfig af = method_preset("all_frames", "pinch_lift", 3);
  CHECK(af.reward_modality == RewardModality::visual);
  CHECK(af.policy_input == agent::Modality::visual_tactile);
  CHECK(af.frame_mode == FrameMode::all_frames);

  // The ablation contrast: identical configs except for the policy input.
  nlohmann::json a = experiment_config_to_json(tavi_cfg);
  nlohmann::json b = experiment_config_to_json(avi);
  a.erase("policy_input");
  b.erase("policy_input");
  CHECK(a == b);

  CHECK_THROWS_AS((void)method_preset("bc", "pinch_lift", 1), ConfigError);
}

TEST_CASE("the frame mode folds into the match window") {
  ExperimentConfig cfg;
  CHECK(cfg.effective_agent().frame_match.episode_frames == 10);
  CHECK(cfg.effective_agent().frame_match.expert_frames == 1);
  cfg.frame_mode = FrameMode::all_frames;
  agent::AgentConfig wide = cfg.effective_agent();
  // Wider than any episode this sim can produce, so the clamp covers all
  // frames on both sides.
  CHECK(wide.frame_match.episode_frames >= 1000000);
  CHECK(wide.frame_match.expert_frames >= 1000000);
  // Everything else passes through untouched.
  CHECK(wide.lr == cfg.agent.lr);
  CHECK(wide.batch == cfg.agent.batch);
}

TEST_CASE("frozen eval poses are deterministic and inside the bounds") {
  const env::TaskSpec& task = pinch_task();
  std::vector<env::PoseSample> a = eval_pose_set(task, 10, 7);
  std::vector<env::PoseSample> b = eval_pose_set(task, 10, 7);
  REQUIRE(a.size() == 10);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].dx == b[i].dx);
    CHECK(a[i].dy == b[i].dy);
    CHECK(a[i].dyaw == b[i].dyaw);
    CHECK(std::abs(a[i].dx) <= task.perturb_xy);
    CHECK(std::abs(a[i].dy) <= task.perturb_xy);
    CHECK(std::abs(a[i].dyaw) <= task.perturb_yaw);
  }

  // The stream is derived from the task name and the seed, so either
  // change produces a different fixture.
  std::vector<env::PoseSample> other_task =
      eval_pose_set(env::make_task(env::TaskId::unstack), 10, 7);
  std::vector<env::PoseSample> other_seed = eval_pose_set(task, 10, 8);
  CHECK(a.front().dx != other_task.front().dx);
  CHECK(a.front().dx != other_seed.front().dx);
}

TEST_CASE("recorded demos reach the goal and are bitwise stable") {
  const env::Trajectory& demo = shared_demo();
  CHECK(demo.success);
  CHECK(demo.task == "pinch_lift");
  CHECK(demo.hz == 10.0);
  CHECK(demo.steps.size() > 10);

  env::Trajectory again = record_demo(pinch_task(), {}, 1);
  CHECK(same_steps(demo, again));

  env::TaskSpec unstack = env::make_task(env::TaskId::unstack);
  env::Trajectory tower = record_demo(unstack, {}, 1);
  CHECK(tower.success);

  // A pose past the planner's perturbation envelope is a planning error,
  // not a bad demo.
  env::PoseSample far{0.5, 0.5, 0.0};
  CHECK_THROWS_AS((void)record_demo(pinch_task(), far, 1), PlanningError);
}

TEST_CASE("a demo that misses the task predicate is a data error") {
  // The flip plan closes onto the square slowly enough at the doubled
  // recording rate that the pinch never engages, so the rollout cannot
  // reach the target rotation and the recorder reports it honestly.
  env::TaskSpec flip = env::make_task(env::TaskId::flip);
  CHECK_THROWS_AS((void)record_demo(flip, {}, 1), DataError);
}

TEST_CASE("the expert solves every frozen pose and the base replay does not") {
  ExperimentConfig cfg;
  cfg.eval_poses = 10;
  EvalReport expert =
      evaluate_policy(cfg, nullptr, shared_encoders(), shared_demo(), PolicyKind::expert);
  REQUIRE(expert.pose_success.size() == 10);
  CHECK(expert.success_rate == 1.0);
  REQUIRE(expert.total_reward.size() == 10);

  EvalReport base =
      evaluate_policy(cfg, nullptr, shared_encoders(), shared_demo(), PolicyKind::base);
  CHECK(base.success_rate < expert.success_rate);
  int wins = 0;
  for (bool s : base.pose_success) wins += s ? 1 : 0;
  CHECK(base.success_rate == doctest::Approx(wins / 10.0));
}

TEST_CASE("a fresh residual checkpoint replays the base policy exactly") {
  ExperimentConfig cfg;
  cfg.eval_poses = 6;
  numerics::RngStream rng(5);
  agent::PolicyParams policy = agent::init_policy_params(cfg.policy_input, rng);

  EvalReport ckpt =
      evaluate_policy(cfg, &policy, shared_encoders(), shared_demo(), PolicyKind::checkpoint);
  EvalReport base =
      evaluate_policy(cfg, nullptr, shared_encoders(), shared_demo(), PolicyKind::base);
  // The actor's output layer starts at zero, so the residual is a no-op
  // and both evals visit identical states.
  REQUIRE(ckpt.pose_success.size() == base.pose_success.size());
  for (std::size_t i = 0; i < ckpt.pose_success.size(); ++i) {
    CHECK(ckpt.pose_success[i] == base.pose_success[i]);
    CHECK(ckpt.total_reward[i] == base.total_reward[i]);
  }
}

TEST_CASE("eval reports serialize to JSON and CSV") {
  EvalReport report;
  report.pose_success = {true, false, true};
  report.success_rate = 2.0 / 3.0;
  report.total_reward = {-0.5, -1.25, -0.75};
  report.wall_clock_sec = 12.5;
  const std::string jpath = "harness_eval_test.json";
  const std::string cpath = "harness_eval_test.csv";
  write_eval_report(jpath, cpath, report);

  nlohmann::json j = nlohmann::json::parse(slurp(jpath));
  CHECK(j["success_rate"].get<double>() == doctest::Approx(2.0 / 3.0));
  CHECK(j["successes"].size() == 3);
  // Wall clock stays out of the metric payload; it belongs to the timing
  // sidecar written by the CLI.
  CHECK(!j.contains("wall_clock_sec"));
  CHECK(line_count(cpath) == 4);
  std::remove(jpath.c_str());
  std::remove(cpath.c_str());
}

TEST_CASE("training runs are reproducible bit for bit") {
  ExperimentConfig cfg = tiny_config();
  TrainResult a = run_training(cfg, shared_demo(), shared_encoders());
  TrainResult b = run_training(cfg, shared_demo(), shared_encoders());
  REQUIRE(a.log.size() == 2);
  REQUIRE(b.log.size() == 2);
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    CHECK(a.log[i].episode == b.log[i].episode);
    CHECK(a.log[i].env_steps == b.log[i].env_steps);
    CHECK(a.log[i].total_reward == b.log[i].total_reward);
    CHECK(a.log[i].success == b.log[i].success);
  }
  CHECK(a.evals.empty());
  CHECK(!a.stopped_early);

  // The trained parameters agree coordinate for coordinate.
  const std::string pa = "harness_policy_a.json";
  const std::string pb = "harness_policy_b.json";
  agent::save_policy_params(pa, a.policy);
  agent::save_policy_params(pb, b.policy);
  CHECK(slurp(pa) == slurp(pb));
  std::remove(pa.c_str());
  std::remove(pb.c_str());

  // A different seed takes a different exploration path.
  ExperimentConfig other = cfg;
  other.seed = cfg.seed + 1;
  TrainResult c = run_training(other, shared_demo(), shared_encoders());
  CHECK(c.log.back().total_reward != a.log.back().total_reward);
}

TEST_CASE("an eval snapshot can stop training early") {
  ExperimentConfig cfg = tiny_config();
  cfg.episodes = 5;
  cfg.eval_period = 1;
  cfg.eval_poses = 2;
  cfg.stop_success = 0.0;  // any snapshot clears this bar
  TrainResult result = run_training(cfg, shared_demo(), shared_encoders());
  CHECK(result.stopped_early);
  REQUIRE(result.evals.size() == 1);
  CHECK(result.evals[0].episode == 1);
  CHECK(result.log.size() == 1);

  const std::string path = "harness_snapshots_test.csv";
  write_eval_snapshots(path, result.evals);
  CHECK(line_count(path) == 2);
  std::remove(path.c_str());
}

TEST_CASE("suite specs round trip and reject unknown grid entries") {
  SuiteSpec spec;
  spec.methods = {"tavi", "avi"};
  spec.tasks = {"pinch_lift", "unstack"};
  spec.seeds = {1, 2, 3};
  spec.encoder_variants = {"combined", "contrastive_only"};
  spec.base.episodes = 17;
  SuiteSpec back = suite_spec_from_json(suite_spec_to_json(spec));
  CHECK(back.methods == spec.methods);
  CHECK(back.tasks == spec.tasks);
  CHECK(back.seeds == spec.seeds);
  CHECK(back.encoder_variants == spec.encoder_variants);
  CHECK(back.base.episodes == 17);

  nlohmann::json bad = suite_spec_to_json(spec);
  bad["methods"].push_back("bc");
  CHECK_THROWS_AS((void)suite_spec_from_json(bad), ConfigError);
  nlohmann::json bad_task = suite_spec_to_json(spec);
  bad_task["tasks"].push_back("juggle");
  CHECK_THROWS_AS((void)suite_spec_from_json(bad_task), ConfigError);
}

TEST_CASE("the ablation suite fills every cell and writes both tables") {
  SuiteSpec spec;
  spec.methods = {"tavi", "avi"};
  spec.tasks = {"pinch_lift"};
  spec.seeds = {1};
  spec.base = tiny_config();
  spec.base.encoder.epochs = 2;

  SuiteResult result = ablation_suite(spec);
  REQUIRE(result.cells.size() == 2);
  for (const SuiteCell& cell : result.cells) {
    CHECK(!cell.failed);
    CHECK(cell.error.empty());
    CHECK(cell.task == "pinch_lift");
    CHECK(cell.seed == 1);
    CHECK(cell.success_rate >= 0.0);
    CHECK(cell.success_rate <= 1.0);
  }
  CHECK(result.cells[0].method == "tavi");
  CHECK(result.cells[1].method == "avi");

  const std::string cells_path = "harness_suite_cells.csv";
  const std::string table_path = "harness_suite_table.csv";
  write_suite_cells(cells_path, result);
  write_suite_table(table_path, result, spec);
  CHECK(line_count(cells_path) == 3);   // header + one row per cell
  CHECK(line_count(table_path) == 3);   // header + one row per method
  std::string header;
  std::ifstream table(table_path);
  std::getline(table, header);
  CHECK(header == "method,pinch_lift");
  std::remove(cells_path.c_str());
  std::remove(table_path.c_str());
}

TEST_CASE("a failing cell is recorded and the suite continues") {
  SuiteSpec spec;
  spec.methods = {"tavi"};
  spec.tasks = {"pinch_lift", "flip"};  // the flip demo cannot be recorded
  spec.seeds = {1};
  spec.base = tiny_config();
  spec.base.encoder.epochs = 2;

  SuiteResult result = ablation_suite(spec);
  REQUIRE(result.cells.size() == 2);
  const SuiteCell* flip_cell = nullptr;
  const SuiteCell* pinch_cell = nullptr;
  for (const SuiteCell& cell : result.cells) {
    if (cell.task == "flip") flip_cell = &cell;
    if (cell.task == "pinch_lift") pinch_cell = &cell;
  }
  REQUIRE(flip_cell != nullptr);
  REQUIRE(pinch_cell != nullptr);
  CHECK(flip_cell->failed);
  CHECK(!flip_cell->error.empty());
  CHECK(!pinch_cell->failed);

  // The failed cell leaves its table entry blank instead of a zero.
  const std::string table_path = "harness_suite_fail_table.csv";
  write_suite_table(table_path, result, spec);
  std::ifstream table(table_path);
  std::string header, row;
  std::getline(table, header);
  std::getline(table, row);
  CHECK(header == "method,pinch_lift,flip");
  CHECK(row.substr(row.size() - 1) == ",");
  std::remove(table_path.c_str());
}

TEST_CASE("the matched-motion pathology separates the matching windows") {
  ExperimentConfig cfg;
  PathologyRepro repro = reward_pathology_repro(shared_demo(), shared_encoders(), cfg);
  CHECK(repro.all_frames_gap <= 0.10);
  CHECK(repro.final_gap > 0.50);
  // Both legs really played out: offsets that fail to produce a failing
  // replay and a succeeding replan are skipped inside the search.
  CHECK(repro.all_frames_success < 0.0);
  CHECK(repro.all_frames_failure < 0.0);
  CHECK(repro.success_all.window_cost.rows > 0);
  CHECK(repro.failure_all.window_cost.rows > 0);

  PathologyRepro again = reward_pathology_repro(shared_demo(), shared_encoders(), cfg);
  CHECK(again.pose.dx == repro.pose.dx);
  CHECK(again.all_frames_success == repro.all_frames_success);
  CHECK(again.final_failure == repro.final_failure);

  const std::string out_dir = "harness_pathology_test";
  write_pathology_repro(out_dir, repro);
  CHECK(line_count(out_dir + "/cost_success.csv") == repro.success_all.window_cost.rows);
  CHECK(line_count(out_dir + "/cost_failure.csv") == repro.failure_all.window_cost.rows);
  nlohmann::json j = nlohmann::json::parse(slurp(out_dir + "/report.json"));
  CHECK(j["all_frames_gap"].get<double>() == doctest::Approx(repro.all_frames_gap));
  CHECK(j["final_gap"].get<double>() == doctest::Approx(repro.final_gap));
  CHECK(j["pose"]["dx"].get<double>() == doctest::Approx(repro.pose.dx));
  std::filesystem::remove_all(out_dir);
}
