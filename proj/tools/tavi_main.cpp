// Command-line front end. Each subcommand wires file paths into the harness
// calls; metric files depend only on the config and seed, so a re-run with
// the same inputs reproduces them byte for byte. Wall-clock measurements go
// to a timing.json sidecar next to the metrics, never into them.

#include <chrono>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "tavi/errors.hpp"
#include "tavi/harness/harness.hpp"

namespace {

using namespace tavi;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void write_timing(const std::string& out_dir, const std::map<std::string, double>& stages) {
  nlohmann::json j;
  j["format"] = "tavi.timing";
  for (const auto& [stage, secs] : stages) j["seconds"][stage] = secs;
  std::ofstream out(out_dir + "/timing.json");
  out << j.dump(2) << '\n';
}

std::string prepare_out_dir(const std::string& out_dir) {
  if (out_dir.empty()) throw ConfigError("--out must name a directory");
  std::filesystem::create_directories(out_dir);
  return out_dir;
}

harness::ExperimentConfig load_config(const std::string& path, std::uint64_t seed,
                                      bool seed_given) {
  harness::ExperimentConfig cfg;
  if (!path.empty()) {
    try {
      cfg = harness::load_experiment_config(path);
    } catch (const DataError& e) {
      // An unreadable or malformed config file is the caller's mistake.
      throw ConfigError(e.what());
    }
  }
  if (seed_given) cfg.seed = seed;
  cfg.validate();
  return cfg;
}

struct CommonOpts {
  std::string config;
  std::string demo;
  std::string encoders;
  std::string out;
  std::uint64_t seed = 0;
  bool seed_given = false;
};

void add_config_opts(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config, "experiment config JSON; defaults when omitted");
  cmd->add_option("--seed", opts.seed, "override the config seed")
      ->each([&opts](const std::string&) { opts.seed_given = true; });
}

int run_record_demo(const std::string& task_name, std::uint64_t seed, double dx, double dy,
                    double dyaw, const std::string& out) {
  std::string out_dir = prepare_out_dir(out);
  Clock::time_point t0 = Clock::now();
  env::TaskSpec task = env::make_task(env::task_from_name(task_name));
  env::Trajectory demo = harness::record_demo(task, {dx, dy, dyaw}, seed);
  env::write_trajectory(out_dir + "/demo.jsonl", demo);
  env::write_state_csv(out_dir + "/demo_states.csv", demo);
  write_timing(out_dir, {{"record_demo", seconds_since(t0)}});
  std::printf("recorded %zu frames, success=%d\n", demo.steps.size(), demo.success ? 1 : 0);
  return 0;
}

int run_train_encoder(const CommonOpts& opts) {
  std::string out_dir = prepare_out_dir(opts.out);
  harness::ExperimentConfig cfg = load_config(opts.config, opts.seed, opts.seed_given);
  env::Trajectory demo = env::read_trajectory(opts.demo);
  Clock::time_point t0 = Clock::now();
  repr::TrainLog log;
  repr::EncoderParams enc = harness::train_encoders({demo}, cfg, &log);
  repr::save_encoder_params(out_dir + "/encoders.json", enc);
  repr::write_train_csv(out_dir + "/encoder_log.csv", log);
  write_timing(out_dir, {{"train_encoders", seconds_since(t0)}});
  std::printf("trained encoders over %zu epochs\n", log.epochs.size());
  return 0;
}

int run_train_policy(const CommonOpts& opts) {
  std::string out_dir = prepare_out_dir(opts.out);
  harness::ExperimentConfig cfg = load_config(opts.config, opts.seed, opts.seed_given);
  env::Trajectory demo = env::read_trajectory(opts.demo);
  repr::EncoderParams enc = repr::load_encoder_params(opts.encoders);
  Clock::time_point t0 = Clock::now();
  harness::TrainResult result = harness::run_training(cfg, demo, enc);
  double train_secs = seconds_since(t0);
  agent::save_policy_params(out_dir + "/policy.json", result.policy);
  agent::write_train_log(out_dir + "/train_log.csv", result.log);
  harness::write_eval_snapshots(out_dir + "/evals.csv", result.evals);
  write_timing(out_dir, {{"train_policy", train_secs}});
  std::printf("trained %zu episodes%s\n", result.log.size(),
              result.stopped_early ? ", stopped early" : "");
  return 0;
}

int run_evaluate(const CommonOpts& opts, const std::string& kind_name,
                 const std::string& policy_path) {
  std::string out_dir = prepare_out_dir(opts.out);
  harness::ExperimentConfig cfg = load_config(opts.config, opts.seed, opts.seed_given);
  harness::PolicyKind kind = harness::policy_kind_from_name(kind_name);
  env::Trajectory demo = env::read_trajectory(opts.demo);
  repr::EncoderParams enc = repr::load_encoder_params(opts.encoders);
  agent::PolicyParams policy;
  if (kind == harness::PolicyKind::checkpoint) {
    if (policy_path.empty()) throw ConfigError("checkpoint evaluation needs --policy");
    policy = agent::load_policy_params(policy_path);
  }
  harness::EvalReport report = harness::evaluate_policy(
      cfg, kind == harness::PolicyKind::checkpoint ? &policy : nullptr, enc, demo, kind);
  harness::write_eval_report(out_dir + "/eval.json", out_dir + "/eval.csv", report);
  write_timing(out_dir, {{"evaluate", report.wall_clock_sec}});
  std::printf("success rate %.2f over %zu poses\n", report.success_rate,
              report.pose_success.size());
  return 0;
}

int run_ablate(const std::string& spec_path, const std::string& out) {
  std::string out_dir = prepare_out_dir(out);
  harness::SuiteSpec spec = harness::load_suite_spec(spec_path);
  Clock::time_point t0 = Clock::now();
  harness::SuiteResult result = harness::ablation_suite(spec);
  double suite_secs = seconds_since(t0);
  harness::write_suite_cells(out_dir + "/cells.csv", result);
  harness::write_suite_table(out_dir + "/table.csv", result, spec);
  write_timing(out_dir, {{"ablation_suite", suite_secs}});
  int failed = 0;
  for (const harness::SuiteCell& cell : result.cells) failed += cell.failed ? 1 : 0;
  std::printf("%zu cells, %d failed\n", result.cells.size(), failed);
  if (failed > 0) {
    for (const harness::SuiteCell& cell : result.cells) {
      if (cell.failed) {
        std::fprintf(stderr, "cell %s/%s/%llu: %s\n", cell.method.c_str(), cell.task.c_str(),
                     static_cast<unsigned long long>(cell.seed), cell.error.c_str());
      }
    }
  }
  return 0;
}

int run_pathology(const CommonOpts& opts) {
  std::string out_dir = prepare_out_dir(opts.out);
  harness::ExperimentConfig cfg = load_config(opts.config, opts.seed, opts.seed_given);
  env::Trajectory demo = env::read_trajectory(opts.demo);
  repr::EncoderParams enc = repr::load_encoder_params(opts.encoders);
  Clock::time_point t0 = Clock::now();
  harness::PathologyRepro repro = harness::reward_pathology_repro(demo, enc, cfg);
  double repro_secs = seconds_since(t0);
  harness::write_pathology_repro(out_dir, repro);
  write_timing(out_dir, {{"reward_pathology", repro_secs}});
  std::printf("offset (%.3f, %.3f, %.3f): all-frames gap %.4f, final gap %.4f\n", repro.pose.dx,
              repro.pose.dy, repro.pose.dyaw, repro.all_frames_gap, repro.final_gap);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tactile and visual imitation pipeline"};
  app.require_subcommand(1);

  std::string demo_task = "pinch_lift";
  std::uint64_t demo_seed = 1;
  double dx = 0.0, dy = 0.0, dyaw = 0.0;
  std::string demo_out;
  CLI::App* record = app.add_subcommand("record-demo", "script and record an expert demo");
  record->add_option("--task", demo_task, "task name");
  record->add_option("--seed", demo_seed, "demo seed");
  record->add_option("--dx", dx, "object x offset");
  record->add_option("--dy", dy, "object y offset");
  record->add_option("--dyaw", dyaw, "object yaw offset");
  record->add_option("--out", demo_out, "output directory")->required();

  CommonOpts enc_opts;
  CLI::App* train_enc = app.add_subcommand("train-encoder", "train the visual and tactile encoders");
  add_config_opts(train_enc, enc_opts);
  train_enc->add_option("--demo", enc_opts.demo, "demo trajectory JSONL")->required();
  train_enc->add_option("--out", enc_opts.out, "output directory")->required();

  CommonOpts pol_opts;
  CLI::App* train_pol = app.add_subcommand("train-policy", "train the residual policy online");
  add_config_opts(train_pol, pol_opts);
  train_pol->add_option("--demo", pol_opts.demo, "demo trajectory JSONL")->required();
  train_pol->add_option("--encoders", pol_opts.encoders, "encoder checkpoint")->required();
  train_pol->add_option("--out", pol_opts.out, "output directory")->required();

  CommonOpts eval_opts;
  std::string eval_kind = "checkpoint";
  std::string eval_policy;
  CLI::App* evaluate = app.add_subcommand("evaluate", "roll a policy over the frozen eval poses");
  add_config_opts(evaluate, eval_opts);
  evaluate->add_option("--demo", eval_opts.demo, "demo trajectory JSONL")->required();
  evaluate->add_option("--encoders", eval_opts.encoders, "encoder checkpoint")->required();
  evaluate->add_option("--kind", eval_kind, "checkpoint, base, or expert");
  evaluate->add_option("--policy", eval_policy, "policy checkpoint for --kind checkpoint");
  evaluate->add_option("--out", eval_opts.out, "output directory")->required();

  std::string suite_path, suite_out;
  CLI::App* ablate = app.add_subcommand("ablate", "run a method x task x seed comparison suite");
  ablate->add_option("--spec", suite_path, "suite spec JSON")->required();
  ablate->add_option("--out", suite_out, "output directory")->required();

  CommonOpts path_opts;
  CLI::App* pathology = app.add_subcommand(
      "reward-pathology", "contrast whole-trajectory and final-frame matching on a staged failure");
  add_config_opts(pathology, path_opts);
  pathology->add_option("--demo", path_opts.demo, "demo trajectory JSONL")->required();
  pathology->add_option("--encoders", path_opts.encoders, "encoder checkpoint")->required();
  pathology->add_option("--out", path_opts.out, "output directory")->required();

  try {
    app.parse(argc, argv);
    if (record->parsed()) return run_record_demo(demo_task, demo_seed, dx, dy, dyaw, demo_out);
    if (train_enc->parsed()) return run_train_encoder(enc_opts);
    if (train_pol->parsed()) return run_train_policy(pol_opts);
    if (evaluate->parsed()) return run_evaluate(eval_opts, eval_kind, eval_policy);
    if (ablate->parsed()) return run_ablate(suite_path, suite_out);
    if (pathology->parsed()) return run_pathology(path_opts);
    return 1;
  } catch (const CLI::ParseError& e) {
    // --help lands here with a success code; bad flags are config errors.
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
