#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tavi/env/expert.hpp"
#include "tavi/env/render.hpp"
#include "tavi/env/sim.hpp"
#include "tavi/env/tactile.hpp"

namespace tavi::env {

// One aligned tuple: the state observed at time t plus the action executed
// from it (zero on the terminal frame).
struct TrajStep {
  double t = 0.0;
  SimState state;
  TactileReading tactile;
  VisualObs obs;
  Action action{};
};

struct Trajectory {
  std::string task;
  std::uint64_t seed = 0;
  bool success = false;
  double hz = 10.0;
  std::vector<TrajStep> steps;
};

// Roll a 10 Hz plan out at the doubled demo-recording rate: each action is
// split into two consecutive half-deltas, one frame captured per 20 Hz
// tick plus the terminal frame. Success is latched across the episode.
Trajectory record_demo_trajectory(const TaskSpec& task, const SimState& start,
                                  const ExpertPlan& plan, std::uint64_t seed);

// JSON-lines container: a versioned header line, then one record per step.
// Unreadable files, wrong format markers, and unsupported versions are
// DataErrors.
void write_trajectory(const std::string& path, const Trajectory& traj);
Trajectory read_trajectory(const std::string& path);

// States as CSV, one row per step, with a header naming the columns.
void write_state_csv(const std::string& path, const Trajectory& traj);

// Robot-configuration displacement between two states: arm translation
// plus the path of each fingertip.
double robot_movement(const SimState& a, const SimState& b);

// 1% of the workspace diagonal.
inline constexpr double kMoveThreshDefault = 0.014142135623730951;

// Demo pipeline: subsample to the target rate (composing the actions in
// each stride), then remove idle transitions whose cumulative movement
// stays under the threshold. A removed transition's action folds into the
// next kept one, but never past the per-step clamps: a merge that would
// exceed them is emitted instead, so the result replays faithfully.
// Trailing idle motion is dropped. Output timestamps are re-laid on the
// uniform target grid. An output with no transitions left is a DataError.
Trajectory preprocess_demo(const Trajectory& raw, double target_hz = 10.0,
                           double move_thresh = kMoveThreshDefault);

}  // namespace tavi::env
