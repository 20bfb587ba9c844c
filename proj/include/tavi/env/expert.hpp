#pragma once

#include <vector>

#include "tavi/env/sim.hpp"

namespace tavi::env {

// Open-loop action sequence at the 10 Hz control rate, every delta within
// the step clamps.
struct ExpertPlan {
  std::vector<Action> actions;
};

// Closed-form grasp script planned from the state's actual object pose:
// approach, close the opposing finger pair, then carry or rotate per task,
// then dwell. Executing the plan from the state it was planned for
// satisfies the task predicate; executing it on a world whose object moved
// beyond the grasp capture range does not. A pose outside the planner's
// reach is a PlanningError, as is a plan that cannot fit the episode
// budget.
ExpertPlan scripted_expert(const TaskSpec& task, const SimState& start);

// Fixture offsets beyond the grasp capture range: replaying a nominal-pose
// plan on a world shifted by any of these must fail the task predicate.
std::vector<PoseSample> replay_break_poses(TaskId id);

}  // namespace tavi::env
