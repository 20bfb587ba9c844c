#include "tavi/env/expert.hpp"

#include <algorithm>
#include <cmath>

#include "tavi/errors.hpp"

namespace tavi::env {

namespace {

// Grip reach targets per task: tip-ring radius with ~4-5 mm of squeeze past
// first contact so small pose errors still capture. radius = kReachBase +
// kReachScale * joint.
double grip_reach_joint(TaskId id) {
  switch (id) {
    case TaskId::pinch_lift: return -0.88;  // radius 0.026 on half 0.022
    case TaskId::flip: return -0.84;        // radius 0.028 on half 0.025
    case TaskId::unstack: return -0.96;     // radius 0.022 on top half 0.018
  }
  return -0.88;
}

void emit_arm_path(ExpertPlan& plan, double from_x, double from_y, double to_x, double to_y) {
  double dx = to_x - from_x, dy = to_y - from_y;
  double span = std::max(std::abs(dx), std::abs(dy));
  if (span < 1e-12) return;
  int n = static_cast<int>(std::ceil(span / kArmStepLimit));
  for (int k = 0; k < n; ++k) {
    Action a{};
    a[0] = dx / n;
    a[1] = dy / n;
    plan.actions.push_back(a);
  }
}

// Simultaneous joint ramp: one entry per (action index, total delta).
void emit_joint_move(ExpertPlan& plan, const std::vector<std::pair<int, double>>& deltas) {
  double span = 0.0;
  for (const auto& [idx, d] : deltas) span = std::max(span, std::abs(d));
  if (span < 1e-12) return;
  int n = static_cast<int>(std::ceil(span / kJointStepLimit));
  for (int k = 0; k < n; ++k) {
    Action a{};
    for (const auto& [idx, d] : deltas) a[idx] = d / n;
    plan.actions.push_back(a);
  }
}

void emit_dwell(ExpertPlan& plan, int steps) {
  for (int k = 0; k < steps; ++k) plan.actions.push_back(Action{});
}

// The close alone can miss the pinch trigger when the plan is replayed with
// subdivided steps: the resolver sheds the whole squeeze onto finger 1 each
// tick, so finger 2's raw depth stays at rest plus one half-size advance.
// Two out-and-back arm presses toward finger 1 drive finger 2's tip into the
// object while finger 1 keeps its carried excess, so both raw depths clear
// the pinch threshold in the same tick at any control rate.
void emit_engage_press(ExpertPlan& plan, const SimState& start) {
  double ang = kMountAngle[1] + start.joints[1][0];
  for (int k = 0; k < 2; ++k) {
    Action out{};
    out[0] = 0.002 * std::cos(ang);
    out[1] = 0.002 * std::sin(ang);
    plan.actions.push_back(out);
    Action back{};
    back[0] = -out[0];
    back[1] = -out[1];
    plan.actions.push_back(back);
  }
}

}  // namespace

ExpertPlan scripted_expert(const TaskSpec& task, const SimState& start) {
  const ObjectState& grasp_obj =
      task.id == TaskId::unstack ? start.objects.at(1) : start.objects.at(0);

  double off_x = grasp_obj.x - task.nominal_x;
  double off_y = grasp_obj.y - task.nominal_y;
  if (std::abs(off_x) > 2.0 * task.perturb_xy || std::abs(off_y) > 2.0 * task.perturb_xy) {
    throw PlanningError("scripted_expert: object pose outside planned reach");
  }

  ExpertPlan plan;
  // Approach: arm center onto the object so the pre-shaped opposing pair
  // brackets it.
  emit_arm_path(plan, start.arm_x, start.arm_y, grasp_obj.x, grasp_obj.y);

  // Close: ramp the pair's reach joints (action indices 5 and 7) to the
  // grip radius.
  double grip = grip_reach_joint(task.id);
  emit_joint_move(plan, {{5, grip - start.joints[1][1]}, {7, grip - start.joints[2][1]}});

  switch (task.id) {
    case TaskId::pinch_lift:
      emit_arm_path(plan, grasp_obj.x, grasp_obj.y, task.target_x, task.target_y);
      break;
    case TaskId::flip: {
      // Swing both pair fingers together: the pinched object's yaw tracks
      // the tip line, 0.02 rad per step. Overshoot the threshold a little.
      double rotate = task.flip_angle + 0.16;
      emit_joint_move(plan, {{4, rotate}, {6, rotate}});
      break;
    }
    case TaskId::unstack:
      // Carry relative to the stack so separation holds wherever it stood.
      emit_engage_press(plan, start);
      emit_arm_path(plan, grasp_obj.x, grasp_obj.y, grasp_obj.x + 0.13, grasp_obj.y);
      break;
  }
  emit_dwell(plan, 4);

  if (static_cast<int>(plan.actions.size()) > task.episode_steps) {
    throw PlanningError("scripted_expert: plan does not fit the episode budget");
  }
  return plan;
}

std::vector<PoseSample> replay_break_poses(TaskId id) {
  // Offsets well past the grasp capture range (a few millimeters); the
  // flip case also turns the square so the faces no longer line up.
  switch (id) {
    case TaskId::pinch_lift:
      return {{0.05, 0.0, 0.0}, {0.0, -0.05, 0.2}, {-0.04, 0.04, -0.26}};
    case TaskId::flip:
      return {{0.05, 0.03, 0.0}, {-0.05, 0.0, 0.26}, {0.0, 0.05, -0.2}};
    case TaskId::unstack:
      return {{-0.05, 0.04, 0.0}, {0.05, 0.0, 0.0}, {0.0, -0.05, 0.26}};
  }
  return {};
}

}  // namespace tavi::env
