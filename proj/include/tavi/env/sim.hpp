#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "tavi/numerics/rng.hpp"

namespace tavi::env {

// World scale: meters and radians in a [0,1]^2 planar workspace viewed
// top-down. One step is a 10 Hz control tick.
inline constexpr double kWorkspaceMin = 0.0;
inline constexpr double kWorkspaceMax = 1.0;
inline constexpr double kArmStepLimit = 0.01;    // per-step arm delta clamp
inline constexpr double kJointStepLimit = 0.02;  // per-step joint delta clamp

inline constexpr int kFingers = 3;
inline constexpr int kJointsPerFinger = 2;
inline constexpr int kActionDim = 2 + kFingers * kJointsPerFinger;

// Finger kinematics are polar rays from the arm center: joint 0 swings the
// ray off its mount angle, joint 1 sets the reach. Swing and reach rails
// keep grasp planning invertible in closed form.
inline constexpr double kMountAngle[kFingers] = {1.5707963267948966,   // 90 deg
                                                 3.6651914291880923,   // 210 deg
                                                 5.7595865315812871};  // 330 deg
inline constexpr double kSwingLimit = 1.2;  // joint 0 range, radians
inline constexpr double kReachBase = 0.07;  // reach at joint 1 = 0
inline constexpr double kReachScale = 0.05;
inline constexpr double kReachJointLimit = 1.0;  // joint 1 range
inline constexpr double kTipRadius = 0.008;

// Contact model: linear spring against penetration with a friction floor.
// Pushing resolves penetration down to the rest depth, which makes a zero
// action an exact fixed point of step().
inline constexpr double kContactStiffness = 200.0;
inline constexpr double kFrictionForce = 0.02;
inline constexpr double kRestDepth = kFrictionForce / kContactStiffness;
inline constexpr double kRotGain = 0.6;      // push torque coupling
inline constexpr double kAttachDepth = 8e-4; // raw squeeze depth that pinches
inline constexpr double kOpposeDot = -0.3;   // max normal dot for a pinch
inline constexpr double kReleaseSlack = 0.004;
inline constexpr double kRideFrac = 0.8;     // stack riding radius, x bottom half

struct ObjectState {
  double x = 0.0, y = 0.0, yaw = 0.0;
  double half = 0.02;   // square half-extent
  double shade = 0.9;   // render intensity
  int layer = 0;        // stacking order, higher rides lower
  double init_x = 0.0, init_y = 0.0, init_yaw = 0.0;
};

struct Contact {
  int finger = -1;
  int object = -1;
  double depth = 0.0;            // raw penetration before resolution
  double px = 0.0, py = 0.0;     // contact point on the object surface
  double nx = 0.0, ny = 0.0;     // unit normal, surface towards tip center
  double slip_x = 0.0, slip_y = 0.0;  // tip motion relative to object this step
};

struct SimState {
  double arm_x = 0.5, arm_y = 0.5, arm_yaw = 0.0;
  std::array<std::array<double, kJointsPerFinger>, kFingers> joints{};
  std::vector<ObjectState> objects;

  // Pinch bookkeeping: an attached object rigidly follows the arm and its
  // yaw tracks the line between the two pinching fingertips.
  int attached = -1;
  int pinch_a = -1, pinch_b = -1;
  double attach_dist = 0.0;  // tip pair distance at grab time
  double attach_line = 0.0;  // tip pair angle after the latest step

  std::vector<Contact> contacts;
};

enum class TaskId { pinch_lift, flip, unstack };

TaskId task_from_name(const std::string& name);
std::string task_name(TaskId id);

// Pose offset applied to the task's nominal object placement.
struct PoseSample {
  double dx = 0.0, dy = 0.0, dyaw = 0.0;
};

struct TaskSpec {
  TaskId id = TaskId::pinch_lift;
  std::string name;
  int episode_steps = 60;
  double nominal_x = 0.5, nominal_y = 0.5;
  double target_x = 0.0, target_y = 0.0;  // carry destination (pinch_lift, unstack)
  double success_dist = 0.03;             // pinch_lift target radius
  double separation_dist = 0.10;          // unstack separation
  double flip_angle = 1.0;                // flip yaw change threshold
  double perturb_xy = 0.04, perturb_yaw = 0.2617993877991494;  // 15 deg
};

TaskSpec make_task(TaskId id);

// Uniform pose offset within the task's perturbation bounds.
PoseSample sample_pose(const TaskSpec& task, numerics::RngStream& rng);

// Initial state: pre-shaped hand at the task staging point, objects at the
// nominal placement shifted by the offset.
SimState reset_task(const TaskSpec& task, const PoseSample& offset = {});

using Action = std::array<double, kActionDim>;

// Per-dimension clamp to the step limits. Layout: [arm dx, arm dy,
// f0 swing, f0 reach, f1 swing, f1 reach, f2 swing, f2 reach].
Action clamp_action(const Action& action);

// One 10 Hz tick: clamped deltas, joint limits, pinch carry, then
// quasi-static push resolution for unattached objects. Deterministic; a
// zero action returns the state unchanged.
SimState step(const SimState& state, const Action& action);

// Fingertip world position from the polar joint values.
std::array<double, 2> fingertip(const SimState& state, int finger);

// Pure success predicate; the harness latches it across an episode.
bool task_success(const TaskSpec& task, const SimState& state);

// Robot state vector for representation targets: arm pose (3) plus joint
// angles (6), in declaration order.
inline constexpr int kRobotStateDim = 3 + kFingers * kJointsPerFinger;
std::vector<double> state_vector(const SimState& state);

}  // namespace tavi::env
