#include "tavi/env/sim.hpp"

#include <algorithm>
#include <cmath>

#include "tavi/errors.hpp"

namespace tavi::env {

namespace {

constexpr double kPi = 3.141592653589793;

double wrap_angle(double a) {
  while (a > kPi) a -= 2.0 * kPi;
  while (a <= -kPi) a += 2.0 * kPi;
  return a;
}

double clampd(double v, double lo, double hi) { return std::min(std::max(v, lo), hi); }

double cross2(double ax, double ay, double bx, double by) { return ax * by - ay * bx; }

// Circle-vs-oriented-square penetration. Returns depth > 0 with the contact
// point on the square surface and the unit normal pointing from the surface
// towards the tip center.
struct SquareHit {
  bool touching = false;
  double depth = 0.0;
  double px = 0.0, py = 0.0;
  double nx = 0.0, ny = 0.0;
};

SquareHit square_contact(const ObjectState& obj, double tx, double ty) {
  SquareHit hit;
  double c = std::cos(-obj.yaw), s = std::sin(-obj.yaw);
  double dx = tx - obj.x, dy = ty - obj.y;
  double lx = c * dx - s * dy;
  double ly = s * dx + c * dy;
  double qx = clampd(lx, -obj.half, obj.half);
  double qy = clampd(ly, -obj.half, obj.half);

  double nlx, nly, dist;
  if (qx == lx && qy == ly) {
    // Tip center inside the square: exit through the nearest face.
    double ex = obj.half - std::abs(lx);
    double ey = obj.half - std::abs(ly);
    if (ex <= ey) {
      nlx = lx >= 0.0 ? 1.0 : -1.0;
      nly = 0.0;
      qx = nlx * obj.half;
      dist = -ex;
    } else {
      nlx = 0.0;
      nly = ly >= 0.0 ? 1.0 : -1.0;
      qy = nly * obj.half;
      dist = -ey;
    }
  } else {
    double ux = lx - qx, uy = ly - qy;
    dist = std::sqrt(ux * ux + uy * uy);
    nlx = ux / dist;
    nly = uy / dist;
  }

  double depth = kTipRadius - dist;
  if (depth <= 0.0) return hit;

  double cw = std::cos(obj.yaw), sw = std::sin(obj.yaw);
  hit.touching = true;
  hit.depth = depth;
  hit.px = obj.x + cw * qx - sw * qy;
  hit.py = obj.y + sw * qx + cw * qy;
  hit.nx = cw * nlx - sw * nly;
  hit.ny = sw * nlx + cw * nly;
  return hit;
}

bool object_ridden(const SimState& state, int idx) {
  const ObjectState& base = state.objects[idx];
  for (std::size_t j = 0; j < state.objects.size(); ++j) {
    if (static_cast<int>(j) == idx) continue;
    const ObjectState& other = state.objects[j];
    if (other.layer <= base.layer) continue;
    double dx = other.x - base.x, dy = other.y - base.y;
    if (std::sqrt(dx * dx + dy * dy) <= kRideFrac * base.half) return true;
  }
  return false;
}

double tip_pair_angle(const SimState& state, int a, int b) {
  auto ta = fingertip(state, a);
  auto tb = fingertip(state, b);
  return std::atan2(tb[1] - ta[1], tb[0] - ta[0]);
}

double tip_pair_dist(const SimState& state, int a, int b) {
  auto ta = fingertip(state, a);
  auto tb = fingertip(state, b);
  return std::hypot(tb[0] - ta[0], tb[1] - ta[1]);
}

}  // namespace

TaskId task_from_name(const std::string& name) {
  if (name == "pinch_lift") return TaskId::pinch_lift;
  if (name == "flip") return TaskId::flip;
  if (name == "unstack") return TaskId::unstack;
  throw ConfigError("unknown task: " + name);
}

std::string task_name(TaskId id) {
  switch (id) {
    case TaskId::pinch_lift: return "pinch_lift";
    case TaskId::flip: return "flip";
    case TaskId::unstack: return "unstack";
  }
  throw ConfigError("unknown task id");
}

TaskSpec make_task(TaskId id) {
  TaskSpec t;
  t.id = id;
  t.name = task_name(id);
  switch (id) {
    case TaskId::pinch_lift:
      t.episode_steps = 70;
      t.nominal_x = 0.5;
      t.nominal_y = 0.5;
      t.target_x = 0.40;
      t.target_y = 0.44;
      t.success_dist = 0.03;
      break;
    case TaskId::flip:
      // Joint clamps bound tip-line rotation to 0.02 rad per step, so the
      // flip needs the longest episode.
      t.episode_steps = 110;
      t.nominal_x = 0.5;
      t.nominal_y = 0.5;
      t.flip_angle = 1.0;
      break;
    case TaskId::unstack:
      t.episode_steps = 70;
      t.nominal_x = 0.46;
      t.nominal_y = 0.5;
      t.target_x = 0.59;
      t.target_y = 0.5;
      t.separation_dist = 0.10;
      break;
  }
  return t;
}

PoseSample sample_pose(const TaskSpec& task, numerics::RngStream& rng) {
  PoseSample p;
  p.dx = rng.uniform(-task.perturb_xy, task.perturb_xy);
  p.dy = rng.uniform(-task.perturb_xy, task.perturb_xy);
  p.dyaw = rng.uniform(-task.perturb_yaw, task.perturb_yaw);
  return p;
}

SimState reset_task(const TaskSpec& task, const PoseSample& offset) {
  SimState s;
  // Staging point sits off the pinch axis so the approach path keeps both
  // grasp fingers clear of the object.
  const double stage_angle = kPi / 3.0;
  s.arm_x = task.nominal_x + 0.15 * std::cos(stage_angle);
  s.arm_y = task.nominal_y + 0.15 * std::sin(stage_angle);
  s.arm_yaw = 0.0;

  // Pre-shaped hand: finger 0 parked long, fingers 1 and 2 swung into an
  // opposing pair at approach reach.
  s.joints[0] = {0.0, kReachJointLimit};
  s.joints[1] = {-kPi / 3.0, -0.4};
  s.joints[2] = {0.0, -0.4};

  ObjectState obj;
  obj.x = task.nominal_x + offset.dx;
  obj.y = task.nominal_y + offset.dy;
  obj.yaw = offset.dyaw;
  switch (task.id) {
    case TaskId::pinch_lift:
      obj.half = 0.022;
      obj.shade = 0.9;
      s.objects.push_back(obj);
      break;
    case TaskId::flip:
      obj.half = 0.025;
      obj.shade = 0.9;
      s.objects.push_back(obj);
      break;
    case TaskId::unstack: {
      obj.half = 0.03;
      obj.shade = 0.55;
      s.objects.push_back(obj);
      ObjectState top = obj;
      top.half = 0.018;
      top.shade = 0.95;
      top.layer = 1;
      s.objects.push_back(top);
      break;
    }
  }
  for (auto& o : s.objects) {
    o.init_x = o.x;
    o.init_y = o.y;
    o.init_yaw = o.yaw;
  }
  return s;
}

Action clamp_action(const Action& action) {
  Action a = action;
  a[0] = clampd(a[0], -kArmStepLimit, kArmStepLimit);
  a[1] = clampd(a[1], -kArmStepLimit, kArmStepLimit);
  for (int i = 2; i < kActionDim; ++i) a[i] = clampd(a[i], -kJointStepLimit, kJointStepLimit);
  return a;
}

std::array<double, 2> fingertip(const SimState& state, int finger) {
  double swing = state.joints[finger][0];
  double reach = kReachBase + kReachScale * state.joints[finger][1];
  double ang = kMountAngle[finger] + swing;
  return {state.arm_x + reach * std::cos(ang), state.arm_y + reach * std::sin(ang)};
}

std::vector<double> state_vector(const SimState& state) {
  std::vector<double> v;
  v.reserve(kRobotStateDim);
  v.push_back(state.arm_x);
  v.push_back(state.arm_y);
  v.push_back(state.arm_yaw);
  for (int f = 0; f < kFingers; ++f) {
    for (int j = 0; j < kJointsPerFinger; ++j) v.push_back(state.joints[f][j]);
  }
  return v;
}

SimState step(const SimState& state, const Action& action) {
  Action a = clamp_action(action);
  SimState next = state;

  std::array<std::array<double, 2>, kFingers> tips_before;
  for (int f = 0; f < kFingers; ++f) tips_before[f] = fingertip(state, f);
  std::vector<std::array<double, 2>> obj_before(state.objects.size());
  for (std::size_t k = 0; k < state.objects.size(); ++k) {
    obj_before[k] = {state.objects[k].x, state.objects[k].y};
  }

  next.arm_x = clampd(next.arm_x + a[0], 0.12, 0.88);
  next.arm_y = clampd(next.arm_y + a[1], 0.12, 0.88);
  for (int f = 0; f < kFingers; ++f) {
    next.joints[f][0] = clampd(next.joints[f][0] + a[2 + 2 * f], -kSwingLimit, kSwingLimit);
    next.joints[f][1] =
        clampd(next.joints[f][1] + a[3 + 2 * f], -kReachJointLimit, kReachJointLimit);
  }
  double arm_dx = next.arm_x - state.arm_x;
  double arm_dy = next.arm_y - state.arm_y;

  // Pinch carry: the attached object follows the arm and its yaw tracks the
  // pinching tip pair. The grip breaks if the pair spreads past its grab
  // distance plus slack.
  if (next.attached >= 0) {
    ObjectState& obj = next.objects[next.attached];
    obj.x += arm_dx;
    obj.y += arm_dy;
    double line = tip_pair_angle(next, next.pinch_a, next.pinch_b);
    obj.yaw += wrap_angle(line - next.attach_line);
    next.attach_line = line;
    if (tip_pair_dist(next, next.pinch_a, next.pinch_b) > next.attach_dist + kReleaseSlack) {
      next.attached = -1;
      next.pinch_a = next.pinch_b = -1;
    }
  }

  // Raw penetrations after the kinematic move, before any resolution.
  // Objects with another object riding on them are shadowed from finger
  // contact (the rider is what the hand interacts with).
  struct RawContact {
    int finger, object;
    SquareHit hit;
  };
  std::vector<RawContact> raw;
  for (std::size_t k = 0; k < next.objects.size(); ++k) {
    if (object_ridden(next, static_cast<int>(k))) continue;
    for (int f = 0; f < kFingers; ++f) {
      auto tip = fingertip(next, f);
      SquareHit hit = square_contact(next.objects[k], tip[0], tip[1]);
      if (hit.touching) raw.push_back({f, static_cast<int>(k), hit});
    }
  }

  // A pinch needs two fingers squeezing the same object from opposing
  // sides; squeeze depth is measured pre-resolution.
  if (next.attached < 0) {
    for (std::size_t i = 0; i < raw.size() && next.attached < 0; ++i) {
      for (std::size_t j = i + 1; j < raw.size(); ++j) {
        if (raw[i].object != raw[j].object) continue;
        if (raw[i].hit.depth < kAttachDepth || raw[j].hit.depth < kAttachDepth) continue;
        double dot = raw[i].hit.nx * raw[j].hit.nx + raw[i].hit.ny * raw[j].hit.ny;
        if (dot > kOpposeDot) continue;
        next.attached = raw[i].object;
        next.pinch_a = raw[i].finger;
        next.pinch_b = raw[j].finger;
        next.attach_dist = tip_pair_dist(next, next.pinch_a, next.pinch_b);
        next.attach_line = tip_pair_angle(next, next.pinch_a, next.pinch_b);
        break;
      }
    }
  }

  // Quasi-static pushing: resolve penetration beyond the rest depth by
  // translating the object away from the tip, with a torque term when the
  // contact sits off-center. Passes repeat until quiescent within a dead
  // zone, which makes every post-step state an exact fixed point of a zero
  // action.
  const double dead_zone = 1e-9;
  for (int pass = 0; pass < 16; ++pass) {
    bool moved = false;
    for (std::size_t k = 0; k < next.objects.size(); ++k) {
      if (static_cast<int>(k) == next.attached) continue;
      if (object_ridden(next, static_cast<int>(k))) continue;
      ObjectState& obj = next.objects[k];
      for (int f = 0; f < kFingers; ++f) {
        auto tip = fingertip(next, f);
        SquareHit hit = square_contact(obj, tip[0], tip[1]);
        if (!hit.touching) continue;
        double excess = hit.depth - kRestDepth;
        if (excess <= dead_zone) continue;
        moved = true;
        obj.x -= excess * hit.nx;
        obj.y -= excess * hit.ny;
        double lever_x = hit.px - obj.x, lever_y = hit.py - obj.y;
        obj.yaw += kRotGain * cross2(lever_x, lever_y, -hit.nx, -hit.ny) * excess /
                   (obj.half * obj.half);
        obj.x = clampd(obj.x, obj.half, kWorkspaceMax - obj.half);
        obj.y = clampd(obj.y, obj.half, kWorkspaceMax - obj.half);
        obj.yaw = wrap_angle(obj.yaw);
      }
    }
    if (!moved) break;
  }

  // Final contact set with per-contact slip for the tactile model.
  next.contacts.clear();
  for (std::size_t k = 0; k < next.objects.size(); ++k) {
    if (object_ridden(next, static_cast<int>(k))) continue;
    for (int f = 0; f < kFingers; ++f) {
      auto tip = fingertip(next, f);
      SquareHit hit = square_contact(next.objects[k], tip[0], tip[1]);
      if (!hit.touching) continue;
      Contact c;
      c.finger = f;
      c.object = static_cast<int>(k);
      c.depth = hit.depth;
      c.px = hit.px;
      c.py = hit.py;
      c.nx = hit.nx;
      c.ny = hit.ny;
      c.slip_x = (tip[0] - tips_before[f][0]) - (next.objects[k].x - obj_before[k][0]);
      c.slip_y = (tip[1] - tips_before[f][1]) - (next.objects[k].y - obj_before[k][1]);
      next.contacts.push_back(c);
    }
  }
  return next;
}

bool task_success(const TaskSpec& task, const SimState& state) {
  switch (task.id) {
    case TaskId::pinch_lift: {
      if (state.attached != 0) return false;
      const ObjectState& obj = state.objects[0];
      return std::hypot(obj.x - task.target_x, obj.y - task.target_y) <= task.success_dist;
    }
    case TaskId::flip: {
      const ObjectState& obj = state.objects[0];
      return std::abs(wrap_angle(obj.yaw - obj.init_yaw)) >= task.flip_angle;
    }
    case TaskId::unstack: {
      // Separation alone is not enough: an open-loop sweep can bulldoze the
      // top block off the stack, so the unstack must end with the block
      // held, not shoved.
      if (state.objects.size() < 2 || state.attached != 1) return false;
      const ObjectState& a = state.objects[0];
      const ObjectState& b = state.objects[1];
      return std::hypot(b.x - a.x, b.y - a.y) >= task.separation_dist;
    }
  }
  return false;
}

}  // namespace tavi::env
