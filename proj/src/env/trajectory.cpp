#include "tavi/env/trajectory.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "tavi/errors.hpp"
#include "tavi/numerics/tensor.hpp"

namespace tavi::env {

using nlohmann::json;
using tavi::numerics::format_double;

namespace {

constexpr int kTrajectoryVersion = 1;

json state_to_json(const SimState& s) {
  json j;
  j["arm"] = {s.arm_x, s.arm_y, s.arm_yaw};
  json joints = json::array();
  for (int f = 0; f < kFingers; ++f) {
    for (int k = 0; k < kJointsPerFinger; ++k) joints.push_back(s.joints[f][k]);
  }
  j["joints"] = std::move(joints);
  json objs = json::array();
  for (const ObjectState& o : s.objects) {
    objs.push_back({o.x, o.y, o.yaw, o.half, o.shade, o.layer, o.init_x, o.init_y, o.init_yaw});
  }
  j["objects"] = std::move(objs);
  j["attached"] = s.attached;
  j["pinch"] = {s.pinch_a, s.pinch_b};
  j["attach_dist"] = s.attach_dist;
  j["attach_line"] = s.attach_line;
  json contacts = json::array();
  for (const Contact& c : s.contacts) {
    contacts.push_back({c.finger, c.object, c.depth, c.px, c.py, c.nx, c.ny, c.slip_x, c.slip_y});
  }
  j["contacts"] = std::move(contacts);
  return j;
}

SimState state_from_json(const json& j) {
  SimState s;
  s.arm_x = j.at("arm").at(0).get<double>();
  s.arm_y = j.at("arm").at(1).get<double>();
  s.arm_yaw = j.at("arm").at(2).get<double>();
  const json& joints = j.at("joints");
  for (int f = 0; f < kFingers; ++f) {
    for (int k = 0; k < kJointsPerFinger; ++k) {
      s.joints[f][k] = joints.at(f * kJointsPerFinger + k).get<double>();
    }
  }
  for (const json& o : j.at("objects")) {
    ObjectState obj;
    obj.x = o.at(0).get<double>();
    obj.y = o.at(1).get<double>();
    obj.yaw = o.at(2).get<double>();
    obj.half = o.at(3).get<double>();
    obj.shade = o.at(4).get<double>();
    obj.layer = o.at(5).get<int>();
    obj.init_x = o.at(6).get<double>();
    obj.init_y = o.at(7).get<double>();
    obj.init_yaw = o.at(8).get<double>();
    s.objects.push_back(obj);
  }
  s.attached = j.at("attached").get<int>();
  s.pinch_a = j.at("pinch").at(0).get<int>();
  s.pinch_b = j.at("pinch").at(1).get<int>();
  s.attach_dist = j.at("attach_dist").get<double>();
  s.attach_line = j.at("attach_line").get<double>();
  for (const json& c : j.at("contacts")) {
    Contact ct;
    ct.finger = c.at(0).get<int>();
    ct.object = c.at(1).get<int>();
    ct.depth = c.at(2).get<double>();
    ct.px = c.at(3).get<double>();
    ct.py = c.at(4).get<double>();
    ct.nx = c.at(5).get<double>();
    ct.ny = c.at(6).get<double>();
    ct.slip_x = c.at(7).get<double>();
    ct.slip_y = c.at(8).get<double>();
    s.contacts.push_back(ct);
  }
  return s;
}

bool action_fits_clamps(const Action& a) {
  const double slack = 1e-12;
  if (std::abs(a[0]) > kArmStepLimit + slack) return false;
  if (std::abs(a[1]) > kArmStepLimit + slack) return false;
  for (int i = 2; i < kActionDim; ++i) {
    if (std::abs(a[i]) > kJointStepLimit + slack) return false;
  }
  return true;
}

Action action_sum(const Action& a, const Action& b) {
  Action r;
  for (int i = 0; i < kActionDim; ++i) r[i] = a[i] + b[i];
  return r;
}

}  // namespace

Trajectory record_demo_trajectory(const TaskSpec& task, const SimState& start,
                                  const ExpertPlan& plan, std::uint64_t seed) {
  const double record_hz = 20.0;
  Trajectory traj;
  traj.task = task.name;
  traj.seed = seed;
  traj.hz = record_hz;

  SimState s = start;
  traj.success = task_success(task, s);
  std::size_t tick = 0;
  auto capture = [&](const SimState& state, const Action& act) {
    TrajStep step;
    step.t = static_cast<double>(tick) / record_hz;
    step.state = state;
    step.tactile = sense_tactile(state);
    step.obs = render_visual(state);
    step.action = act;
    traj.steps.push_back(std::move(step));
    ++tick;
  };

  for (const Action& full : plan.actions) {
    Action half;
    for (int i = 0; i < kActionDim; ++i) half[i] = full[i] / 2.0;
    for (int rep = 0; rep < 2; ++rep) {
      capture(s, half);
      s = step(s, half);
      traj.success = traj.success || task_success(task, s);
    }
  }
  capture(s, Action{});
  return traj;
}

void write_trajectory(const std::string& path, const Trajectory& traj) {
  std::ofstream out(path);
  if (!out) throw DataError("write_trajectory: cannot open " + path);
  json header;
  header["format"] = "tavi.trajectory";
  header["version"] = kTrajectoryVersion;
  header["task"] = traj.task;
  header["seed"] = traj.seed;
  header["success"] = traj.success;
  header["hz"] = traj.hz;
  out << header.dump() << "\n";
  for (const TrajStep& step : traj.steps) {
    json j;
    j["t"] = step.t;
    j["s"] = state_to_json(step.state);
    j["tau"] = step.tactile.values;
    j["pix"] = step.obs.pix;
    j["a"] = step.action;
    out << j.dump() << "\n";
  }
  if (!out) throw DataError("write_trajectory: write failed for " + path);
}

Trajectory read_trajectory(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("read_trajectory: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError("read_trajectory: empty file " + path);

  Trajectory traj;
  try {
    json header = json::parse(line);
    if (header.at("format").get<std::string>() != "tavi.trajectory") {
      throw DataError("read_trajectory: not a trajectory file");
    }
    if (header.at("version").get<int>() != kTrajectoryVersion) {
      throw DataError("read_trajectory: unsupported version");
    }
    traj.task = header.at("task").get<std::string>();
    traj.seed = header.at("seed").get<std::uint64_t>();
    traj.success = header.at("success").get<bool>();
    traj.hz = header.at("hz").get<double>();

    while (std::getline(in, line)) {
      if (line.empty()) continue;
      json j = json::parse(line);
      TrajStep step;
      step.t = j.at("t").get<double>();
      step.state = state_from_json(j.at("s"));
      const json& tau = j.at("tau");
      for (int i = 0; i < kTactileDim; ++i) step.tactile.values[i] = tau.at(i).get<double>();
      const json& pix = j.at("pix");
      step.obs.pix.resize(pix.size());
      for (std::size_t i = 0; i < pix.size(); ++i) {
        step.obs.pix[i] = static_cast<std::uint8_t>(pix.at(i).get<int>());
      }
      const json& a = j.at("a");
      for (int i = 0; i < kActionDim; ++i) step.action[i] = a.at(i).get<double>();
      traj.steps.push_back(std::move(step));
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("read_trajectory: parse error: ") + e.what());
  }
  if (traj.steps.empty()) throw DataError("read_trajectory: no steps in " + path);
  return traj;
}

void write_state_csv(const std::string& path, const Trajectory& traj) {
  std::ofstream out(path);
  if (!out) throw DataError("write_state_csv: cannot open " + path);
  out << "t,arm_x,arm_y,arm_yaw";
  for (int f = 0; f < kFingers; ++f) {
    for (int k = 0; k < kJointsPerFinger; ++k) out << ",f" << f << "j" << k;
  }
  std::size_t n_obj = traj.steps.empty() ? 0 : traj.steps.front().state.objects.size();
  for (std::size_t k = 0; k < n_obj; ++k) {
    out << ",obj" << k << "_x,obj" << k << "_y,obj" << k << "_yaw";
  }
  out << ",attached\n";
  for (const TrajStep& step : traj.steps) {
    out << format_double(step.t);
    for (double v : state_vector(step.state)) out << "," << format_double(v);
    for (std::size_t k = 0; k < n_obj; ++k) {
      const ObjectState& o = step.state.objects[k];
      out << "," << format_double(o.x) << "," << format_double(o.y) << ","
          << format_double(o.yaw);
    }
    out << "," << step.state.attached << "\n";
  }
  if (!out) throw DataError("write_state_csv: write failed for " + path);
}

double robot_movement(const SimState& a, const SimState& b) {
  double total = std::hypot(b.arm_x - a.arm_x, b.arm_y - a.arm_y);
  for (int f = 0; f < kFingers; ++f) {
    auto ta = fingertip(a, f);
    auto tb = fingertip(b, f);
    total += std::hypot(tb[0] - ta[0], tb[1] - ta[1]);
  }
  return total;
}

Trajectory preprocess_demo(const Trajectory& raw, double target_hz, double move_thresh) {
  if (raw.steps.empty()) throw DataError("preprocess_demo: empty trajectory");
  if (!(target_hz > 0.0) || target_hz > raw.hz) {
    throw ConfigError("preprocess_demo: target rate must be positive and at most the raw rate");
  }
  double ratio = raw.hz / target_hz;
  auto stride = static_cast<std::size_t>(std::llround(ratio));
  if (std::abs(ratio - static_cast<double>(stride)) > 1e-9 || stride == 0) {
    throw ConfigError("preprocess_demo: raw rate must be an integer multiple of the target");
  }

  // Pass 1: subsample to the target grid, composing the actions inside
  // each stride.
  std::vector<TrajStep> sub;
  for (std::size_t i = 0; i < raw.steps.size(); i += stride) {
    TrajStep step = raw.steps[i];
    Action composed{};
    for (std::size_t k = i; k < std::min(i + stride, raw.steps.size()); ++k) {
      composed = action_sum(composed, raw.steps[k].action);
    }
    step.action = composed;
    sub.push_back(std::move(step));
  }

  // Pass 2: greedy idle merge. A segment keeps absorbing transitions while
  // its cumulative movement is under the threshold and the composed action
  // still fits the clamps; a trailing all-idle segment is dropped.
  Trajectory out;
  out.task = raw.task;
  out.seed = raw.seed;
  out.success = raw.success;
  out.hz = target_hz;

  std::size_t last = sub.size() - 1;
  std::size_t i = 0;
  while (i < last) {
    std::size_t j = i + 1;
    Action act = sub[i].action;
    double move = robot_movement(sub[i].state, sub[j].state);
    while (j < last && move < move_thresh &&
           action_fits_clamps(action_sum(act, sub[j].action))) {
      act = action_sum(act, sub[j].action);
      move += robot_movement(sub[j].state, sub[j + 1].state);
      ++j;
    }
    if (j == last && move < move_thresh) break;  // trailing idle
    TrajStep step = sub[i];
    step.action = act;
    out.steps.push_back(std::move(step));
    i = j;
  }
  if (out.steps.empty()) {
    throw DataError("preprocess_demo: no transitions above the movement threshold");
  }
  TrajStep terminal = sub[i];
  terminal.action = Action{};
  out.steps.push_back(std::move(terminal));

  for (std::size_t k = 0; k < out.steps.size(); ++k) {
    out.steps[k].t = static_cast<double>(k) / target_hz;
  }
  return out;
}

}  // namespace tavi::env
