#pragma once

#include <array>

#include "tavi/env/sim.hpp"

namespace tavi::env {

// One 2x2 triaxial sensor per fingertip. Axis order per taxel: tangential
// (across the finger ray), radial (along the finger ray), normal. The
// normal component is stiffness times penetration, clipped, so it is never
// negative; tangential components carry the contact slip.
inline constexpr int kTaxelRows = 2;
inline constexpr int kTaxelCols = 2;
inline constexpr int kTaxelAxes = 3;
inline constexpr int kTactileDim = kFingers * kTaxelRows * kTaxelCols * kTaxelAxes;
inline constexpr double kTactileForceClip = 3.0;
inline constexpr double kSlipFriction = 5.0;

struct TactileReading {
  std::array<double, kTactileDim> values{};

  double at(int sensor, int row, int col, int axis) const {
    return values[((sensor * kTaxelRows + row) * kTaxelCols + col) * kTaxelAxes + axis];
  }
  double& at(int sensor, int row, int col, int axis) {
    return values[((sensor * kTaxelRows + row) * kTaxelCols + col) * kTaxelAxes + axis];
  }
};

// Pure function of the state's contact set: an empty set reads all zeros.
// Taxel activation is localized by the contact point's offset in the tip
// frame (bilinear over the 2x2 grid).
TactileReading sense_tactile(const SimState& state);

}  // namespace tavi::env
