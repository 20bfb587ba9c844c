#include "tavi/env/tactile.hpp"

#include <algorithm>
#include <cmath>

namespace tavi::env {

TactileReading sense_tactile(const SimState& state) {
  TactileReading reading;
  for (const Contact& c : state.contacts) {
    double ang = kMountAngle[c.finger] + state.joints[c.finger][0];
    double ux = std::cos(ang), uy = std::sin(ang);   // radial, along the ray
    double vx = -uy, vy = ux;                        // tangential, across it

    auto tip = fingertip(state, c.finger);
    double ox = c.px - tip[0], oy = c.py - tip[1];
    double wx = std::clamp(0.5 + (ox * vx + oy * vy) / (2.0 * kTipRadius), 0.0, 1.0);
    double wy = std::clamp(0.5 + (ox * ux + oy * uy) / (2.0 * kTipRadius), 0.0, 1.0);

    double normal = std::min(kContactStiffness * c.depth, kTactileForceClip);
    double tan_v = kSlipFriction * (c.slip_x * vx + c.slip_y * vy);
    double tan_u = kSlipFriction * (c.slip_x * ux + c.slip_y * uy);

    for (int r = 0; r < kTaxelRows; ++r) {
      for (int col = 0; col < kTaxelCols; ++col) {
        double w = (r == 1 ? wy : 1.0 - wy) * (col == 1 ? wx : 1.0 - wx);
        reading.at(c.finger, r, col, 0) += w * tan_v;
        reading.at(c.finger, r, col, 1) += w * tan_u;
        reading.at(c.finger, r, col, 2) += w * normal;
      }
    }
  }
  return reading;
}

}  // namespace tavi::env
