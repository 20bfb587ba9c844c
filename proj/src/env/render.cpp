#include "tavi/env/render.hpp"

#include <algorithm>
#include <cmath>

namespace tavi::env {

namespace {

struct Grid {
  double x0, y1, cell;  // left edge, top edge, meters per pixel

  double px(int c) const { return x0 + (c + 0.5) * cell; }
  double py(int r) const { return y1 - (r + 0.5) * cell; }
  int col(double x) const { return static_cast<int>(std::floor((x - x0) / cell)); }
  int row(double y) const { return static_cast<int>(std::floor((y1 - y) / cell)); }
  bool inside(int r, int c) const {
    return r >= 0 && r < kRasterSize && c >= 0 && c < kRasterSize;
  }
};

bool in_square(const ObjectState& obj, double x, double y) {
  double c = std::cos(-obj.yaw), s = std::sin(-obj.yaw);
  double dx = x - obj.x, dy = y - obj.y;
  double lx = c * dx - s * dy;
  double ly = s * dx + c * dy;
  return std::abs(lx) <= obj.half && std::abs(ly) <= obj.half;
}

}  // namespace

std::vector<std::uint8_t> raster_coverage(const SimState& state, const CameraPose& cam) {
  Grid g{cam.cx - cam.width / 2.0, cam.cy + cam.width / 2.0,
         cam.width / static_cast<double>(kRasterSize)};
  std::vector<std::uint8_t> cov(kRasterSize * kRasterSize, kPixBackground);

  {
    int r = g.row(state.arm_y), c = g.col(state.arm_x);
    if (g.inside(r, c)) cov[r * kRasterSize + c] = kPixArm;
  }

  // Objects in layer order so riders paint over their base.
  std::vector<std::size_t> order(state.objects.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return state.objects[a].layer < state.objects[b].layer;
  });
  for (std::size_t k : order) {
    const ObjectState& obj = state.objects[k];
    for (int r = 0; r < kRasterSize; ++r) {
      for (int c = 0; c < kRasterSize; ++c) {
        if (in_square(obj, g.px(c), g.py(r))) {
          cov[r * kRasterSize + c] = static_cast<std::uint8_t>(kPixObjectBase + k);
        }
      }
    }
  }

  // Fingertips last; the tip is smaller than a pixel, so the pixel holding
  // the tip center is always stamped.
  for (int f = 0; f < kFingers; ++f) {
    auto tip = fingertip(state, f);
    for (int r = 0; r < kRasterSize; ++r) {
      for (int c = 0; c < kRasterSize; ++c) {
        double dx = g.px(c) - tip[0], dy = g.py(r) - tip[1];
        if (dx * dx + dy * dy <= kTipRadius * kTipRadius) cov[r * kRasterSize + c] = kPixTip;
      }
    }
    int r = g.row(tip[1]), c = g.col(tip[0]);
    if (g.inside(r, c)) cov[r * kRasterSize + c] = kPixTip;
  }
  return cov;
}

VisualObs render_visual(const SimState& state, const CameraPose& cam) {
  std::vector<std::uint8_t> cov = raster_coverage(state, cam);
  VisualObs obs;
  obs.pix.resize(cov.size());
  for (std::size_t i = 0; i < cov.size(); ++i) {
    double shade = 0.0;
    if (cov[i] == kPixArm) {
      shade = 0.2;
    } else if (cov[i] == kPixTip) {
      shade = 0.35;
    } else if (cov[i] >= kPixObjectBase) {
      shade = state.objects[cov[i] - kPixObjectBase].shade;
    }
    obs.pix[i] = static_cast<std::uint8_t>(std::lround(shade * 255.0));
  }
  return obs;
}

}  // namespace tavi::env
