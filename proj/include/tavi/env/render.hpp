#pragma once

#include <cstdint>
#include <vector>

#include "tavi/env/sim.hpp"

namespace tavi::env {

// Fixed top-down camera: a square viewport centered on the workspace.
struct CameraPose {
  double cx = 0.5, cy = 0.5;
  double width = 0.40;  // meters covered by the raster
};

inline constexpr int kRasterSize = 32;

// Grayscale raster with intensities quantized to k/255, so the byte buffer
// is the lossless storage form. Row 0 is the top of the viewport (max y).
struct VisualObs {
  int h = kRasterSize, w = kRasterSize;
  std::vector<std::uint8_t> pix;

  double intensity(int r, int c) const { return pix[r * w + c] / 255.0; }
};

// Per-pixel visible source, painter order: arm marker, objects by layer,
// fingertips on top. Object k gets code kPixObjectBase + k.
inline constexpr std::uint8_t kPixBackground = 0;
inline constexpr std::uint8_t kPixArm = 1;
inline constexpr std::uint8_t kPixTip = 2;
inline constexpr std::uint8_t kPixObjectBase = 3;

std::vector<std::uint8_t> raster_coverage(const SimState& state, const CameraPose& cam = {});

// Deterministic rasterization of the coverage map: background 0.0, arm
// marker 0.2, fingertips 0.35, objects at their configured shade.
VisualObs render_visual(const SimState& state, const CameraPose& cam = {});

}  // namespace tavi::env
