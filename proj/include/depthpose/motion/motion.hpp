#pragma once

#include <string>

#include "depthpose/core/image.hpp"

namespace depthpose::motion {

struct FlowField {
  Image dx;  // pixels, positive = rightward
  Image dy;  // pixels, positive = downward
};

struct FarnebackParams {
  double pyr_scale = 0.5;
  int levels = 3;
  int winsize = 15;
  int iterations = 3;
  int poly_n = 5;
  double poly_sigma = 1.1;
};

// Dense flow from prev to curr. The pair is mapped to 8-bit jointly over the
// shared value range, so already-normalized inputs (negative values, unit
// variance) are fine.
FlowField farneback_flow(const Image& prev, const Image& curr,
                         const FarnebackParams& params = {});

struct MotionImage {
  Image dx;  // in [-1, 1]
  Image dy;
};

constexpr double kFlowClipPx = 8.0;

// Each channel = clamp(component / clip, -1, 1).
MotionImage flow_to_motion_image(const FlowField& flow, double clip = kFlowClipPx);

// Sentinel for the first frame of a sequence (no predecessor).
MotionImage zero_motion(int height, int width);

// Debug dump as paired 16-bit images, offset-encoded: 32768 = zero
// displacement, 1 unit = 1/64 px. Writes <stem>_dx.png / <stem>_dy.png.
void dump_flow(const std::string& stem, const FlowField& flow);
FlowField load_flow_dump(const std::string& stem);

}  // namespace depthpose::motion
