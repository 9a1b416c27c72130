#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "depthpose/dataio/dataset.hpp"

namespace depthpose::dataio {

// Analytic test scenes: an ellipsoid head with a protruding nose plus a torso
// ellipsoid carrying rigid shoulder joints. Depth is an exact z-buffer in
// whole millimeters, gray is Lambertian shading quantized to 8 bits, so a
// written dataset loads back bit-identically.
struct SynthConfig {
  int n_subjects = 1;
  int frames_per_subject = 32;
  int width = 160;
  int height = 132;
  double fx = 150.0;
  double fy = 150.0;
  uint64_t seed = 0;
  double max_head_angle = 40.0;      // degrees, per axis
  double max_shoulder_angle = 20.0;  // degrees, per axis
};

struct SynthScene {
  geo::PoseAngles head_pose;      // sampled ground truth
  geo::PoseAngles shoulder_pose;  // sampled ground truth
  geo::Vec3 head_center_mm{0.0, 0.0, 850.0};
};

// Renders one frame; annotations are derived from the scene's own rotation
// matrices with the same functions the loader uses, so generate -> write ->
// load is lossless field-for-field.
FrameRecord render_synth_frame(const SynthConfig& cfg, const SynthScene& scene,
                               const std::string& subject_id,
                               const std::string& sequence_id, int frame_index);

// Deterministic random-walk sequences (smooth motion between consecutive
// frames, so optical flow has signal).
std::vector<FrameRecord> synth_records(const SynthConfig& cfg);

// synth_records written to the canonical layout under out_root.
void synth_generate(const SynthConfig& cfg, const std::string& out_root);

}  // namespace depthpose::dataio
