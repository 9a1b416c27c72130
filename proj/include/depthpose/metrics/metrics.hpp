#pragma once

#include <array>
#include <string>
#include <vector>

#include "depthpose/core/image.hpp"
#include "depthpose/geometry/geometry.hpp"

namespace depthpose::metrics {

// Reconstruction quality suite over a predicted/ground-truth image pair.
// Pixels with non-positive ground truth are masked everywhere; log-based
// fields additionally skip non-positive predictions. Norm fields are sums
// over the pair (callers average across a set), the rest are per-pixel means.
struct ReconMetrics {
  double l1_norm = 0.0;         // sum |p - g|
  double l2_norm = 0.0;         // euclidean norm of the difference
  double abs_rel = 0.0;         // mean |p - g| / g
  double sq_rel = 0.0;          // mean (p - g)^2 / g
  double rmse_linear = 0.0;     // sqrt mean (p - g)^2
  double rmse_log = 0.0;        // sqrt mean (log p - log g)^2
  double rmse_scale_inv = 0.0;  // sqrt of the shift-invariant log variance
  double thresh_1_25 = 0.0;     // fraction with max(p/g, g/p) < delta
  double thresh_2_5 = 0.0;
  double thresh_3_75 = 0.0;
};

ReconMetrics recon_metrics(const Image& pred, const Image& gt);

// Affine remap [-1, 1] -> [0, 1] for tanh-ranged images entering the suite.
Image to_positive_units(const Image& x);

// Per-angle absolute-error statistics in degrees, order (pitch, roll, yaw);
// std is the population deviation. Accuracy is the fraction of
// (frame, angle) pairs with error strictly below 15 degrees.
struct PoseReport {
  std::array<double, 3> mean_abs_err{};
  std::array<double, 3> std_abs_err{};
  double accuracy = 0.0;
};

constexpr double kAccuracyThresholdDeg = 15.0;

PoseReport pose_report(const std::vector<geo::PoseAngles>& preds,
                       const std::vector<geo::PoseAngles>& gts);

struct ReportRow {
  std::string dataset;
  std::string split;
  std::string model;
  std::string metric;
  double value = 0.0;
};

// Writes `stem`.csv and `stem`.json twins; both carry the schema version and
// are byte-deterministic for a given row list.
void emit_report(const std::vector<ReportRow>& rows, const std::string& stem);

// Reads rows back from the JSON twin.
std::vector<ReportRow> load_report(const std::string& json_path);

}  // namespace depthpose::metrics
