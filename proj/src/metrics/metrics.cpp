#include "depthpose/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "depthpose/core/errors.hpp"

namespace depthpose::metrics {

ReconMetrics recon_metrics(const Image& pred, const Image& gt) {
  if (pred.height != gt.height || pred.width != gt.width)
    throw ShapeMismatch("metric images must share a shape");

  double s_abs = 0.0, s_sq = 0.0, s_absrel = 0.0, s_sqrel = 0.0;
  double s_d = 0.0, s_d2 = 0.0;
  long n_valid = 0, n_log = 0, c125 = 0, c25 = 0, c375 = 0;
  for (size_t i = 0; i < gt.v.size(); ++i) {
    const double g = gt.v[i];
    if (g <= 0.0) continue;
    const double p = pred.v[i];
    ++n_valid;
    const double diff = p - g;
    s_abs += std::abs(diff);
    s_sq += diff * diff;
    s_absrel += std::abs(diff) / g;
    s_sqrel += diff * diff / g;
    if (p > 0.0) {
      const double ratio = std::max(p / g, g / p);
      if (ratio < 1.25) ++c125;
      if (ratio < 2.5) ++c25;
      if (ratio < 3.75) ++c375;
      const double d = std::log(p) - std::log(g);
      s_d += d;
      s_d2 += d * d;
      ++n_log;
    }
  }
  if (n_valid == 0) throw AllMasked("no pixels with positive ground truth");
  if (n_log == 0) throw AllMasked("no positive predictions for the log metrics");

  ReconMetrics m;
  m.l1_norm = s_abs;
  m.l2_norm = std::sqrt(s_sq);
  m.abs_rel = s_absrel / n_valid;
  m.sq_rel = s_sqrel / n_valid;
  m.rmse_linear = std::sqrt(s_sq / n_valid);
  m.rmse_log = std::sqrt(s_d2 / n_log);
  const double mean_d = s_d / n_log;
  m.rmse_scale_inv = std::sqrt(std::max(0.0, s_d2 / n_log - mean_d * mean_d));
  m.thresh_1_25 = static_cast<double>(c125) / n_valid;
  m.thresh_2_5 = static_cast<double>(c25) / n_valid;
  m.thresh_3_75 = static_cast<double>(c375) / n_valid;
  return m;
}

Image to_positive_units(const Image& x) {
  Image out = x;
  for (double& v : out.v) v = (v + 1.0) / 2.0;
  return out;
}

PoseReport pose_report(const std::vector<geo::PoseAngles>& preds,
                       const std::vector<geo::PoseAngles>& gts) {
  if (preds.size() != gts.size() || preds.empty())
    throw LengthMismatch("pose report needs equal, non-empty lists");

  const size_t n = preds.size();
  std::array<std::vector<double>, 3> errs;
  for (auto& e : errs) e.reserve(n);
  long good = 0;
  for (size_t i = 0; i < n; ++i) {
    const double e[3] = {std::abs(preds[i].pitch - gts[i].pitch),
                         std::abs(preds[i].roll - gts[i].roll),
                         std::abs(preds[i].yaw - gts[i].yaw)};
    for (int j = 0; j < 3; ++j) {
      errs[j].push_back(e[j]);
      if (e[j] < kAccuracyThresholdDeg) ++good;
    }
  }

  PoseReport r;
  for (int j = 0; j < 3; ++j) {
    double sum = 0.0;
    for (double e : errs[j]) sum += e;
    const double mean = sum / n;
    double var = 0.0;
    for (double e : errs[j]) var += (e - mean) * (e - mean);
    r.mean_abs_err[j] = mean;
    r.std_abs_err[j] = std::sqrt(var / n);
  }
  r.accuracy = static_cast<double>(good) / (3.0 * n);
  return r;
}

namespace {

constexpr int kReportSchemaVersion = 1;

}  // namespace

void emit_report(const std::vector<ReportRow>& rows, const std::string& stem) {
  const std::string csv_path = stem + ".csv";
  std::FILE* f = std::fopen(csv_path.c_str(), "wb");
  if (!f) throw IoError("cannot write " + csv_path);
  std::fputs("schema_version,dataset,split,model,metric,value\n", f);
  for (const ReportRow& r : rows)
    std::fprintf(f, "%d,%s,%s,%s,%s,%.17g\n", kReportSchemaVersion,
                 r.dataset.c_str(), r.split.c_str(), r.model.c_str(),
                 r.metric.c_str(), r.value);
  std::fclose(f);

  nlohmann::json j;
  j["schema_version"] = kReportSchemaVersion;
  j["rows"] = nlohmann::json::array();
  for (const ReportRow& r : rows)
    j["rows"].push_back({{"dataset", r.dataset},
                         {"split", r.split},
                         {"model", r.model},
                         {"metric", r.metric},
                         {"value", r.value}});
  const std::string json_path = stem + ".json";
  std::ofstream out(json_path, std::ios::binary);
  if (!out) throw IoError("cannot write " + json_path);
  out << j.dump(2) << "\n";
}

std::vector<ReportRow> load_report(const std::string& json_path) {
  std::ifstream in(json_path, std::ios::binary);
  if (!in) throw IoError("cannot read " + json_path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad report json: " + std::string(e.what()));
  }
  if (!j.contains("schema_version") || j["schema_version"] != kReportSchemaVersion)
    throw FormatError("unsupported report schema");
  std::vector<ReportRow> rows;
  for (const auto& r : j.at("rows"))
    rows.push_back({r.at("dataset").get<std::string>(),
                    r.at("split").get<std::string>(),
                    r.at("model").get<std::string>(),
                    r.at("metric").get<std::string>(), r.at("value").get<double>()});
  return rows;
}

}  // namespace depthpose::metrics
