#include "depthpose/pipeline/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <utility>

#include <json.hpp>

#include "depthpose/core/errors.hpp"
#include "depthpose/dataio/preprocess.hpp"
#include "depthpose/nn/checkpoint.hpp"

namespace depthpose::pipeline {

using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

json localizer_json(const models::LocalizerConfig& c) {
  json convs = json::array();
  for (const auto& s : c.conv_specs) convs.push_back({s.kernel, s.filters, s.stride});
  return {{"arch", "localizer"},
          {"input_width", c.input_width},
          {"input_height", c.input_height},
          {"convs", convs},
          {"fc", c.fc_sizes},
          {"dropout", c.dropout}};
}

models::LocalizerConfig localizer_from(const json& j) {
  models::LocalizerConfig c;
  c.input_width = j.at("input_width").get<int>();
  c.input_height = j.at("input_height").get<int>();
  c.conv_specs.clear();
  for (const auto& e : j.at("convs"))
    c.conv_specs.push_back({e.at(0).get<int>(), e.at(1).get<int>(), e.at(2).get<int>()});
  c.fc_sizes = j.at("fc").get<std::vector<int>>();
  c.dropout = j.at("dropout").get<double>();
  return c;
}

json generator_json(const models::GeneratorConfig& c) {
  return {{"arch", "ffd_generator"},
          {"input_size", c.input_size},
          {"encoder", c.encoder_filters},
          {"decoder", c.decoder_filters},
          {"kernel", c.kernel},
          {"convs_per_stage", c.convs_per_stage},
          {"unet_skips", c.unet_skips}};
}

models::GeneratorConfig generator_from(const json& j) {
  models::GeneratorConfig c;
  c.input_size = j.at("input_size").get<int>();
  c.encoder_filters = j.at("encoder").get<std::vector<int>>();
  c.decoder_filters = j.at("decoder").get<std::vector<int>>();
  c.kernel = j.at("kernel").get<int>();
  c.convs_per_stage = j.at("convs_per_stage").get<int>();
  c.unet_skips = j.at("unet_skips").get<bool>();
  return c;
}

json branch_json(const models::BranchConfig& c) {
  return {{"input_size", c.input_size},
          {"in_channels", c.in_channels},
          {"kernels", c.conv_kernels},
          {"filters", c.conv_filters},
          {"head_fc", c.head_fc},
          {"dropout", c.dropout}};
}

models::BranchConfig branch_from(const json& j) {
  models::BranchConfig c;
  c.input_size = j.at("input_size").get<int>();
  c.in_channels = j.at("in_channels").get<int>();
  c.conv_kernels = j.at("kernels").get<std::vector<int>>();
  c.conv_filters = j.at("filters").get<std::vector<int>>();
  c.head_fc = j.at("head_fc").get<std::vector<int>>();
  c.dropout = j.at("dropout").get<double>();
  return c;
}

void expect_arch(const json& cfg, const char* want) {
  const std::string got = cfg.value("arch", "");
  if (got != want)
    throw FormatError("checkpoint holds '" + got + "', wanted '" + want + "'");
}

// nlohmann throws its own hierarchy; parsing problems surface as FormatError.
template <typename F>
auto parsed(const char* what, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw FormatError(std::string(what) + ": " + e.what());
  }
}

}  // namespace

const char* fusion_method_name(models::FusionMethod m) {
  switch (m) {
    case models::FusionMethod::Multiplication: return "mul";
    case models::FusionMethod::Concatenation: return "concat";
    case models::FusionMethod::Convolution: return "conv";
    case models::FusionMethod::ConvThenConcat: return "conv_then_concat";
  }
  return "conv_then_concat";
}

models::FusionMethod fusion_method_from_name(const std::string& s) {
  if (s == "mul") return models::FusionMethod::Multiplication;
  if (s == "concat") return models::FusionMethod::Concatenation;
  if (s == "conv") return models::FusionMethod::Convolution;
  if (s == "conv_then_concat") return models::FusionMethod::ConvThenConcat;
  throw FormatError("unknown fusion method: " + s);
}

void save_localizer_checkpoint(const std::string& path, nn::Sequential& model,
                               const models::LocalizerConfig& cfg) {
  nn::save_checkpoint(path, model.params_and_buffers(), localizer_json(cfg));
}

void save_ffd_checkpoint(const std::string& path, models::Generator& gen) {
  nn::save_checkpoint(path, gen.params_and_buffers(), generator_json(gen.config()));
}

void save_trident_checkpoint(const std::string& path, models::Trident& trident,
                             const std::array<models::BranchConfig, 3>& branches,
                             const models::TridentConfig& cfg) {
  json j = {{"arch", "trident"},
            {"branches",
             {branch_json(branches[0]), branch_json(branches[1]), branch_json(branches[2])}},
            {"fusion", fusion_method_name(cfg.fusion.method)},
            {"head_fc", cfg.head_fc},
            {"dropout", cfg.dropout}};
  nn::save_checkpoint(path, trident.params_and_buffers(), j);
}

void save_shoulder_checkpoint(const std::string& path, models::Branch& net,
                              const models::BranchConfig& cfg) {
  json j = branch_json(cfg);
  j["arch"] = "shoulder";
  nn::save_checkpoint(path, net.params_and_buffers(), j);
}

nn::Sequential load_localizer_checkpoint(const std::string& path,
                                         models::LocalizerConfig& cfg_out, Rng& rng) {
  const nn::Checkpoint ckpt = nn::load_checkpoint(path);
  expect_arch(ckpt.config, "localizer");
  cfg_out = parsed("localizer checkpoint", [&] { return localizer_from(ckpt.config); });
  nn::Sequential model = models::build_localizer(cfg_out, rng);
  nn::apply_checkpoint(ckpt, model.params_and_buffers());
  return model;
}

models::Generator load_ffd_checkpoint(const std::string& path, Rng& rng) {
  const nn::Checkpoint ckpt = nn::load_checkpoint(path);
  expect_arch(ckpt.config, "ffd_generator");
  const auto cfg = parsed("generator checkpoint", [&] { return generator_from(ckpt.config); });
  models::Generator gen(cfg, rng);
  nn::apply_checkpoint(ckpt, gen.params_and_buffers());
  return gen;
}

models::Trident load_trident_checkpoint(const std::string& path, Rng& rng) {
  const nn::Checkpoint ckpt = nn::load_checkpoint(path);
  expect_arch(ckpt.config, "trident");
  return parsed("trident checkpoint", [&] {
    std::array<models::BranchConfig, 3> bc;
    const json& bs = ckpt.config.at("branches");
    for (int i = 0; i < 3; ++i) bc[i] = branch_from(bs.at(i));
    models::TridentConfig tc;
    tc.fusion.method = fusion_method_from_name(ckpt.config.at("fusion").get<std::string>());
    tc.head_fc = ckpt.config.at("head_fc").get<std::vector<int>>();
    tc.dropout = ckpt.config.at("dropout").get<double>();
    models::Trident trident = models::build_trident(
        models::build_branch(bc[0], rng), models::build_branch(bc[1], rng),
        models::build_branch(bc[2], rng), tc, rng);
    nn::apply_checkpoint(ckpt, trident.params_and_buffers());
    return trident;
  });
}

models::Branch load_shoulder_checkpoint(const std::string& path,
                                        models::BranchConfig& cfg_out, Rng& rng) {
  const nn::Checkpoint ckpt = nn::load_checkpoint(path);
  expect_arch(ckpt.config, "shoulder");
  cfg_out = parsed("shoulder checkpoint", [&] { return branch_from(ckpt.config); });
  models::Branch net = models::build_shoulder_net(cfg_out, rng);
  nn::apply_checkpoint(ckpt, net.params_and_buffers());
  return net;
}

PipelineModels load_models(const PipelineConfig& cfg) {
  PipelineModels m;
  m.rng = std::make_unique<Rng>(cfg.seed);
  if (!cfg.localizer_ckpt.empty())
    m.localizer = load_localizer_checkpoint(cfg.localizer_ckpt, m.localizer_cfg, *m.rng);
  if (!cfg.ffd_ckpt.empty()) m.ffd = load_ffd_checkpoint(cfg.ffd_ckpt, *m.rng);
  if (!cfg.trident_ckpt.empty()) m.trident = load_trident_checkpoint(cfg.trident_ckpt, *m.rng);
  if (!cfg.shoulder_ckpt.empty()) {
    models::BranchConfig bc;
    m.shoulder = load_shoulder_checkpoint(cfg.shoulder_ckpt, bc, *m.rng);
  }
  return m;
}

FrameInputs assemble_frame(const dataio::FrameRecord& rec, const Image* prev_depth_in,
                           PipelineModels& models, const PipelineConfig& cfg,
                           int input_size, int shoulder_size) {
  FrameInputs out;
  auto t0 = Clock::now();
  if (cfg.use_gt_center) {
    if (!rec.head_center_2d)
      throw MissingAnnotation("ground-truth centers requested, frame " +
                              std::to_string(rec.frame_index) + " has none");
    out.center = *rec.head_center_2d;
  } else {
    if (!models.localizer)
      throw ConfigError("no localizer loaded and ground-truth centers disabled");
    out.center = models::localize(*models.localizer, models.localizer_cfg, rec.depth.mm);
  }
  out.ms.localize = ms_since(t0);

  t0 = Clock::now();
  out.head_box =
      geo::head_crop_box(out.center, rec.intrinsics, rec.depth, cfg.head_rx, cfg.head_ry);
  const Image crop = geo::crop_clamped(rec.depth.mm, out.head_box);
  out.depth_in = dataio::resized_normalized(crop, input_size, input_size);
  out.ms.crop = ms_since(t0);

  t0 = Clock::now();
  if (models.ffd) {
    Image g = models::ffd_infer(*models.ffd, crop);
    out.ffd_in = (g.height == input_size && g.width == input_size)
                     ? std::move(g)
                     : resize_bilinear(g, input_size, input_size);
  } else {
    out.ffd_in = Image(input_size, input_size, 0.0);
  }
  out.ms.ffd = ms_since(t0);

  t0 = Clock::now();
  out.motion = prev_depth_in ? motion::flow_to_motion_image(
                                    motion::farneback_flow(*prev_depth_in, out.depth_in))
                             : motion::zero_motion(input_size, input_size);
  out.ms.motion = ms_since(t0);

  if (shoulder_size > 0) {
    t0 = Clock::now();
    try {
      const geo::CropBox sb = geo::shoulder_crop_box(out.head_box, rec.intrinsics, rec.depth,
                                                     cfg.shoulder_rx, cfg.shoulder_ry);
      out.shoulder_in = dataio::resized_normalized(geo::crop_clamped(rec.depth.mm, sb),
                                                   shoulder_size, shoulder_size);
      out.shoulder_box = sb;
    } catch (const NoValidDepth&) {
      // head results stand; only the shoulder slots stay empty
    }
    out.ms.shoulder = ms_since(t0);
  }
  return out;
}

std::vector<FrameResult> run_pipeline(const std::vector<dataio::FrameRecord>& frames,
                                      PipelineModels& models, const PipelineConfig& cfg) {
  const int size = models.trident ? models.trident->branch(0).input_size : 64;
  const int shoulder_size = models.shoulder ? models.shoulder->input_size : 0;

  std::vector<FrameResult> out;
  out.reserve(frames.size());
  Image prev;
  bool has_prev = false;
  const std::string* cur_subject = nullptr;
  const std::string* cur_sequence = nullptr;
  for (const auto& rec : frames) {
    if (!cur_subject || rec.subject_id != *cur_subject || rec.sequence_id != *cur_sequence)
      has_prev = false;
    cur_subject = &rec.subject_id;
    cur_sequence = &rec.sequence_id;

    FrameResult r;
    r.frame_index = rec.frame_index;
    try {
      FrameInputs in =
          assemble_frame(rec, has_prev ? &prev : nullptr, models, cfg, size, shoulder_size);
      r.head_center = in.center;
      r.head_box = in.head_box;
      r.ms = in.ms;
      if (models.trident) {
        const auto t0 = Clock::now();
        r.head_pose = models::predict_pose(*models.trident, in.depth_in, in.ffd_in, in.motion);
        r.ms.trident = ms_since(t0);
      }
      if (models.shoulder && in.shoulder_in) {
        const auto t0 = Clock::now();
        r.shoulder_pose = models::predict_shoulder_pose(*models.shoulder, *in.shoulder_in);
        r.ms.shoulder += ms_since(t0);
      }
      prev = std::move(in.depth_in);
      has_prev = true;
    } catch (const NoValidDepth&) {
      r.skipped = true;
      has_prev = false;  // the motion chain restarts after a hole
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<models::TridentSample> prepare_trident_samples(
    const std::vector<dataio::FrameRecord>& recs, PipelineModels& models,
    const PipelineConfig& cfg, int input_size) {
  std::vector<models::TridentSample> out;
  out.reserve(recs.size());
  Image prev;
  bool has_prev = false;
  const std::string* cur_subject = nullptr;
  const std::string* cur_sequence = nullptr;
  for (const auto& rec : recs) {
    if (!cur_subject || rec.subject_id != *cur_subject || rec.sequence_id != *cur_sequence)
      has_prev = false;
    cur_subject = &rec.subject_id;
    cur_sequence = &rec.sequence_id;
    try {
      FrameInputs in =
          assemble_frame(rec, has_prev ? &prev : nullptr, models, cfg, input_size, 0);
      models::TridentSample s;
      s.depth = in.depth_in;
      s.ffd = std::move(in.ffd_in);
      s.motion = std::move(in.motion);
      s.pose = rec.head_pose;
      prev = std::move(in.depth_in);
      has_prev = true;
      out.push_back(std::move(s));
    } catch (const NoValidDepth&) {
      has_prev = false;
    }
  }
  return out;
}

std::vector<models::PoseSample> prepare_shoulder_samples(
    const std::vector<dataio::FrameRecord>& recs, PipelineModels& models,
    const PipelineConfig& cfg, int shoulder_size) {
  std::vector<models::PoseSample> out;
  out.reserve(recs.size());
  for (const auto& rec : recs) {
    try {
      // No motion chain here, so no previous-crop bookkeeping either.
      FrameInputs in = assemble_frame(rec, nullptr, models, cfg, shoulder_size, shoulder_size);
      if (!in.shoulder_in) continue;
      models::PoseSample s;
      s.planes.push_back(std::move(*in.shoulder_in));
      s.pose = rec.shoulder_pose;
      out.push_back(std::move(s));
    } catch (const NoValidDepth&) {
    }
  }
  return out;
}

std::string format_localization(const LocalizationError& e) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f±%.2f", e.mean_px, e.std_px);
  return buf;
}

EvalResult evaluate(const std::vector<dataio::FrameRecord>& test, PipelineModels& models,
                    const PipelineConfig& cfg) {
  if (test.empty()) throw EvalError("empty test split");
  if (!models.trident) throw ConfigError("evaluation needs a trident checkpoint");

  const std::vector<FrameResult> results = run_pipeline(test, models, cfg);

  EvalResult ev;
  ev.frames_total = results.size();
  std::vector<geo::PoseAngles> gt_head, pred_head, gt_shoulder, pred_shoulder;
  for (size_t i = 0; i < results.size(); ++i) {
    const FrameResult& r = results[i];
    if (r.skipped) {
      ++ev.frames_skipped;
      continue;
    }
    if (r.head_pose && test[i].head_pose) {
      pred_head.push_back(*r.head_pose);
      gt_head.push_back(*test[i].head_pose);
    }
    if (r.shoulder_pose && test[i].shoulder_pose) {
      pred_shoulder.push_back(*r.shoulder_pose);
      gt_shoulder.push_back(*test[i].shoulder_pose);
    }
  }
  try {
    ev.head = metrics::pose_report(pred_head, gt_head);
  } catch (const LengthMismatch& e) {
    throw EvalError(std::string("no scorable head poses: ") + e.what());
  }
  if (!gt_shoulder.empty()) ev.shoulder = metrics::pose_report(pred_shoulder, gt_shoulder);

  if (models.ffd) {
    metrics::ReconMetrics acc{};
    size_t n = 0;
    for (size_t i = 0; i < results.size(); ++i) {
      const FrameResult& r = results[i];
      if (r.skipped || !test[i].gray) continue;
      const Image crop = geo::crop_clamped(test[i].depth.mm, r.head_box);
      const Image pred = metrics::to_positive_units(models::ffd_infer(*models.ffd, crop));
      const Image gt = resize_bilinear(geo::crop_clamped(test[i].gray->intensity, r.head_box),
                                       pred.height, pred.width);
      try {
        const metrics::ReconMetrics m = metrics::recon_metrics(pred, gt);
        acc.abs_rel += m.abs_rel;
        acc.sq_rel += m.sq_rel;
        acc.rmse_linear += m.rmse_linear;
        acc.rmse_log += m.rmse_log;
        acc.rmse_scale_inv += m.rmse_scale_inv;
        acc.l1_norm += m.l1_norm;
        acc.l2_norm += m.l2_norm;
        acc.thresh_1_25 += m.thresh_1_25;
        acc.thresh_2_5 += m.thresh_2_5;
        acc.thresh_3_75 += m.thresh_3_75;
        ++n;
      } catch (const AllMasked&) {
        // a crop with no lit gray pixels contributes nothing
      }
    }
    if (n > 0) {
      const double inv = 1.0 / static_cast<double>(n);
      acc.abs_rel *= inv;
      acc.sq_rel *= inv;
      acc.rmse_linear *= inv;
      acc.rmse_log *= inv;
      acc.rmse_scale_inv *= inv;
      acc.l1_norm *= inv;
      acc.l2_norm *= inv;
      acc.thresh_1_25 *= inv;
      acc.thresh_2_5 *= inv;
      acc.thresh_3_75 *= inv;
      ev.recon = acc;
      ev.recon_frames = n;
    }
  }

  if (models.localizer) {
    std::vector<double> errs;
    for (const auto& rec : test) {
      if (!rec.head_center_2d) continue;
      const PixelPoint p =
          models::localize(*models.localizer, models.localizer_cfg, rec.depth.mm);
      errs.push_back(std::hypot(p.x - rec.head_center_2d->x, p.y - rec.head_center_2d->y));
    }
    if (!errs.empty())
      ev.localization = {mean_of(errs), std::sqrt(variance_of(errs))};
  }
  return ev;
}

std::vector<metrics::ReportRow> report_rows(const EvalResult& r, const std::string& dataset,
                                            const std::string& split) {
  std::vector<metrics::ReportRow> rows;
  const auto add = [&](const std::string& model, const std::string& metric, double v) {
    rows.push_back({dataset, split, model, metric, v});
  };
  static const char* kAngles[3] = {"pitch", "roll", "yaw"};
  const auto add_pose = [&](const std::string& model, const metrics::PoseReport& p) {
    for (int i = 0; i < 3; ++i) add(model, std::string(kAngles[i]) + "_mae", p.mean_abs_err[i]);
    for (int i = 0; i < 3; ++i) add(model, std::string(kAngles[i]) + "_std", p.std_abs_err[i]);
    add(model, "accuracy", p.accuracy);
  };
  add_pose("trident", r.head);
  if (r.shoulder) add_pose("shoulder", *r.shoulder);
  if (r.localization) {
    add("localizer", "center_err_mean_px", r.localization->mean_px);
    add("localizer", "center_err_std_px", r.localization->std_px);
  }
  if (r.recon) {
    add("ffd", "l1_norm", r.recon->l1_norm);
    add("ffd", "l2_norm", r.recon->l2_norm);
    add("ffd", "abs_rel", r.recon->abs_rel);
    add("ffd", "sq_rel", r.recon->sq_rel);
    add("ffd", "rmse_linear", r.recon->rmse_linear);
    add("ffd", "rmse_log", r.recon->rmse_log);
    add("ffd", "rmse_scale_inv", r.recon->rmse_scale_inv);
    add("ffd", "thresh_1_25", r.recon->thresh_1_25);
    add("ffd", "thresh_2_5", r.recon->thresh_2_5);
    add("ffd", "thresh_3_75", r.recon->thresh_3_75);
    add("ffd", "recon_frames", static_cast<double>(r.recon_frames));
  }
  add("pipeline", "frames_total", static_cast<double>(r.frames_total));
  add("pipeline", "frames_skipped", static_cast<double>(r.frames_skipped));
  return rows;
}

}  // namespace depthpose::pipeline
