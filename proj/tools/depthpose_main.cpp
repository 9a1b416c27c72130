#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "depthpose/core/errors.hpp"
#include "depthpose/core/rng.hpp"
#include "depthpose/dataio/dataset.hpp"
#include "depthpose/dataio/png_io.hpp"
#include "depthpose/dataio/synth.hpp"
#include "depthpose/metrics/metrics.hpp"
#include "depthpose/models/ffd.hpp"
#include "depthpose/models/localizer.hpp"
#include "depthpose/models/posenet.hpp"
#include "depthpose/pipeline/pipeline.hpp"

using namespace depthpose;
using nlohmann::json;
namespace fs = std::filesystem;
namespace pl = depthpose::pipeline;

namespace {

const char* kUsage =
    "usage: depthpose <command> [flags]\n"
    "\n"
    "commands:\n"
    "  synth            render a synthetic dataset to --out\n"
    "  train-localizer  train the head localization net\n"
    "  train-ffd        train the face-from-depth generator\n"
    "  train-pose       train the three-stream head pose net (two phases)\n"
    "  train-shoulders  train the shoulder pose net\n"
    "  eval             run the pipeline on the test split, write report\n"
    "  infer            run the pipeline, write per-frame results\n"
    "  report <file>    pretty-print an emitted report.json\n"
    "\n"
    "flags:\n"
    "  --config PATH    JSON config; flags override its values\n"
    "  --dataset ROOT   dataset root directory\n"
    "  --format {biwi,pandora,synthetic}\n"
    "  --split SPEC.json  subject split specification\n"
    "  --seed N         RNG seed (default 0)\n"
    "  --use-gt-center  crop from ground-truth head centers\n"
    "  --out DIR        output directory (checkpoints, reports, histories)\n";

struct Args {
  std::string cmd;
  std::string config;
  std::string dataset;
  std::string format;
  std::string split;
  std::optional<uint64_t> seed;
  bool use_gt_center = false;
  std::string out;
  std::vector<std::string> positional;
};

Args parse_args(int argc, char** argv) {
  Args a;
  if (argc < 2) throw ConfigError("missing command");
  a.cmd = argv[1];
  const auto need = [&](int& i, const char* flag) -> std::string {
    if (i + 1 >= argc) throw ConfigError(std::string(flag) + " needs a value");
    return argv[++i];
  };
  for (int i = 2; i < argc; ++i) {
    const std::string f = argv[i];
    if (f == "--config") a.config = need(i, "--config");
    else if (f == "--dataset") a.dataset = need(i, "--dataset");
    else if (f == "--format") a.format = need(i, "--format");
    else if (f == "--split") a.split = need(i, "--split");
    else if (f == "--seed") {
      try {
        a.seed = std::stoull(need(i, "--seed"));
      } catch (const std::logic_error&) {
        throw ConfigError("--seed wants an unsigned integer");
      }
    } else if (f == "--use-gt-center") a.use_gt_center = true;
    else if (f == "--out") a.out = need(i, "--out");
    else if (!f.empty() && f[0] == '-') throw ConfigError("unknown flag: " + f);
    else a.positional.push_back(f);
  }
  return a;
}

// The merged view of config file and flags; flags win.
struct Effective {
  json j = json::object();
  std::string dataset;
  std::string format;
  std::string split;
  std::string out;
  uint64_t seed = 0;
  bool use_gt_center = false;
};

Effective merge(const Args& a) {
  Effective e;
  if (!a.config.empty()) {
    std::ifstream f(a.config);
    if (!f) throw ConfigError("cannot open config: " + a.config);
    try {
      f >> e.j;
    } catch (const json::exception& ex) {
      throw ConfigError("bad config json: " + std::string(ex.what()));
    }
    if (!e.j.is_object()) throw ConfigError("config root must be an object");
  }
  try {
    e.dataset = a.dataset.empty() ? e.j.value("dataset", "") : a.dataset;
    e.format = a.format.empty() ? e.j.value("format", "") : a.format;
    e.split = a.split.empty() ? e.j.value("split", "") : a.split;
    e.out = a.out.empty() ? e.j.value("out", "") : a.out;
    e.seed = a.seed ? *a.seed : e.j.value("seed", uint64_t{0});
    e.use_gt_center = a.use_gt_center || e.j.value("use_gt_center", false);
  } catch (const json::exception& ex) {
    throw ConfigError("bad config value: " + std::string(ex.what()));
  }
  return e;
}

dataio::DatasetFormat parse_format(const std::string& s) {
  if (s == "biwi") return dataio::DatasetFormat::BiwiLike;
  if (s == "pandora") return dataio::DatasetFormat::PandoraLike;
  if (s == "synthetic") return dataio::DatasetFormat::Synthetic;
  if (s.empty()) throw ConfigError("--format is required (biwi, pandora, synthetic)");
  throw ConfigError("unknown format: " + s);
}

std::string require_out(const Effective& e) {
  if (e.out.empty()) throw ConfigError("--out is required");
  fs::create_directories(e.out);
  return e.out;
}

std::vector<dataio::FrameRecord> load_records(const Effective& e) {
  if (e.dataset.empty()) throw ConfigError("--dataset is required");
  return dataio::load_dataset(e.dataset, parse_format(e.format));
}

// Train commands consume the train side of the split, eval/infer the test side.
std::vector<dataio::FrameRecord> split_side(const Effective& e,
                                            std::vector<dataio::FrameRecord> recs,
                                            bool test_side) {
  if (e.split.empty()) return recs;
  const dataio::SplitSpec spec = dataio::load_split_spec(e.split);
  auto parts = dataio::make_splits(recs, spec);
  return test_side ? std::move(parts.second) : std::move(parts.first);
}

std::string stem_name(const std::string& path, const std::string& fallback) {
  if (path.empty()) return fallback;
  std::string t = path;
  while (t.size() > 1 && t.back() == '/') t.pop_back();
  const std::string s = fs::path(t).stem().string();
  return s.empty() ? fallback : s;
}

// ---- json -> config structs (partial objects fall back to the defaults) ----

json section(const json& j, const char* key) {
  return j.contains(key) ? j.at(key) : json::object();
}

models::LocalizerConfig localizer_cfg_from(const json& o) {
  models::LocalizerConfig c;
  c.input_width = o.value("input_width", c.input_width);
  c.input_height = o.value("input_height", c.input_height);
  if (o.contains("convs")) {
    c.conv_specs.clear();
    for (const auto& e : o.at("convs"))
      c.conv_specs.push_back(
          {e.at(0).get<int>(), e.at(1).get<int>(), e.at(2).get<int>()});
  }
  if (o.contains("fc")) c.fc_sizes = o.at("fc").get<std::vector<int>>();
  c.dropout = o.value("dropout", c.dropout);
  return c;
}

models::LocalizerHyper localizer_hyper_from(const json& o) {
  models::LocalizerHyper h;
  h.epochs = o.value("epochs", h.epochs);
  h.batch_size = o.value("batch_size", h.batch_size);
  h.lr = o.value("lr", h.lr);
  h.momentum = o.value("momentum", h.momentum);
  h.halve_every = o.value("halve_every", h.halve_every);
  return h;
}

models::GeneratorConfig generator_cfg_from(const json& o) {
  models::GeneratorConfig c;
  c.input_size = o.value("input_size", c.input_size);
  if (o.contains("encoder")) c.encoder_filters = o.at("encoder").get<std::vector<int>>();
  if (o.contains("decoder")) c.decoder_filters = o.at("decoder").get<std::vector<int>>();
  c.kernel = o.value("kernel", c.kernel);
  c.convs_per_stage = o.value("convs_per_stage", c.convs_per_stage);
  c.unet_skips = o.value("unet_skips", c.unet_skips);
  return c;
}

models::DiscriminatorConfig discriminator_cfg_from(const json& o) {
  models::DiscriminatorConfig c;
  c.input_size = o.value("input_size", c.input_size);
  if (o.contains("filters")) c.filters = o.at("filters").get<std::vector<int>>();
  c.kernel = o.value("kernel", c.kernel);
  return c;
}

models::GanHyper gan_hyper_from(const json& o) {
  models::GanHyper h;
  h.lambda_content = o.value("lambda_content", h.lambda_content);
  h.label_smooth = o.value("label_smooth", h.label_smooth);
  h.adam_beta1 = o.value("adam_beta1", h.adam_beta1);
  h.batch_size = o.value("batch_size", h.batch_size);
  h.k_disc = o.value("k_disc", h.k_disc);
  h.sse_pool = o.value("sse_pool", h.sse_pool);
  h.steps = o.value("steps", h.steps);
  h.lr_g = o.value("lr_g", h.lr_g);
  h.lr_d = o.value("lr_d", h.lr_d);
  return h;
}

models::BranchConfig branch_cfg_from(const json& o, int in_channels) {
  models::BranchConfig c;
  c.input_size = o.value("input_size", c.input_size);
  c.in_channels = in_channels;
  if (o.contains("kernels")) c.conv_kernels = o.at("kernels").get<std::vector<int>>();
  if (o.contains("filters")) c.conv_filters = o.at("filters").get<std::vector<int>>();
  if (o.contains("head_fc")) c.head_fc = o.at("head_fc").get<std::vector<int>>();
  c.dropout = o.value("dropout", c.dropout);
  return c;
}

models::PoseHyper pose_hyper_from(const json& o) {
  models::PoseHyper h;
  h.epochs_phase1 = o.value("epochs", h.epochs_phase1);  // single-phase alias
  h.epochs_phase1 = o.value("epochs_phase1", h.epochs_phase1);
  h.epochs_phase2 = o.value("epochs_phase2", h.epochs_phase2);
  h.batch_size = o.value("batch_size", h.batch_size);
  h.lr = o.value("lr", h.lr);
  h.halve_every = o.value("halve_every", h.halve_every);
  h.momentum = o.value("momentum", h.momentum);
  if (o.contains("weights")) {
    const json& w = o.at("weights");
    h.weights.pitch = w.value("pitch", h.weights.pitch);
    h.weights.roll = w.value("roll", h.weights.roll);
    h.weights.yaw = w.value("yaw", h.weights.yaw);
  }
  return h;
}

// Checkpoint path: explicit config entry wins; otherwise <out>/<name>.ckpt.
// `must_exist` distinguishes the read side (eval/infer skip absent defaults)
// from the write side (training always gets a path).
std::string ckpt_path(const Effective& e, const char* name, bool for_reading) {
  const json cks = section(e.j, "checkpoints");
  if (cks.contains(name)) return cks.at(name).get<std::string>();
  if (e.out.empty()) {
    if (for_reading) return "";
    throw ConfigError("--out is required to place checkpoints");
  }
  const std::string path = e.out + "/" + name + ".ckpt";
  if (for_reading && !fs::exists(path)) return "";
  return path;
}

pl::PipelineConfig pipeline_cfg_from(const Effective& e, bool for_reading) {
  pl::PipelineConfig c;
  c.localizer_ckpt = ckpt_path(e, "localizer", for_reading);
  c.ffd_ckpt = ckpt_path(e, "ffd", for_reading);
  c.trident_ckpt = ckpt_path(e, "trident", for_reading);
  c.shoulder_ckpt = ckpt_path(e, "shoulder", for_reading);
  const json crop = section(e.j, "crop");
  c.head_rx = crop.value("head_rx", c.head_rx);
  c.head_ry = crop.value("head_ry", c.head_ry);
  c.shoulder_rx = crop.value("shoulder_rx", c.shoulder_rx);
  c.shoulder_ry = crop.value("shoulder_ry", c.shoulder_ry);
  c.use_gt_center = e.use_gt_center;
  c.seed = e.seed;
  return c;
}

void write_history_csv(const std::string& path, const std::vector<double>& losses) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("cannot open " + path);
  std::fprintf(f, "epoch,loss\n");
  for (size_t i = 0; i < losses.size(); ++i)
    std::fprintf(f, "%zu,%.17g\n", i + 1, losses[i]);
  std::fclose(f);
}

// ---- commands ----

int cmd_synth(const Effective& e) {
  const std::string out = require_out(e);
  const json o = section(e.j, "synth");
  dataio::SynthConfig cfg;
  cfg.n_subjects = o.value("n_subjects", cfg.n_subjects);
  cfg.frames_per_subject = o.value("frames_per_subject", cfg.frames_per_subject);
  cfg.width = o.value("width", cfg.width);
  cfg.height = o.value("height", cfg.height);
  cfg.fx = o.value("fx", cfg.fx);
  cfg.fy = o.value("fy", cfg.fy);
  cfg.max_head_angle = o.value("max_head_angle", cfg.max_head_angle);
  cfg.max_shoulder_angle = o.value("max_shoulder_angle", cfg.max_shoulder_angle);
  cfg.seed = e.seed;
  dataio::synth_generate(cfg, out);
  std::printf("synth: %d frames (%d subject%s) under %s\n",
              cfg.n_subjects * cfg.frames_per_subject, cfg.n_subjects,
              cfg.n_subjects == 1 ? "" : "s", out.c_str());
  return 0;
}

int cmd_train_localizer(const Effective& e) {
  const std::string out = require_out(e);
  const auto recs = split_side(e, load_records(e), false);
  const json o = section(e.j, "localizer");
  const models::LocalizerConfig cfg = localizer_cfg_from(o);
  const models::LocalizerHyper hyper = localizer_hyper_from(o);
  Rng rng(e.seed);
  nn::Sequential model = models::build_localizer(cfg, rng);
  const std::vector<double> history = models::train_localizer(model, recs, cfg, hyper, rng);
  const std::string ckpt = ckpt_path(e, "localizer", false);
  pl::save_localizer_checkpoint(ckpt, model, cfg);
  write_history_csv(out + "/localizer_history.csv", history);
  std::printf("train-localizer: %zu frames, %d epochs, loss %.6g -> %.6g, saved %s\n",
              recs.size(), hyper.epochs, history.empty() ? 0.0 : history.front(),
              history.empty() ? 0.0 : history.back(), ckpt.c_str());
  return 0;
}

int cmd_train_ffd(const Effective& e) {
  const std::string out = require_out(e);
  const auto recs = split_side(e, load_records(e), false);
  const pl::PipelineConfig pcfg = pipeline_cfg_from(e, true);

  std::vector<models::FfdPair> pairs;
  for (const auto& rec : recs) {
    if (!rec.gray || !rec.head_center_2d) continue;
    try {
      const geo::CropBox box = geo::head_crop_box(*rec.head_center_2d, rec.intrinsics,
                                                  rec.depth, pcfg.head_rx, pcfg.head_ry);
      pairs.push_back({geo::crop_clamped(rec.depth.mm, box),
                       geo::crop_clamped(rec.gray->intensity, box)});
    } catch (const NoValidDepth&) {
    }
  }
  if (pairs.empty()) throw MissingPairs("no depth/gray training pairs in the train split");

  const json o = section(e.j, "ffd");
  const models::GeneratorConfig gcfg = generator_cfg_from(section(o, "generator"));
  const models::DiscriminatorConfig dcfg = discriminator_cfg_from(section(o, "discriminator"));
  const models::GanHyper hyper = gan_hyper_from(o);
  Rng rng(e.seed);
  models::Generator gen(gcfg, rng);
  nn::Sequential disc = models::build_discriminator(dcfg, rng);
  const auto history = models::train_ffd(gen, disc, pairs, hyper, rng);
  const std::string ckpt = ckpt_path(e, "ffd", false);
  pl::save_ffd_checkpoint(ckpt, gen);
  models::save_ffd_history(out + "/ffd_history.csv", history);
  std::printf("train-ffd: %zu pairs, %d steps, sse %.6g -> %.6g, saved %s\n", pairs.size(),
              hyper.steps, history.empty() ? 0.0 : history.front().g_sse,
              history.empty() ? 0.0 : history.back().g_sse, ckpt.c_str());
  return 0;
}

int cmd_train_pose(const Effective& e) {
  const std::string out = require_out(e);
  const auto recs = split_side(e, load_records(e), false);

  // Training crops always come from the annotated centers.
  pl::PipelineConfig pcfg = pipeline_cfg_from(e, true);
  pcfg.use_gt_center = true;
  pcfg.trident_ckpt.clear();
  pcfg.shoulder_ckpt.clear();
  pcfg.localizer_ckpt.clear();
  pl::PipelineModels inputs = pl::load_models(pcfg);

  const json o = section(e.j, "pose");
  const json bj = section(o, "branch");
  const std::array<models::BranchConfig, 3> bc = {
      branch_cfg_from(bj, 1), branch_cfg_from(bj, 1), branch_cfg_from(bj, 2)};
  models::TridentConfig tcfg;
  tcfg.fusion.method = pl::fusion_method_from_name(o.value("fusion", "conv_then_concat"));
  if (o.contains("head_fc")) tcfg.head_fc = o.at("head_fc").get<std::vector<int>>();
  tcfg.dropout = o.value("dropout", tcfg.dropout);
  const models::PoseHyper hyper = pose_hyper_from(o);

  const auto samples = pl::prepare_trident_samples(recs, inputs, pcfg, bc[0].input_size);
  Rng rng(e.seed);
  models::Trident trident = models::build_trident(
      models::build_branch(bc[0], rng), models::build_branch(bc[1], rng),
      models::build_branch(bc[2], rng), tcfg, rng);
  const models::TwoPhaseHistory history = models::train_two_phase(trident, samples, hyper, rng);
  const std::string ckpt = ckpt_path(e, "trident", false);
  pl::save_trident_checkpoint(ckpt, trident, bc, tcfg);
  models::save_pose_history(out + "/pose_history.csv", history);
  std::printf(
      "train-pose: %zu samples, phase1 %d + phase2 %d epochs, head loss %.6g -> %.6g, "
      "branches %s, saved %s\n",
      samples.size(), hyper.epochs_phase1, hyper.epochs_phase2,
      history.phase2.empty() ? 0.0 : history.phase2.front(),
      history.phase2.empty() ? 0.0 : history.phase2.back(),
      history.branches_frozen ? "frozen" : "NOT FROZEN", ckpt.c_str());
  return 0;
}

int cmd_train_shoulders(const Effective& e) {
  const std::string out = require_out(e);
  const auto recs = split_side(e, load_records(e), false);

  pl::PipelineConfig pcfg = pipeline_cfg_from(e, true);
  pcfg.use_gt_center = true;
  pl::PipelineModels none;
  none.rng = std::make_unique<Rng>(e.seed);

  const json o = section(e.j, "shoulder");
  const models::BranchConfig bc = branch_cfg_from(section(o, "branch"), 1);
  const models::PoseHyper hyper = pose_hyper_from(o);
  const auto samples = pl::prepare_shoulder_samples(recs, none, pcfg, bc.input_size);
  Rng rng(e.seed);
  models::Branch net = models::build_shoulder_net(bc, rng);
  const std::vector<double> history = models::train_shoulder_net(net, samples, hyper, rng);
  const std::string ckpt = ckpt_path(e, "shoulder", false);
  pl::save_shoulder_checkpoint(ckpt, net, bc);
  write_history_csv(out + "/shoulder_history.csv", history);
  std::printf("train-shoulders: %zu samples, %d epochs, loss %.6g -> %.6g, saved %s\n",
              samples.size(), hyper.epochs_phase1, history.empty() ? 0.0 : history.front(),
              history.empty() ? 0.0 : history.back(), ckpt.c_str());
  return 0;
}

int cmd_eval(const Effective& e) {
  const std::string out = require_out(e);
  const auto test = split_side(e, load_records(e), true);
  const pl::PipelineConfig pcfg = pipeline_cfg_from(e, true);
  pl::PipelineModels m = pl::load_models(pcfg);
  const pl::EvalResult ev = pl::evaluate(test, m, pcfg);

  const auto rows = pl::report_rows(ev, stem_name(e.dataset, "dataset"),
                                    stem_name(e.split, "all"));
  metrics::emit_report(rows, out + "/report");

  std::printf("eval: %zu frames (%zu skipped)\n", ev.frames_total, ev.frames_skipped);
  std::printf("head   mae  pitch %.3f  roll %.3f  yaw %.3f  deg, accuracy@15 %.4f\n",
              ev.head.mean_abs_err[0], ev.head.mean_abs_err[1], ev.head.mean_abs_err[2],
              ev.head.accuracy);
  if (ev.shoulder)
    std::printf("shlder mae  pitch %.3f  roll %.3f  yaw %.3f  deg, accuracy@15 %.4f\n",
                ev.shoulder->mean_abs_err[0], ev.shoulder->mean_abs_err[1],
                ev.shoulder->mean_abs_err[2], ev.shoulder->accuracy);
  if (ev.localization)
    std::printf("localization %s px\n", pl::format_localization(*ev.localization).c_str());
  if (ev.recon)
    std::printf("ffd recon   l1 %.4g  rmse %.4g  d<1.25 %.4f  (%zu frames)\n",
                ev.recon->l1_norm, ev.recon->rmse_linear, ev.recon->thresh_1_25,
                ev.recon_frames);
  std::printf("report: %s/report.csv, %s/report.json\n", out.c_str(), out.c_str());
  return 0;
}

double mm_or_nan(const std::optional<geo::PoseAngles>& p, int i) {
  if (!p) return std::nan("");
  return i == 0 ? p->pitch : (i == 1 ? p->roll : p->yaw);
}

void write_frames_csv(const std::string& path, const std::vector<pl::FrameResult>& results) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("cannot open " + path);
  std::fprintf(f,
               "frame,skipped,center_x,center_y,box_w,box_h,head_pitch,head_roll,head_yaw,"
               "shoulder_pitch,shoulder_roll,shoulder_yaw,ms_total\n");
  for (const auto& r : results) {
    if (r.skipped) {
      std::fprintf(f, "%d,1,,,,,,,,,,,\n", r.frame_index);
      continue;
    }
    std::fprintf(f, "%d,0,%.17g,%.17g,%.17g,%.17g", r.frame_index, r.head_center.x,
                 r.head_center.y, r.head_box.width, r.head_box.height);
    for (int i = 0; i < 3; ++i) {
      const double v = mm_or_nan(r.head_pose, i);
      std::isnan(v) ? std::fprintf(f, ",") : std::fprintf(f, ",%.17g", v);
    }
    for (int i = 0; i < 3; ++i) {
      const double v = mm_or_nan(r.shoulder_pose, i);
      std::isnan(v) ? std::fprintf(f, ",") : std::fprintf(f, ",%.17g", v);
    }
    const double total = r.ms.localize + r.ms.crop + r.ms.ffd + r.ms.motion +
                         r.ms.trident + r.ms.shoulder;
    std::fprintf(f, ",%.3f\n", total);
  }
  std::fclose(f);
}

Image unit_scaled(const Image& img) {
  double lo = img.v.empty() ? 0.0 : img.v[0], hi = lo;
  for (double v : img.v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  Image out(img.height, img.width);
  const double span = hi - lo;
  if (span > 0.0)
    for (size_t i = 0; i < img.v.size(); ++i) out.v[i] = (img.v[i] - lo) / span;
  return out;
}

// gray | ffd | depth | motion magnitude, one row, 2 px separators.
void write_panel(const std::string& path, const dataio::FrameRecord& rec,
                 const pl::FrameInputs& in) {
  const int s = in.depth_in.height;
  Image gray(s, s);
  if (rec.gray)
    gray = resize_bilinear(geo::crop_clamped(rec.gray->intensity, in.head_box), s, s);
  Image ffd(s, s);
  for (size_t i = 0; i < ffd.v.size(); ++i)
    ffd.v[i] = std::clamp(0.5 * (in.ffd_in.v[i] + 1.0), 0.0, 1.0);
  const Image depth = unit_scaled(in.depth_in);
  Image mot(s, s);
  for (size_t i = 0; i < mot.v.size(); ++i)
    mot.v[i] = std::clamp(
        std::hypot(in.motion.dx.v[i], in.motion.dy.v[i]) / std::sqrt(2.0), 0.0, 1.0);

  const int gap = 2;
  Image panel(s, 4 * s + 3 * gap, 1.0);
  const Image* tiles[4] = {&gray, &ffd, &depth, &mot};
  for (int t = 0; t < 4; ++t)
    for (int y = 0; y < s; ++y)
      for (int x = 0; x < s; ++x) panel.at(y, t * (s + gap) + x) = tiles[t]->at(y, x);
  dataio::write_png8(path, panel);
}

int cmd_infer(const Effective& e) {
  const std::string out = require_out(e);
  const auto test = split_side(e, load_records(e), true);
  const pl::PipelineConfig pcfg = pipeline_cfg_from(e, true);
  pl::PipelineModels m = pl::load_models(pcfg);
  if (test.empty()) throw EvalError("no frames to run on");

  const auto results = pl::run_pipeline(test, m, pcfg);
  write_frames_csv(out + "/frames.csv", results);

  const int n_panels = section(e.j, "infer").value("panel_frames", 0);
  if (n_panels > 0) {
    fs::create_directories(out + "/panels");
    const int size = m.trident ? m.trident->branch(0).input_size : 64;
    const Image* prev = nullptr;
    Image prev_store;
    int written = 0;
    for (size_t i = 0; i < test.size() && written < n_panels; ++i) {
      if (results[i].skipped) {
        prev = nullptr;
        continue;
      }
      pl::FrameInputs in = pl::assemble_frame(test[i], prev, m, pcfg, size, 0);
      char name[64];
      std::snprintf(name, sizeof(name), "/panels/frame_%05d.png", results[i].frame_index);
      write_panel(out + name, test[i], in);
      prev_store = std::move(in.depth_in);
      prev = &prev_store;
      ++written;
    }
    std::printf("infer: wrote %d panel%s under %s/panels\n", written,
                written == 1 ? "" : "s", out.c_str());
  }

  size_t skipped = 0;
  for (const auto& r : results) skipped += r.skipped ? 1 : 0;
  std::printf("infer: %zu frames (%zu skipped) -> %s/frames.csv\n", results.size(), skipped,
              out.c_str());
  return 0;
}

int cmd_report(const Effective& e, const Args& a) {
  std::string path = a.positional.empty() ? "" : a.positional[0];
  if (path.empty() && !e.out.empty()) path = e.out + "/report.json";
  if (path.empty()) throw ConfigError("report wants a report.json path (or --out)");
  const auto rows = metrics::load_report(path);
  std::printf("%-12s %-10s %-10s %-20s %s\n", "dataset", "split", "model", "metric", "value");
  for (const auto& r : rows)
    std::printf("%-12s %-10s %-10s %-20s %.6g\n", r.dataset.c_str(), r.split.c_str(),
                r.model.c_str(), r.metric.c_str(), r.value);
  return 0;
}

int dispatch(const Args& a) {
  const Effective e = merge(a);
  if (a.cmd == "synth") return cmd_synth(e);
  if (a.cmd == "train-localizer") return cmd_train_localizer(e);
  if (a.cmd == "train-ffd") return cmd_train_ffd(e);
  if (a.cmd == "train-pose") return cmd_train_pose(e);
  if (a.cmd == "train-shoulders") return cmd_train_shoulders(e);
  if (a.cmd == "eval") return cmd_eval(e);
  if (a.cmd == "infer") return cmd_infer(e);
  if (a.cmd == "report") return cmd_report(e, a);
  if (a.cmd == "-h" || a.cmd == "--help" || a.cmd == "help") {
    std::fputs(kUsage, stdout);
    return 0;
  }
  throw ConfigError("unknown command: " + a.cmd);
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return dispatch(parse_args(argc, argv));
  } catch (const ConfigError& ex) {
    std::fprintf(stderr, "config error: %s\n%s", ex.what(), argc < 2 ? kUsage : "");
    return 2;
  } catch (const InvalidSpec& ex) {
    std::fprintf(stderr, "config error: %s\n", ex.what());
    return 2;
  } catch (const EvalError& ex) {
    std::fprintf(stderr, "evaluation error: %s\n", ex.what());
    return 4;
  } catch (const AllMasked& ex) {
    std::fprintf(stderr, "evaluation error: %s\n", ex.what());
    return 4;
  } catch (const LengthMismatch& ex) {
    std::fprintf(stderr, "evaluation error: %s\n", ex.what());
    return 4;
  } catch (const Error& ex) {
    std::fprintf(stderr, "data error: %s\n", ex.what());
    return 3;
  } catch (const std::exception& ex) {
    std::fprintf(stderr, "error: %s\n", ex.what());
    return 1;
  }
}
