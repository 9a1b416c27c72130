#include <doctest.h>

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "depthpose/core/errors.hpp"
#include "depthpose/core/rng.hpp"
#include "depthpose/dataio/synth.hpp"
#include "depthpose/metrics/metrics.hpp"
#include "depthpose/motion/motion.hpp"
#include "depthpose/pipeline/pipeline.hpp"

using namespace depthpose;
namespace pl = depthpose::pipeline;

namespace {

std::string temp_path(const std::string& stem) {
  return (std::filesystem::temp_directory_path() /
          (stem + "_" + std::to_string(getpid())))
      .string();
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

dataio::SynthConfig small_scene(int frames) {
  dataio::SynthConfig cfg;
  cfg.frames_per_subject = frames;
  cfg.width = 80;
  cfg.height = 66;
  cfg.fx = 100.0;
  cfg.fy = 100.0;
  cfg.seed = 11;
  return cfg;
}

models::LocalizerConfig tiny_localizer_config() {
  models::LocalizerConfig cfg;
  cfg.input_width = 40;
  cfg.input_height = 32;
  cfg.conv_specs = {{3, 2, 1}, {3, 2, 1}, {3, 2, 1}, {3, 4, 1}};
  cfg.fc_sizes = {8, 2};
  cfg.dropout = 0.0;
  return cfg;
}

models::GeneratorConfig tiny_generator_config() {
  models::GeneratorConfig cfg;
  cfg.input_size = 16;
  cfg.encoder_filters = {4, 8};
  cfg.decoder_filters = {8, 4};
  cfg.kernel = 3;
  cfg.convs_per_stage = 1;
  return cfg;
}

models::BranchConfig tiny_branch_config(int in_ch) {
  models::BranchConfig cfg;
  cfg.input_size = 16;
  cfg.in_channels = in_ch;
  cfg.conv_kernels = {3, 3, 3, 3, 3};
  cfg.conv_filters = {4, 4, 4, 4, 8};
  cfg.head_fc = {16, 12, 3};
  cfg.dropout = 0.0;
  return cfg;
}

models::TridentConfig tiny_trident_config() {
  models::TridentConfig cfg;
  cfg.head_fc = {10, 6, 3};
  cfg.dropout = 0.0;
  return cfg;
}

// Random-init bundle; inference is deterministic regardless of training.
pl::PipelineModels tiny_models(uint64_t seed, bool with_localizer = true,
                               bool with_ffd = true, bool with_shoulder = true) {
  pl::PipelineModels m;
  m.rng = std::make_unique<Rng>(seed);
  if (with_localizer) {
    m.localizer_cfg = tiny_localizer_config();
    m.localizer = models::build_localizer(m.localizer_cfg, *m.rng);
  }
  if (with_ffd) m.ffd.emplace(tiny_generator_config(), *m.rng);
  m.trident = models::build_trident(
      models::build_branch(tiny_branch_config(1), *m.rng),
      models::build_branch(tiny_branch_config(1), *m.rng),
      models::build_branch(tiny_branch_config(2), *m.rng), tiny_trident_config(), *m.rng);
  if (with_shoulder) m.shoulder = models::build_shoulder_net(tiny_branch_config(1), *m.rng);
  return m;
}

bool all_zero(const Image& img) {
  for (double v : img.v)
    if (v != 0.0) return false;
  return true;
}

bool same_pose(const geo::PoseAngles& a, const geo::PoseAngles& b) {
  return a.pitch == b.pitch && a.roll == b.roll && a.yaw == b.yaw;
}

dataio::FrameRecord zeroed_depth(dataio::FrameRecord rec) {
  std::fill(rec.depth.mm.v.begin(), rec.depth.mm.v.end(), 0.0);
  return rec;
}

}  // namespace

TEST_CASE("first frame gets the zero motion sentinel, absent generator zero features") {
  const auto recs = dataio::synth_records(small_scene(2));
  auto m = tiny_models(3, false, false, false);
  pl::PipelineConfig cfg;
  cfg.use_gt_center = true;

  pl::FrameInputs in0 = pl::assemble_frame(recs[0], nullptr, m, cfg, 16, 0);
  CHECK(in0.depth_in.height == 16);
  CHECK(in0.depth_in.width == 16);
  CHECK(in0.motion.dx.height == 16);
  CHECK(all_zero(in0.motion.dx));
  CHECK(all_zero(in0.motion.dy));
  CHECK(in0.ffd_in.height == 16);
  CHECK(all_zero(in0.ffd_in));
  CHECK(!in0.shoulder_in.has_value());
  CHECK(in0.ms.localize >= 0.0);

  pl::FrameInputs in1 = pl::assemble_frame(recs[1], &in0.depth_in, m, cfg, 16, 16);
  const motion::MotionImage want =
      motion::flow_to_motion_image(motion::farneback_flow(in0.depth_in, in1.depth_in));
  CHECK(in1.motion.dx.v == want.dx.v);
  CHECK(in1.motion.dy.v == want.dy.v);
  CHECK(in1.shoulder_in.has_value());
  CHECK(in1.shoulder_in->height == 16);
}

TEST_CASE("ffd features come from the generator when it is loaded") {
  const auto recs = dataio::synth_records(small_scene(1));
  auto m = tiny_models(4, false, true, false);
  pl::PipelineConfig cfg;
  cfg.use_gt_center = true;

  pl::FrameInputs in = pl::assemble_frame(recs[0], nullptr, m, cfg, 16, 0);
  CHECK(!all_zero(in.ffd_in));
  const Image crop = geo::crop_clamped(recs[0].depth.mm, in.head_box);
  const Image want = models::ffd_infer(*m.ffd, crop);
  CHECK(in.ffd_in.v == want.v);
}

TEST_CASE("skipped frames keep their slot and reset the motion chain") {
  auto recs = dataio::synth_records(small_scene(3));
  recs[1] = zeroed_depth(recs[1]);
  auto m = tiny_models(5);
  pl::PipelineConfig cfg;
  cfg.use_gt_center = true;

  const auto results = pl::run_pipeline(recs, m, cfg);
  REQUIRE(results.size() == 3);
  CHECK(!results[0].skipped);
  CHECK(results[1].skipped);
  CHECK(!results[1].head_pose.has_value());
  CHECK(!results[1].shoulder_pose.has_value());
  CHECK(!results[2].skipped);
  for (int i = 0; i < 3; ++i) CHECK(results[i].frame_index == recs[i].frame_index);

  // After the hole the third frame must look like a sequence start.
  const auto fresh = pl::run_pipeline({recs[2]}, m, cfg);
  REQUIRE(fresh.size() == 1);
  REQUIRE(results[2].head_pose.has_value());
  REQUIRE(fresh[0].head_pose.has_value());
  CHECK(same_pose(*results[2].head_pose, *fresh[0].head_pose));
  REQUIRE(results[2].shoulder_pose.has_value());
  CHECK(same_pose(*results[2].shoulder_pose, *fresh[0].shoulder_pose));
}

TEST_CASE("motion state also resets on a sequence boundary") {
  const auto base = dataio::synth_records(small_scene(2));
  std::vector<dataio::FrameRecord> two_seqs = base;
  two_seqs[1].sequence_id = "seq_01";  // same subject, new sequence
  auto m = tiny_models(6, false, false, false);
  pl::PipelineConfig cfg;
  cfg.use_gt_center = true;

  const auto joined = pl::run_pipeline(two_seqs, m, cfg);
  const auto alone = pl::run_pipeline({two_seqs[1]}, m, cfg);
  REQUIRE(joined.size() == 2);
  REQUIRE(joined[1].head_pose.has_value());
  CHECK(same_pose(*joined[1].head_pose, *alone[0].head_pose));

  // Control: within one sequence the second frame depends on the first.
  const auto chained = pl::run_pipeline(base, m, cfg);
  CHECK(!same_pose(*chained[1].head_pose, *alone[0].head_pose));
}

TEST_CASE("a center source is required") {
  const auto recs = dataio::synth_records(small_scene(1));
  auto no_loc = tiny_models(7, false);
  pl::PipelineConfig cfg;  // use_gt_center = false
  CHECK_THROWS_AS(pl::run_pipeline(recs, no_loc, cfg), ConfigError);

  auto stripped = recs;
  stripped[0].head_center_2d.reset();
  cfg.use_gt_center = true;
  CHECK_THROWS_AS(pl::run_pipeline(stripped, no_loc, cfg), MissingAnnotation);
}

TEST_CASE("geometry outputs do not depend on which networks are loaded") {
  const auto recs = dataio::synth_records(small_scene(3));
  pl::PipelineConfig cfg;
  cfg.use_gt_center = true;

  auto full = tiny_models(8);
  pl::PipelineModels none;
  none.rng = std::make_unique<Rng>(0);

  const auto a = pl::run_pipeline(recs, full, cfg);
  const auto b = pl::run_pipeline(recs, none, cfg);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].head_center.x == b[i].head_center.x);
    CHECK(a[i].head_center.y == b[i].head_center.y);
    CHECK(a[i].head_box.center_x == b[i].head_box.center_x);
    CHECK(a[i].head_box.center_y == b[i].head_box.center_y);
    CHECK(a[i].head_box.width == b[i].head_box.width);
    CHECK(a[i].head_box.height == b[i].head_box.height);
    CHECK(!b[i].head_pose.has_value());
  }
}

TEST_CASE("checkpoints round trip every model bitwise") {
  const auto recs = dataio::synth_records(small_scene(2));
  auto m = tiny_models(9);
  pl::PipelineConfig cfg;
  cfg.use_gt_center = true;
  const auto before = pl::run_pipeline(recs, m, cfg);
  const PixelPoint loc_before =
      models::localize(*m.localizer, m.localizer_cfg, recs[0].depth.mm);

  const std::string dir = temp_path("pl_ckpt");
  std::filesystem::create_directories(dir);
  pl::save_localizer_checkpoint(dir + "/loc.ckpt", *m.localizer, m.localizer_cfg);
  pl::save_ffd_checkpoint(dir + "/ffd.ckpt", *m.ffd);
  pl::save_trident_checkpoint(
      dir + "/tri.ckpt", *m.trident,
      {tiny_branch_config(1), tiny_branch_config(1), tiny_branch_config(2)},
      tiny_trident_config());
  pl::save_shoulder_checkpoint(dir + "/sho.ckpt", *m.shoulder, tiny_branch_config(1));

  pl::PipelineConfig loaded_cfg;
  loaded_cfg.localizer_ckpt = dir + "/loc.ckpt";
  loaded_cfg.ffd_ckpt = dir + "/ffd.ckpt";
  loaded_cfg.trident_ckpt = dir + "/tri.ckpt";
  loaded_cfg.shoulder_ckpt = dir + "/sho.ckpt";
  loaded_cfg.use_gt_center = true;
  loaded_cfg.seed = 777;  // the init path must not leak into loaded weights
  auto loaded = pl::load_models(loaded_cfg);
  REQUIRE(loaded.localizer.has_value());
  REQUIRE(loaded.ffd.has_value());
  REQUIRE(loaded.trident.has_value());
  REQUIRE(loaded.shoulder.has_value());
  CHECK(loaded.localizer_cfg.input_width == m.localizer_cfg.input_width);
  CHECK(loaded.localizer_cfg.fc_sizes == m.localizer_cfg.fc_sizes);

  // The blob is float32, so a reload is only near the live doubles...
  const PixelPoint loc_after =
      models::localize(*loaded.localizer, loaded.localizer_cfg, recs[0].depth.mm);
  CHECK(loc_after.x == doctest::Approx(loc_before.x).epsilon(1e-4));
  CHECK(loc_after.y == doctest::Approx(loc_before.y).epsilon(1e-4));

  const auto after = pl::run_pipeline(recs, loaded, loaded_cfg);
  REQUIRE(after.size() == before.size());
  for (size_t i = 0; i < after.size(); ++i) {
    CHECK(after[i].head_pose->pitch ==
          doctest::Approx(before[i].head_pose->pitch).epsilon(1e-3));
    CHECK(after[i].shoulder_pose->yaw ==
          doctest::Approx(before[i].shoulder_pose->yaw).epsilon(1e-3));
  }

  // ... but two loads of the same files must agree exactly.
  loaded_cfg.seed = 31337;
  auto loaded2 = pl::load_models(loaded_cfg);
  const auto again = pl::run_pipeline(recs, loaded2, loaded_cfg);
  for (size_t i = 0; i < after.size(); ++i) {
    CHECK(same_pose(*after[i].head_pose, *again[i].head_pose));
    CHECK(same_pose(*after[i].shoulder_pose, *again[i].shoulder_pose));
  }

  std::filesystem::remove_all(dir);
}

TEST_CASE("checkpoint loaders reject wrong architectures and missing files") {
  const std::string dir = temp_path("pl_badckpt");
  std::filesystem::create_directories(dir);
  Rng rng(1);
  auto m = tiny_models(10, true, false, false);
  pl::save_localizer_checkpoint(dir + "/loc.ckpt", *m.localizer, m.localizer_cfg);

  CHECK_THROWS_AS(pl::load_trident_checkpoint(dir + "/loc.ckpt", rng), FormatError);
  CHECK_THROWS_AS(pl::load_ffd_checkpoint(dir + "/loc.ckpt", rng), FormatError);
  models::BranchConfig bc;
  CHECK_THROWS_AS(pl::load_shoulder_checkpoint(dir + "/loc.ckpt", bc, rng), FormatError);
  models::LocalizerConfig lc;
  CHECK_THROWS_AS(pl::load_localizer_checkpoint(dir + "/nothere.ckpt", lc, rng), IoError);

  std::filesystem::remove_all(dir);
}

TEST_CASE("load_models loads exactly what the config names") {
  pl::PipelineConfig empty;
  auto none = pl::load_models(empty);
  CHECK(!none.localizer.has_value());
  CHECK(!none.ffd.has_value());
  CHECK(!none.trident.has_value());
  CHECK(!none.shoulder.has_value());
  REQUIRE(none.rng != nullptr);

  const std::string dir = temp_path("pl_partial");
  std::filesystem::create_directories(dir);
  auto m = tiny_models(11, true, false, false);
  pl::save_localizer_checkpoint(dir + "/loc.ckpt", *m.localizer, m.localizer_cfg);
  pl::save_trident_checkpoint(
      dir + "/tri.ckpt", *m.trident,
      {tiny_branch_config(1), tiny_branch_config(1), tiny_branch_config(2)},
      tiny_trident_config());

  pl::PipelineConfig cfg;
  cfg.localizer_ckpt = dir + "/loc.ckpt";
  cfg.trident_ckpt = dir + "/tri.ckpt";
  auto partial = pl::load_models(cfg);
  CHECK(partial.localizer.has_value());
  CHECK(partial.trident.has_value());
  CHECK(!partial.ffd.has_value());
  CHECK(!partial.shoulder.has_value());

  std::filesystem::remove_all(dir);
}

TEST_CASE("trident training samples mirror the inference inputs") {
  auto recs = dataio::synth_records(small_scene(3));
  auto m = tiny_models(12, false, true, false);
  pl::PipelineConfig cfg;
  cfg.use_gt_center = true;

  const auto samples = pl::prepare_trident_samples(recs, m, cfg, 16);
  REQUIRE(samples.size() == 3);
  CHECK(all_zero(samples[0].motion.dx));
  CHECK(all_zero(samples[0].motion.dy));
  const motion::MotionImage want = motion::flow_to_motion_image(
      motion::farneback_flow(samples[0].depth, samples[1].depth));
  CHECK(samples[1].motion.dx.v == want.dx.v);
  CHECK(samples[1].motion.dy.v == want.dy.v);
  for (const auto& s : samples) {
    CHECK(s.pose.has_value());
    CHECK(!all_zero(s.ffd));
  }

  // A dead frame drops out and restarts the chain.
  recs[1] = zeroed_depth(recs[1]);
  const auto gapped = pl::prepare_trident_samples(recs, m, cfg, 16);
  REQUIRE(gapped.size() == 2);
  CHECK(all_zero(gapped[1].motion.dx));
  CHECK(all_zero(gapped[1].motion.dy));
}

TEST_CASE("shoulder training samples carry the shoulder crop and pose") {
  const auto recs = dataio::synth_records(small_scene(3));
  auto m = tiny_models(13, false, false, false);
  pl::PipelineConfig cfg;
  cfg.use_gt_center = true;

  const auto samples = pl::prepare_shoulder_samples(recs, m, cfg, 16);
  REQUIRE(samples.size() == 3);
  for (size_t i = 0; i < samples.size(); ++i) {
    REQUIRE(samples[i].planes.size() == 1);
    CHECK(samples[i].planes[0].height == 16);
    CHECK(samples[i].planes[0].width == 16);
    REQUIRE(samples[i].pose.has_value());
    CHECK(same_pose(*samples[i].pose, *recs[i].shoulder_pose));
  }
}

TEST_CASE("evaluate aggregates every loaded component deterministically") {
  const auto recs = dataio::synth_records(small_scene(5));
  auto m = tiny_models(14);
  pl::PipelineConfig cfg;
  cfg.use_gt_center = true;

  const pl::EvalResult ev = pl::evaluate(recs, m, cfg);
  CHECK(ev.frames_total == 5);
  CHECK(ev.frames_skipped == 0);
  for (int i = 0; i < 3; ++i) {
    CHECK(std::isfinite(ev.head.mean_abs_err[i]));
    CHECK(ev.head.mean_abs_err[i] >= 0.0);
  }
  REQUIRE(ev.shoulder.has_value());
  REQUIRE(ev.recon.has_value());
  CHECK(ev.recon_frames == 5);
  CHECK(ev.recon->thresh_1_25 <= ev.recon->thresh_2_5);
  CHECK(ev.recon->thresh_2_5 <= ev.recon->thresh_3_75);
  REQUIRE(ev.localization.has_value());
  CHECK(ev.localization->mean_px >= 0.0);

  const auto rows = pl::report_rows(ev, "synthetic", "all");
  CHECK(rows.size() == 7 + 7 + 2 + 11 + 2);

  // Same inputs, fresh bundle from the same seed: identical report bytes.
  auto m2 = tiny_models(14);
  const auto rows2 = pl::report_rows(pl::evaluate(recs, m2, cfg), "synthetic", "all");
  const std::string stem1 = temp_path("pl_rep1");
  const std::string stem2 = temp_path("pl_rep2");
  metrics::emit_report(rows, stem1);
  metrics::emit_report(rows2, stem2);
  CHECK(slurp(stem1 + ".csv") == slurp(stem2 + ".csv"));
  CHECK(slurp(stem1 + ".json") == slurp(stem2 + ".json"));
  for (const auto& stem : {stem1, stem2}) {
    std::filesystem::remove(stem + ".csv");
    std::filesystem::remove(stem + ".json");
  }
}

TEST_CASE("evaluate failure modes") {
  const auto recs = dataio::synth_records(small_scene(2));
  auto m = tiny_models(15);
  pl::PipelineConfig cfg;
  cfg.use_gt_center = true;

  CHECK_THROWS_AS(pl::evaluate({}, m, cfg), EvalError);

  auto unannotated = recs;
  for (auto& r : unannotated) r.head_pose.reset();
  CHECK_THROWS_AS(pl::evaluate(unannotated, m, cfg), EvalError);

  pl::PipelineModels no_trident;
  no_trident.rng = std::make_unique<Rng>(0);
  CHECK_THROWS_AS(pl::evaluate(recs, no_trident, cfg), ConfigError);
}

TEST_CASE("localization error formatting") {
  CHECK(pl::format_localization({3.271, 2.194}) == "3.27±2.19");
  CHECK(pl::format_localization({0.0, 0.0}) == "0.00±0.00");
}

TEST_CASE("report rows keep a fixed layout") {
  pl::EvalResult ev;
  ev.head.mean_abs_err = {1.0, 2.0, 3.0};
  ev.head.std_abs_err = {0.1, 0.2, 0.3};
  ev.head.accuracy = 0.5;
  ev.frames_total = 4;
  ev.frames_skipped = 1;

  const auto rows = pl::report_rows(ev, "ds", "sp");
  REQUIRE(rows.size() == 9);
  CHECK(rows[0].dataset == "ds");
  CHECK(rows[0].split == "sp");
  CHECK(rows[0].model == "trident");
  CHECK(rows[0].metric == "pitch_mae");
  CHECK(rows[0].value == 1.0);
  CHECK(rows[2].metric == "yaw_mae");
  CHECK(rows[2].value == 3.0);
  CHECK(rows[6].metric == "accuracy");
  CHECK(rows[7].model == "pipeline");
  CHECK(rows[7].metric == "frames_total");
  CHECK(rows[8].metric == "frames_skipped");
  CHECK(rows[8].value == 1.0);
}
