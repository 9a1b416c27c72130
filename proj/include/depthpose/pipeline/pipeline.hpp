#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "depthpose/core/image.hpp"
#include "depthpose/core/rng.hpp"
#include "depthpose/dataio/dataset.hpp"
#include "depthpose/geometry/geometry.hpp"
#include "depthpose/metrics/metrics.hpp"
#include "depthpose/models/ffd.hpp"
#include "depthpose/models/localizer.hpp"
#include "depthpose/models/posenet.hpp"
#include "depthpose/motion/motion.hpp"
#include "depthpose/nn/layers.hpp"

namespace depthpose::pipeline {

struct PipelineConfig {
  std::string localizer_ckpt;
  std::string ffd_ckpt;
  std::string trident_ckpt;
  std::string shoulder_ckpt;
  double head_rx = geo::kHeadCropRx;
  double head_ry = geo::kHeadCropRy;
  double shoulder_rx = geo::kShoulderCropRx;
  double shoulder_ry = geo::kShoulderCropRy;
  bool use_gt_center = false;
  uint64_t seed = 0;
};

// Loaded model bundle. Every slot is optional: inference runs whatever is
// present (no generator -> the trident's FfD input is all zeros, no shoulder
// net -> no shoulder angles, gt centers -> no localizer needed). The owned
// rng outlives the models so their dropout bindings stay valid across moves.
struct PipelineModels {
  std::unique_ptr<Rng> rng;
  std::optional<nn::Sequential> localizer;
  models::LocalizerConfig localizer_cfg;
  std::optional<models::Generator> ffd;
  std::optional<models::Trident> trident;
  std::optional<models::Branch> shoulder;
};

// Stable names for the fusion methods, used by checkpoints and config files.
const char* fusion_method_name(models::FusionMethod m);
models::FusionMethod fusion_method_from_name(const std::string& s);  // FormatError

// Checkpoint round trips: weights plus enough of the architecture to rebuild
// the model without the training-side config in hand.
void save_localizer_checkpoint(const std::string& path, nn::Sequential& model,
                               const models::LocalizerConfig& cfg);
void save_ffd_checkpoint(const std::string& path, models::Generator& gen);
void save_trident_checkpoint(const std::string& path, models::Trident& trident,
                             const std::array<models::BranchConfig, 3>& branches,
                             const models::TridentConfig& cfg);
void save_shoulder_checkpoint(const std::string& path, models::Branch& net,
                              const models::BranchConfig& cfg);

nn::Sequential load_localizer_checkpoint(const std::string& path,
                                         models::LocalizerConfig& cfg_out, Rng& rng);
models::Generator load_ffd_checkpoint(const std::string& path, Rng& rng);
models::Trident load_trident_checkpoint(const std::string& path, Rng& rng);
models::Branch load_shoulder_checkpoint(const std::string& path,
                                        models::BranchConfig& cfg_out, Rng& rng);

// Loads every checkpoint with a non-empty path in `cfg`.
PipelineModels load_models(const PipelineConfig& cfg);

struct StageMs {
  double localize = 0.0;
  double crop = 0.0;
  double ffd = 0.0;
  double motion = 0.0;
  double trident = 0.0;
  double shoulder = 0.0;
};

struct FrameResult {
  int frame_index = 0;
  bool skipped = false;  // no valid depth under the head window
  PixelPoint head_center;
  geo::CropBox head_box;
  std::optional<geo::PoseAngles> head_pose;
  std::optional<geo::PoseAngles> shoulder_pose;
  StageMs ms;
};

// One frame's assembled network inputs. `prev_depth_in` is the previous
// frame's standardized crop; pass null at a sequence start or after a skipped
// frame, which yields the all-zero motion sentinel.
struct FrameInputs {
  PixelPoint center;
  geo::CropBox head_box;
  Image depth_in;  // input_size x input_size, standardized
  Image ffd_in;    // generator output in [-1, 1]; zeros without a generator
  motion::MotionImage motion;
  std::optional<geo::CropBox> shoulder_box;
  std::optional<Image> shoulder_in;
  StageMs ms;
};

// Shared per-frame input path (training prep and inference both go through
// here, so an overfit model sees bit-identical inputs at eval time). Throws
// NoValidDepth when the head window has no returns; shoulder extraction
// failures are swallowed (the optionals stay empty). shoulder_size <= 0
// skips the shoulder path.
FrameInputs assemble_frame(const dataio::FrameRecord& rec, const Image* prev_depth_in,
                           PipelineModels& models, const PipelineConfig& cfg,
                           int input_size, int shoulder_size);

// Inference over an ordered frame list. Motion state resets on every
// (subject, sequence) change and after a skipped frame. Results preserve
// input order; frames whose head window has no valid depth come back as
// skip markers rather than aborting the run.
std::vector<FrameResult> run_pipeline(const std::vector<dataio::FrameRecord>& frames,
                                      PipelineModels& models, const PipelineConfig& cfg);

// Training streams built with the exact inference input path. Frames without
// the needed annotation keep an empty pose (the trainers reject those).
std::vector<models::TridentSample> prepare_trident_samples(
    const std::vector<dataio::FrameRecord>& recs, PipelineModels& models,
    const PipelineConfig& cfg, int input_size);
std::vector<models::PoseSample> prepare_shoulder_samples(
    const std::vector<dataio::FrameRecord>& recs, PipelineModels& models,
    const PipelineConfig& cfg, int shoulder_size);

struct LocalizationError {
  double mean_px = 0.0;
  double std_px = 0.0;  // population
};

std::string format_localization(const LocalizationError& e);  // "3.27±2.19"

struct EvalResult {
  metrics::PoseReport head;
  std::optional<metrics::PoseReport> shoulder;
  std::optional<metrics::ReconMetrics> recon;     // mean over scored gray frames
  std::optional<LocalizationError> localization;  // localizer vs gt centers
  size_t frames_total = 0;
  size_t frames_skipped = 0;
  size_t recon_frames = 0;
};

// Runs the pipeline over `test` and aggregates. Requires a trident; scores
// the FfD output against gray crops when both are available; measures the
// localizer against ground-truth centers whenever both exist (even when the
// crops themselves use gt centers). Throws EvalError when there is nothing
// to score.
EvalResult evaluate(const std::vector<dataio::FrameRecord>& test,
                    PipelineModels& models, const PipelineConfig& cfg);

// Flattens a result into report rows (fixed order, so emitted files are
// byte-stable for identical inputs).
std::vector<metrics::ReportRow> report_rows(const EvalResult& r,
                                            const std::string& dataset,
                                            const std::string& split);

}  // namespace depthpose::pipeline
