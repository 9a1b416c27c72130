#pragma once

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "depthpose/core/image.hpp"
#include "depthpose/core/rng.hpp"
#include "depthpose/geometry/geometry.hpp"
#include "depthpose/motion/motion.hpp"
#include "depthpose/nn/layers.hpp"

namespace depthpose::models {

struct BranchConfig {
  int input_size = 64;
  int in_channels = 1;
  std::vector<int> conv_kernels{5, 5, 4, 3, 3};
  std::vector<int> conv_filters{32, 32, 32, 32, 128};
  std::vector<int> head_fc{128, 84, 3};  // last layer is removed at the tap
  double dropout = 0.5;
};

// One input stream: conv trunk ending at the penultimate FC activation (the
// tap that fusion consumes), plus the detachable final regression layer.
struct Branch {
  nn::Sequential trunk;  // convs .. FC(84) + tanh
  nn::Sequential top;    // dropout, FC(3), tanh
  int tap = 0;           // tap width
  int input_size = 0;
  int in_channels = 0;

  nn::Tensor tap_forward(const nn::Tensor& x, bool train) {
    return trunk.forward(x, train);
  }
  nn::Tensor forward(const nn::Tensor& x, bool train) {
    return top.forward(trunk.forward(x, train), train);
  }
  nn::Tensor backward(const nn::Tensor& grad) {
    return trunk.backward(top.backward(grad));
  }
  std::vector<nn::Param> params();
  std::vector<nn::Param> buffers();
  std::vector<nn::Param> params_and_buffers();
  void set_rng(Rng* rng) {
    trunk.set_rng(rng);
    top.set_rng(rng);
  }
};

Branch build_branch(const BranchConfig& cfg, Rng& rng);

enum class FusionMethod { Multiplication, Concatenation, Convolution, ConvThenConcat };

struct FusionSpec {
  FusionMethod method = FusionMethod::ConvThenConcat;
};

// Stateless pairwise fusion; Convolution variants carry weights and live in
// FusionOp instead.
nn::Tensor fuse(const nn::Tensor& a, const nn::Tensor& b, const FusionSpec& spec);

// Pairwise fusion of (N, d) feature vectors. Convolution holds the 1x1
// mixing filter (a dense map over channels) and its bias.
class FusionOp {
 public:
  FusionOp(FusionMethod method, int d_a, int d_b, Rng& rng);
  int out_dim() const { return out_dim_; }
  nn::Tensor fuse(const nn::Tensor& a, const nn::Tensor& b, bool train);
  std::pair<nn::Tensor, nn::Tensor> backward(const nn::Tensor& grad);
  void collect_params(const std::string& prefix, std::vector<nn::Param>& out);

 private:
  FusionMethod method_;
  int da_, db_, out_dim_;
  std::unique_ptr<nn::Dense> mix_;
  nn::Tensor cached_a_, cached_b_;
};

struct LossWeights {
  double pitch = 0.2;
  double roll = 0.35;
  double yaw = 0.45;
};

// Mean over the batch of Σ_i |w_i (gt_i − pred_i)|; angles in normalized
// (−1, 1) units. Tensors are (N, 3) ordered (pitch, roll, yaw).
double weighted_l2_loss(const nn::Tensor& pred, const nn::Tensor& gt,
                        const LossWeights& w);
nn::Tensor weighted_l2_grad(const nn::Tensor& pred, const nn::Tensor& gt,
                            const LossWeights& w);

std::array<double, 3> normalize_angles(const geo::PoseAngles& a);    // degrees / 180
geo::PoseAngles denormalize_angles(const std::array<double, 3>& raw);  // raw * 180

struct TridentConfig {
  FusionSpec fusion;
  std::vector<int> head_fc{128, 84, 3};
  double dropout = 0.5;
};

// Three branches fused before a shared regression head. ConvThenConcat (the
// default) conv-fuses (depth, ffd) and (depth, motion), then concatenates;
// the binary methods fold left over (depth, ffd, motion).
class Trident {
 public:
  Trident(Branch&& depth, Branch&& ffd, Branch&& motion, const TridentConfig& cfg,
          Rng& rng);

  nn::Tensor forward(const nn::Tensor& xd, const nn::Tensor& xf,
                     const nn::Tensor& xm, bool train);
  nn::Tensor fuse_taps(const nn::Tensor& td, const nn::Tensor& tf,
                       const nn::Tensor& tm, bool train);
  // Routes a gradient at the fused features back through the fusion ops,
  // filling their weight gradients; returns the per-tap gradients.
  std::array<nn::Tensor, 3> fusion_backward(const nn::Tensor& grad_fused);

  Branch& branch(int i);
  nn::Sequential& head() { return head_; }
  int fused_dim() const { return fused_dim_; }

  std::vector<nn::Param> branch_params();
  std::vector<nn::Param> head_and_fusion_params();
  std::vector<nn::Param> params();
  std::vector<nn::Param> params_and_buffers();
  void set_rng(Rng* rng);

 private:
  TridentConfig cfg_;
  Branch bd_, bf_, bm_;
  std::vector<FusionOp> ops_;
  nn::Sequential head_;
  int fused_dim_ = 0;
  int concat_a_dim_ = 0;  // left width of the ConvThenConcat stack
};

Trident build_trident(Branch&& depth, Branch&& ffd, Branch&& motion,
                      const TridentConfig& cfg, Rng& rng);

struct PoseHyper {
  int epochs_phase1 = 40;
  int epochs_phase2 = 40;
  int batch_size = 8;
  double lr = 0.1;
  int halve_every = 15;
  double momentum = 0.9;
  LossWeights weights;
};

// One training sample for a single-stream pose net; planes are stacked as
// input channels (shoulder nets use one plane, motion streams use two).
struct PoseSample {
  std::vector<Image> planes;
  std::optional<geo::PoseAngles> pose;
};

std::vector<double> train_pose_branch(Branch& net, const std::vector<PoseSample>& data,
                                      const PoseHyper& hyper, Rng& rng);

struct TridentSample {
  Image depth;   // prepared 64x64 crop
  Image ffd;     // generator output, 64x64 in [-1, 1]
  motion::MotionImage motion;
  std::optional<geo::PoseAngles> pose;
};

struct TwoPhaseHistory {
  std::array<std::vector<double>, 3> phase1;  // depth, ffd, motion branch losses
  std::vector<double> phase2;                 // fusion head losses
  bool branches_frozen = false;  // branch weights bit-identical across phase 2
};

// Phase 1: each branch trains on its own stream with its own head. Phase 2:
// branch weights freeze (verified bitwise), taps are precomputed in eval
// mode, and only the fusion ops + shared head train.
TwoPhaseHistory train_two_phase(Trident& trident,
                                const std::vector<TridentSample>& data,
                                const PoseHyper& hyper, Rng& rng);

void save_pose_history(const std::string& path, const TwoPhaseHistory& history);

geo::PoseAngles predict_pose(Trident& trident, const Image& depth, const Image& ffd,
                        const motion::MotionImage& motion);

Branch build_shoulder_net(const BranchConfig& cfg, Rng& rng);
std::vector<double> train_shoulder_net(Branch& net,
                                       const std::vector<PoseSample>& data,
                                       const PoseHyper& hyper, Rng& rng);
geo::PoseAngles predict_shoulder_pose(Branch& net, const Image& crop);

}  // namespace depthpose::models
