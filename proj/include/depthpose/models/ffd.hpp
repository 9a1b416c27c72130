#pragma once

#include <string>
#include <utility>
#include <vector>

#include "depthpose/core/image.hpp"
#include "depthpose/core/rng.hpp"
#include "depthpose/nn/layers.hpp"

namespace depthpose::models {

// Encoder/decoder conditional translator: depth head crop in, gray face out.
// Deterministic by construction — there is no latent noise input, so the
// generator is a pure function of the depth crop.
struct GeneratorConfig {
  int input_size = 64;  // square, power of two
  std::vector<int> encoder_filters{128, 256, 512, 1024};
  std::vector<int> decoder_filters{512, 256, 128, 64};
  int kernel = 5;
  // Stride-1 convolutions per stage before the resampling (stride-2) one.
  int convs_per_stage = 3;
  // Concatenate mirrored encoder activations into the decoder. Off by
  // default; kept buildable for ablations.
  bool unet_skips = false;
};

struct DiscriminatorConfig {
  int input_size = 64;
  std::vector<int> filters{64, 128, 256, 512};
  int kernel = 5;
};

// Small stand-ins for single-CPU runs; same topology, ~1000x fewer weights.
GeneratorConfig desk_generator_config();
DiscriminatorConfig desk_discriminator_config();

struct GanHyper {
  double lambda_content = 0.1;
  double label_smooth = 0.9;
  double adam_beta1 = 0.5;
  int batch_size = 64;
  int k_disc = 1;   // discriminator updates per generator update
  int sse_pool = 4; // average-pool factor before the content SSE
  int steps = 500;
  double lr_g = 2e-4;
  double lr_d = 2e-4;
};

// The generator is not a flat Sequential: the decoder may splice mirrored
// encoder activations in (unet_skips), so stages are held separately and the
// concat/split routing lives in forward/backward.
class Generator {
 public:
  Generator(const GeneratorConfig& cfg, Rng& rng);

  nn::Tensor forward(const nn::Tensor& x, bool train);
  nn::Tensor backward(const nn::Tensor& grad_out);

  std::vector<nn::Param> params();
  std::vector<nn::Param> buffers();
  std::vector<nn::Param> params_and_buffers();
  void set_rng(Rng* rng);

  const GeneratorConfig& config() const { return cfg_; }

  // Encoder stage outputs from the most recent forward, shallowest first;
  // exposed for structure checks and skip-wiring diagnostics.
  const std::vector<nn::Tensor>& encoder_activations() const { return enc_outs_; }

 private:
  GeneratorConfig cfg_;
  std::vector<nn::Sequential> enc_;
  std::vector<nn::Sequential> dec_;
  nn::Sequential out_;
  std::vector<nn::Tensor> enc_outs_;  // per-stage activations for skip routing
};

nn::Sequential build_discriminator(const DiscriminatorConfig& cfg, Rng& rng);

// Mean over the batch of −[smooth·ln(d_real) + ln(1 − d_fake)]; probabilities
// are clamped to [1e-7, 1−1e-7] before the logs. Tensors are (N) or (N, 1).
double d_loss(const nn::Tensor& d_real, const nn::Tensor& d_fake, double smooth);
// Analytic gradients w.r.t. (d_real, d_fake).
std::pair<nn::Tensor, nn::Tensor> d_loss_grads(const nn::Tensor& d_real,
                                               const nn::Tensor& d_fake,
                                               double smooth);

struct GLossParts {
  double total = 0.0;
  double adv = 0.0;  // mean −ln(d_fake)
  double sse = 0.0;  // mean pooled SSE, unscaled by lambda
};

// −ln(d_fake) + λ·SSE(pool(generated), pool(target)), averaged over the batch.
// generated/target are (N, 1, S, S); d_fake is the discriminator output.
GLossParts g_loss_parts(const nn::Tensor& d_fake, const nn::Tensor& generated,
                        const nn::Tensor& target, const GanHyper& hyper);
double g_loss(const nn::Tensor& d_fake, const nn::Tensor& generated,
              const nn::Tensor& target, const GanHyper& hyper);
// Gradients w.r.t. d_fake and w.r.t. the generated pixels (the content term;
// the adversarial term reaches the generator through the discriminator's
// input gradient, which the training loop wires up).
std::pair<nn::Tensor, nn::Tensor> g_loss_grads(const nn::Tensor& d_fake,
                                               const nn::Tensor& generated,
                                               const nn::Tensor& target,
                                               const GanHyper& hyper);

// Center-peaked Gaussian weight mask for the pre-GAN reconstruction baseline:
// w(i,j) = exp(−½·[(α·(i−R/2)/(R/2))² + (β·(j−C/2)/(C/2))²]), α=3.5, β=2.5,
// so the center weighs 1 and the corners exp(−9.25).
Image legacy_ffd_mask(int rows, int cols);
// (1/(R·C)) Σ w_ij (pred_ij − target_ij)².
double legacy_ffd_loss(const Image& pred, const Image& target);
Image legacy_ffd_grad(const Image& pred, const Image& target);

// Input conditioning: depth crops get the usual percentile stretch after the
// resize; gray targets are remapped from [0,1] to the generator's tanh range.
Image ffd_prepare_depth(const Image& depth, int size);
Image ffd_prepare_gray(const Image& gray, int size);

struct FfdPair {
  Image depth;  // raw depth crop, any size
  Image gray;   // matching gray crop, values in [0,1]
};

struct FfdStep {
  int step = 0;  // 1-based
  double d_loss = 0.0;
  double g_adv = 0.0;
  double g_sse = 0.0;
};

// Alternating updates, K discriminator steps then one generator step, Adam on
// both sides. When batch_size >= n the whole set is taken in order each step
// (no sampling), which keeps zero-LR histories exactly constant.
std::vector<FfdStep> train_ffd(Generator& gen, nn::Sequential& disc,
                               const std::vector<FfdPair>& pairs,
                               const GanHyper& hyper, Rng& rng);

void save_ffd_history(const std::string& path, const std::vector<FfdStep>& history);

// Eval-mode generator pass on a prepared depth crop; output in [−1,1].
Image ffd_infer(Generator& gen, const Image& depth_crop);

}  // namespace depthpose::models
