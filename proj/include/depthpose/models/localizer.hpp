#pragma once

#include <utility>
#include <vector>

#include "depthpose/core/image.hpp"
#include "depthpose/core/rng.hpp"
#include "depthpose/dataio/dataset.hpp"
#include "depthpose/nn/layers.hpp"

namespace depthpose::models {

struct ConvSpec {
  int kernel = 3;
  int filters = 8;
  int stride = 1;
};

struct LocalizerConfig {
  int input_width = 160;
  int input_height = 132;
  // 2x2 max pooling follows each of the first four conv stages.
  std::vector<ConvSpec> conv_specs = {
      {5, 16, 1}, {5, 24, 1}, {4, 32, 1}, {3, 48, 1}, {3, 64, 1}};
  std::vector<int> fc_sizes = {256, 64, 2};
  double dropout = 0.5;
};

// Full frame (1 channel) -> 2 coordinates in (-1, 1), hyperbolic tangent
// activations throughout, dropout between the hidden FC layers.
nn::Sequential build_localizer(const LocalizerConfig& cfg, Rng& rng);

// (-1,1)^2 <-> pixel coordinates on a frame of the given size.
PixelPoint decode_center(double raw_x, double raw_y, int width, int height);
std::pair<double, double> encode_center(const PixelPoint& p, int width, int height);

struct LocalizerHyper {
  int epochs = 200;
  int batch_size = 8;
  double lr = 0.02;
  double momentum = 0.9;
  int halve_every = 15;  // epochs per learning-rate halving
};

// SGD on the mean squared error against encoded centers. Returns one loss per
// epoch, evaluated over the whole set with the model in inference mode.
std::vector<double> train_localizer(nn::Sequential& model,
                                    const std::vector<dataio::FrameRecord>& recs,
                                    const LocalizerConfig& cfg,
                                    const LocalizerHyper& hyper, Rng& rng);

// Inference on one depth frame: resize/normalize, forward, decode to pixels
// of the original frame.
PixelPoint localize(nn::Sequential& model, const LocalizerConfig& cfg,
                    const Image& depth);

}  // namespace depthpose::models
