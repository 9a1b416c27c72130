#pragma once

#include "depthpose/core/image.hpp"
#include "depthpose/core/rng.hpp"

namespace depthpose::dataio {

// Percentile contrast stretch (2nd/98th -> [0,1], clamped) followed by
// zero-mean unit-variance standardization. Constant images come out all-zero
// (variance floor 1e-8).
Image preprocess(const Image& img);

// Bilinear resize to (h, w) then preprocess; the standard network input prep.
Image resized_normalized(const Image& img, int h, int w);

struct AugmentParams {
  int dx = 0;            // pixels, positive moves content right
  int dy = 0;            // pixels, positive moves content down
  double zoom = 1.0;     // about the image center
  double jitter_sigma = 0.0;  // additive Gaussian, in value units
};

// Random parameters: translation up to +-10% of each side, zoom in [0.9, 1.1],
// jitter sigma = 0.02 of the image value range.
AugmentParams draw_augment_params(const Image& img, Rng& rng);

// zoom, then translate, then jitter; shape preserved.
Image augment(const Image& img, const AugmentParams& params, Rng& rng);
Image augment(const Image& img, Rng& rng);

}  // namespace depthpose::dataio
