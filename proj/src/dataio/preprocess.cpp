#include "depthpose/dataio/preprocess.hpp"

#include <algorithm>
#include <cmath>

#include "depthpose/core/errors.hpp"

namespace depthpose::dataio {

namespace {

// Nearest-rank percentile: the stretch bounds coincide with order statistics,
// so re-running the stretch on already-saturated data is a plain affine map
// and repeated normalization is stable.
double rank_percentile(const std::vector<double>& xs, double q) {
  std::vector<double> s = xs;
  std::sort(s.begin(), s.end());
  const auto r = static_cast<size_t>(
      std::lround(q / 100.0 * static_cast<double>(s.size() - 1)));
  return s[r];
}

}  // namespace

Image preprocess(const Image& img) {
  if (img.empty()) throw FormatError("preprocess on empty image");
  Image out = img;
  const double p2 = rank_percentile(img.v, 2.0);
  const double p98 = rank_percentile(img.v, 98.0);
  if (p98 - p2 > 1e-12) {
    const double inv = 1.0 / (p98 - p2);
    for (double& v : out.v) v = std::clamp((v - p2) * inv, 0.0, 1.0);
  }
  const double mu = mean_of(out);
  const double var = variance_of(out);
  if (var < 1e-8) {
    std::fill(out.v.begin(), out.v.end(), 0.0);
    return out;
  }
  const double inv_std = 1.0 / std::sqrt(var);
  for (double& v : out.v) v = (v - mu) * inv_std;
  return out;
}

Image resized_normalized(const Image& img, int h, int w) {
  return preprocess(resize_bilinear(img, h, w));
}

AugmentParams draw_augment_params(const Image& img, Rng& rng) {
  AugmentParams p;
  const int max_dx = img.width / 10;
  const int max_dy = img.height / 10;
  p.dx = rng.uniform_int(-max_dx, max_dx);
  p.dy = rng.uniform_int(-max_dy, max_dy);
  p.zoom = rng.uniform(0.9, 1.1);
  const auto [lo, hi] = std::minmax_element(img.v.begin(), img.v.end());
  p.jitter_sigma = 0.02 * (*hi - *lo);
  return p;
}

Image augment(const Image& img, const AugmentParams& params, Rng& rng) {
  Image out = zoom_about_center(img, params.zoom);
  out = shift_zero_pad(out, params.dy, params.dx);
  if (params.jitter_sigma > 0.0)
    for (double& v : out.v) v += rng.normal(0.0, params.jitter_sigma);
  return out;
}

Image augment(const Image& img, Rng& rng) {
  const AugmentParams p = draw_augment_params(img, rng);
  return augment(img, p, rng);
}

}  // namespace depthpose::dataio
