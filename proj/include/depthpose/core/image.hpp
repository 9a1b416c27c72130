#pragma once

#include <cstddef>
#include <vector>

namespace depthpose {

// Single-channel image, row-major doubles.
struct Image {
  int height = 0;
  int width = 0;
  std::vector<double> v;

  Image() = default;
  Image(int h, int w, double fill = 0.0)
      : height(h), width(w), v(static_cast<size_t>(h) * w, fill) {}

  double& at(int y, int x) { return v[static_cast<size_t>(y) * width + x]; }
  double at(int y, int x) const { return v[static_cast<size_t>(y) * width + x]; }

  bool empty() const { return v.empty(); }
  size_t size() const { return v.size(); }
  bool same_shape(const Image& o) const { return height == o.height && width == o.width; }
};

// Depth in millimeters; 0 marks an invalid (no-return) pixel.
struct DepthFrame {
  Image mm;
};

// Intensity normalized to [0, 1].
struct GrayFrame {
  Image intensity;
};

struct PixelPoint {
  double x = 0.0;
  double y = 0.0;
};

// Bilinear resize, half-pixel-center mapping (exact identity at equal sizes).
Image resize_bilinear(const Image& src, int out_h, int out_w);

// Integer translate; vacated pixels are zero. Positive dx moves content right.
Image shift_zero_pad(const Image& src, int dy, int dx);

// Bilinear zoom about the image center; factor > 1 magnifies. Samples outside
// the source are zero. factor == 1 is an exact identity.
Image zoom_about_center(const Image& src, double factor);

double mean_of(const std::vector<double>& xs);
double variance_of(const std::vector<double>& xs);  // population variance
inline double mean_of(const Image& img) { return mean_of(img.v); }
inline double variance_of(const Image& img) { return variance_of(img.v); }

// Linear-interpolation percentile (q in [0,100]).
double percentile(const std::vector<double>& xs, double q);
inline double percentile(const Image& img, double q) { return percentile(img.v, q); }

}  // namespace depthpose
