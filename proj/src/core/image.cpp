#include "depthpose/core/image.hpp"

#include <algorithm>
#include <cmath>

namespace depthpose {

Image resize_bilinear(const Image& src, int out_h, int out_w) {
  if (src.height == out_h && src.width == out_w) return src;
  Image out(out_h, out_w);
  const double sy = static_cast<double>(src.height) / out_h;
  const double sx = static_cast<double>(src.width) / out_w;
  for (int y = 0; y < out_h; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, static_cast<double>(src.height - 1));
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, src.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      fx = std::clamp(fx, 0.0, static_cast<double>(src.width - 1));
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, src.width - 1);
      const double wx = fx - x0;
      const double top = src.at(y0, x0) * (1.0 - wx) + src.at(y0, x1) * wx;
      const double bot = src.at(y1, x0) * (1.0 - wx) + src.at(y1, x1) * wx;
      out.at(y, x) = top * (1.0 - wy) + bot * wy;
    }
  }
  return out;
}

Image shift_zero_pad(const Image& src, int dy, int dx) {
  Image out(src.height, src.width);
  for (int y = 0; y < src.height; ++y) {
    const int sy = y - dy;
    if (sy < 0 || sy >= src.height) continue;
    for (int x = 0; x < src.width; ++x) {
      const int sx = x - dx;
      if (sx < 0 || sx >= src.width) continue;
      out.at(y, x) = src.at(sy, sx);
    }
  }
  return out;
}

Image zoom_about_center(const Image& src, double factor) {
  if (factor == 1.0) return src;
  Image out(src.height, src.width);
  const double cy = 0.5 * (src.height - 1);
  const double cx = 0.5 * (src.width - 1);
  for (int y = 0; y < src.height; ++y) {
    const double fy = cy + (y - cy) / factor;
    for (int x = 0; x < src.width; ++x) {
      const double fx = cx + (x - cx) / factor;
      const int y0 = static_cast<int>(std::floor(fy));
      const int x0 = static_cast<int>(std::floor(fx));
      const double wy = fy - y0;
      const double wx = fx - x0;
      double acc = 0.0;
      for (int oy = 0; oy <= 1; ++oy) {
        for (int ox = 0; ox <= 1; ++ox) {
          const int yy = y0 + oy;
          const int xx = x0 + ox;
          if (yy < 0 || yy >= src.height || xx < 0 || xx >= src.width) continue;
          const double w = (oy ? wy : 1.0 - wy) * (ox ? wx : 1.0 - wx);
          acc += w * src.at(yy, xx);
        }
      }
      out.at(y, x) = acc;
    }
  }
  return out;
}

double mean_of(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

double variance_of(const std::vector<double>& xs) {
  const double m = mean_of(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

double percentile(const std::vector<double>& xs, double q) {
  std::vector<double> sorted(xs);
  std::sort(sorted.begin(), sorted.end());
  const double rank = q / 100.0 * static_cast<double>(sorted.size() - 1);
  const size_t lo = static_cast<size_t>(std::floor(rank));
  const size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = rank - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

}  // namespace depthpose
