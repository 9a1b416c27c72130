#include "depthpose/motion/motion.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/video/tracking.hpp>

#include "depthpose/core/errors.hpp"
#include "depthpose/dataio/png_io.hpp"

namespace depthpose::motion {

namespace {

cv::Mat to_8u(const Image& img, double lo, double scale) {
  cv::Mat m(img.height, img.width, CV_8UC1);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const double v = std::clamp((img.at(y, x) - lo) * scale, 0.0, 255.0);
      m.at<uint8_t>(y, x) = static_cast<uint8_t>(std::lround(v));
    }
  return m;
}

}  // namespace

FlowField farneback_flow(const Image& prev, const Image& curr,
                         const FarnebackParams& params) {
  if (prev.height != curr.height || prev.width != curr.width)
    throw ShapeMismatch("flow inputs differ in shape");
  if (prev.empty()) throw ShapeMismatch("flow on empty image");

  // joint 8-bit mapping keeps the two frames photometrically consistent
  double lo = prev.v[0], hi = prev.v[0];
  for (const Image* img : {&prev, &curr})
    for (double v : img->v) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  const double scale = hi - lo > 1e-12 ? 255.0 / (hi - lo) : 0.0;
  cv::Mat p8 = to_8u(prev, lo, scale);
  cv::Mat c8 = to_8u(curr, lo, scale);

  // The polynomial expansion is ill-conditioned at image corners and reports
  // spurious sub-pixel flow there even for identical frames; reflect-pad so
  // those pixels fall outside the region we keep.
  const int pad = std::min({16, prev.height - 1, prev.width - 1});
  cv::copyMakeBorder(p8, p8, pad, pad, pad, pad, cv::BORDER_REFLECT_101);
  cv::copyMakeBorder(c8, c8, pad, pad, pad, pad, cv::BORDER_REFLECT_101);

  cv::Mat flow;
  cv::calcOpticalFlowFarneback(p8, c8, flow, params.pyr_scale, params.levels,
                               params.winsize, params.iterations, params.poly_n,
                               params.poly_sigma, 0);

  FlowField out{Image(prev.height, prev.width, 0.0),
                Image(prev.height, prev.width, 0.0)};
  for (int y = 0; y < prev.height; ++y)
    for (int x = 0; x < prev.width; ++x) {
      const cv::Point2f f = flow.at<cv::Point2f>(y + pad, x + pad);
      out.dx.at(y, x) = static_cast<double>(f.x);
      out.dy.at(y, x) = static_cast<double>(f.y);
    }
  return out;
}

MotionImage flow_to_motion_image(const FlowField& flow, double clip) {
  MotionImage out{flow.dx, flow.dy};
  for (Image* ch : {&out.dx, &out.dy})
    for (double& v : ch->v) v = std::clamp(v / clip, -1.0, 1.0);
  return out;
}

MotionImage zero_motion(int height, int width) {
  return {Image(height, width, 0.0), Image(height, width, 0.0)};
}

namespace {

constexpr double kDumpOffset = 32768.0;
constexpr double kDumpUnitsPerPx = 64.0;

Image encode_dump(const Image& ch) {
  Image out = ch;
  for (double& v : out.v)
    v = std::clamp(kDumpOffset + std::round(v * kDumpUnitsPerPx), 0.0, 65535.0);
  return out;
}

Image decode_dump(const Image& ch) {
  Image out = ch;
  for (double& v : out.v) v = (v - kDumpOffset) / kDumpUnitsPerPx;
  return out;
}

}  // namespace

void dump_flow(const std::string& stem, const FlowField& flow) {
  dataio::write_png16(stem + "_dx.png", encode_dump(flow.dx));
  dataio::write_png16(stem + "_dy.png", encode_dump(flow.dy));
}

FlowField load_flow_dump(const std::string& stem) {
  return {decode_dump(dataio::read_png16(stem + "_dx.png")),
          decode_dump(dataio::read_png16(stem + "_dy.png"))};
}

}  // namespace depthpose::motion
