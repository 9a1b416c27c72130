#include "depthpose/dataio/png_io.hpp"

#include <cmath>

#include <opencv2/imgcodecs.hpp>

#include "depthpose/core/errors.hpp"

namespace depthpose::dataio {

void write_png16(const std::string& path, const Image& img) {
  if (img.empty()) throw IoError("refusing to write empty image: " + path);
  cv::Mat m(img.height, img.width, CV_16UC1);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const double v = img.at(y, x);
      if (v < 0.0 || v > 65535.0)
        throw IoError("16-bit value out of range in " + path);
      m.at<uint16_t>(y, x) = static_cast<uint16_t>(std::lround(v));
    }
  if (!cv::imwrite(path, m)) throw IoError("cannot write " + path);
}

Image read_png16(const std::string& path) {
  cv::Mat m = cv::imread(path, cv::IMREAD_UNCHANGED);
  if (m.empty()) throw FormatError("unreadable image: " + path);
  if (m.type() != CV_16UC1)
    throw FormatError("expected single-channel 16-bit png: " + path);
  Image img(m.rows, m.cols);
  for (int y = 0; y < m.rows; ++y)
    for (int x = 0; x < m.cols; ++x)
      img.at(y, x) = static_cast<double>(m.at<uint16_t>(y, x));
  return img;
}

void write_png8(const std::string& path, const Image& img) {
  if (img.empty()) throw IoError("refusing to write empty image: " + path);
  cv::Mat m(img.height, img.width, CV_8UC1);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const double v = img.at(y, x);
      if (v < 0.0 || v > 1.0) throw IoError("8-bit value out of [0,1] in " + path);
      m.at<uint8_t>(y, x) = static_cast<uint8_t>(std::lround(v * 255.0));
    }
  if (!cv::imwrite(path, m)) throw IoError("cannot write " + path);
}

Image read_png8(const std::string& path) {
  cv::Mat m = cv::imread(path, cv::IMREAD_UNCHANGED);
  if (m.empty()) throw FormatError("unreadable image: " + path);
  if (m.type() != CV_8UC1)
    throw FormatError("expected single-channel 8-bit png: " + path);
  Image img(m.rows, m.cols);
  for (int y = 0; y < m.rows; ++y)
    for (int x = 0; x < m.cols; ++x)
      img.at(y, x) = static_cast<double>(m.at<uint8_t>(y, x)) / 255.0;
  return img;
}

}  // namespace depthpose::dataio
