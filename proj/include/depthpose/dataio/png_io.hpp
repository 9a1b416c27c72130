#pragma once

#include <string>

#include "depthpose/core/image.hpp"

namespace depthpose::dataio {

// 16-bit single-channel PNG; values must already be integers in [0, 65535]
// (depth is stored as whole millimeters).
void write_png16(const std::string& path, const Image& img);
Image read_png16(const std::string& path);

// 8-bit single-channel PNG mapping [0,1] <-> [0,255].
void write_png8(const std::string& path, const Image& img);
Image read_png8(const std::string& path);

}  // namespace depthpose::dataio
