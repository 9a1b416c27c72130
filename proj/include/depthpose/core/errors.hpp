#pragma once

#include <stdexcept>
#include <string>

namespace depthpose {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// geometry
struct NoValidDepth : Error { using Error::Error; };
struct DegenerateFrame : Error { using Error::Error; };

// dataio
struct FormatError : Error { using Error::Error; };
struct MissingIntrinsics : Error { using Error::Error; };
struct InvalidSpec : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };

// models
struct ConfigError : Error { using Error::Error; };
struct ShapeMismatch : Error { using Error::Error; };
struct MissingAnnotation : Error { using Error::Error; };
struct MissingPairs : Error { using Error::Error; };

// metrics / pipeline
struct AllMasked : Error { using Error::Error; };
struct LengthMismatch : Error { using Error::Error; };
struct EvalError : Error { using Error::Error; };

}  // namespace depthpose
