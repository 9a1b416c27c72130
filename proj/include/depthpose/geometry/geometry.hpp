#pragma once

#include <array>
#include <cmath>

#include "depthpose/core/image.hpp"

namespace depthpose::geo {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double norm() const { return std::sqrt(dot(*this)); }
  Vec3 normalized() const {
    const double n = norm();
    return {x / n, y / n, z / n};
  }
};

struct Mat3 {
  // row-major
  std::array<std::array<double, 3>, 3> m{};

  static Mat3 identity();
  Mat3 operator*(const Mat3& o) const;
  Vec3 operator*(const Vec3& v) const;
  Mat3 transposed() const;
  double det() const;
  Vec3 col(int j) const { return {m[0][j], m[1][j], m[2][j]}; }
  void set_col(int j, const Vec3& v) {
    m[0][j] = v.x;
    m[1][j] = v.y;
    m[2][j] = v.z;
  }
};

struct CameraIntrinsics {
  double fx = 0.0;  // pixels, > 0
  double fy = 0.0;  // pixels, > 0
};

struct CropBox {
  double center_x = 0.0;  // pixels
  double center_y = 0.0;
  double width = 0.0;   // > 0
  double height = 0.0;  // > 0
};

// Euler angles in degrees, camera reference frame.
struct PoseAngles {
  double pitch = 0.0;
  double roll = 0.0;
  double yaw = 0.0;
};

// 3D points in mm.
struct SkeletonJoints {
  Vec3 left_shoulder;
  Vec3 right_shoulder;
  Vec3 spine_base;
};

struct ShoulderFrame {
  Mat3 rotation;    // proper rotation, det = +1
  bool reflected = false;  // true when the raw joint frame was left-handed
  Vec3 n1, n2, n3;  // raw unit vectors before any handedness correction
};

struct EulerResult {
  PoseAngles angles;
  bool gimbal_lock = false;  // |pitch| within 0.1 deg of 90; roll forced to 0
};

// Defaults for the dynamic crop (mm of real-world extent covered by the box).
inline constexpr double kHeadCropRx = 320.0;
inline constexpr double kHeadCropRy = 320.0;
inline constexpr double kShoulderCropRx = 850.0;
inline constexpr double kShoulderCropRy = 500.0;
inline constexpr int kDepthWindowRadius = 5;  // 11x11 averaging window

// Mean of valid (> 0) depth values in an 11x11 window centered at `center`,
// clipped to the frame. Throws NoValidDepth when the window has none.
double window_mean_depth(const DepthFrame& depth, PixelPoint center,
                         int radius = kDepthWindowRadius);

// Dynamic head box: width = fx*rx/D, height = fy*ry/D with D the window mean.
CropBox head_crop_box(PixelPoint center, const CameraIntrinsics& intr,
                      const DepthFrame& depth, double rx_mm = kHeadCropRx,
                      double ry_mm = kHeadCropRy);

// Shoulder box centered at (x_H, y_H - h_H/4); size from the same dynamic
// rule with shoulder extents, depth re-averaged at the shoulder center.
CropBox shoulder_crop_box(const CropBox& head_box, const CameraIntrinsics& intr,
                          const DepthFrame& depth, double rx_mm = kShoulderCropRx,
                          double ry_mm = kShoulderCropRy);

// Body frame from shoulder/spine joints. The returned matrix has the frame
// axes as columns; a left-handed raw frame gets its second axis reflected so
// the result is always a proper rotation (reflected flag records this).
ShoulderFrame shoulder_rotation(const SkeletonJoints& joints);

// Intrinsic Z-Y'-X'' decomposition (yaw about Z, then pitch, then roll).
EulerResult rotation_to_euler(const Mat3& rot);
Mat3 euler_to_rotation(const PoseAngles& angles);

// Extract the box from the image: the box is clamped to the bounds and the
// result zero-padded back to the nominal (rounded) size, center preserved.
Image crop_clamped(const Image& img, const CropBox& box);

}  // namespace depthpose::geo
