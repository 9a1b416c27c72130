#include "depthpose/geometry/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "depthpose/core/errors.hpp"

namespace depthpose::geo {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double deg2rad(double d) { return d * kPi / 180.0; }
constexpr double rad2deg(double r) { return r * 180.0 / kPi; }
}  // namespace

Mat3 Mat3::identity() {
  Mat3 r;
  r.m[0][0] = r.m[1][1] = r.m[2][2] = 1.0;
  return r;
}

Mat3 Mat3::operator*(const Mat3& o) const {
  Mat3 r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += m[i][k] * o.m[k][j];
      r.m[i][j] = s;
    }
  return r;
}

Vec3 Mat3::operator*(const Vec3& v) const {
  return {m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
          m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
          m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z};
}

Mat3 Mat3::transposed() const {
  Mat3 r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r.m[i][j] = m[j][i];
  return r;
}

double Mat3::det() const {
  return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
         m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
         m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
}

double window_mean_depth(const DepthFrame& depth, PixelPoint center, int radius) {
  const Image& img = depth.mm;
  if (img.empty()) throw NoValidDepth("depth frame is empty");
  const int cx = static_cast<int>(std::lround(center.x));
  const int cy = static_cast<int>(std::lround(center.y));
  const int y0 = std::max(0, cy - radius);
  const int y1 = std::min(img.height - 1, cy + radius);
  const int x0 = std::max(0, cx - radius);
  const int x1 = std::min(img.width - 1, cx + radius);
  double sum = 0.0;
  long count = 0;
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const double d = img.at(y, x);
      if (d > 0.0) {
        sum += d;
        ++count;
      }
    }
  if (count == 0) throw NoValidDepth("no valid depth in averaging window");
  return sum / static_cast<double>(count);
}

CropBox head_crop_box(PixelPoint center, const CameraIntrinsics& intr,
                      const DepthFrame& depth, double rx_mm, double ry_mm) {
  const double d = window_mean_depth(depth, center);
  CropBox box;
  box.center_x = center.x;
  box.center_y = center.y;
  box.width = intr.fx * rx_mm / d;
  box.height = intr.fy * ry_mm / d;
  return box;
}

CropBox shoulder_crop_box(const CropBox& head_box, const CameraIntrinsics& intr,
                          const DepthFrame& depth, double rx_mm, double ry_mm) {
  PixelPoint center{head_box.center_x, head_box.center_y - head_box.height / 4.0};
  const double d = window_mean_depth(depth, center);
  CropBox box;
  box.center_x = center.x;
  box.center_y = center.y;
  box.width = intr.fx * rx_mm / d;
  box.height = intr.fy * ry_mm / d;
  return box;
}

ShoulderFrame shoulder_rotation(const SkeletonJoints& joints) {
  const Vec3 across = joints.right_shoulder - joints.left_shoulder;
  const Vec3 up_raw = joints.right_shoulder - joints.spine_base;
  const double across_n = across.norm();
  const double up_n = up_raw.norm();
  if (across_n < 1e-9 || up_n < 1e-9)
    throw DegenerateFrame("coincident shoulder/spine joints");
  const Vec3 n1 = across * (1.0 / across_n);
  const Vec3 u = up_raw * (1.0 / up_n);
  const Vec3 c = n1.cross(u);
  const double cn = c.norm();
  if (cn < 1e-9) throw DegenerateFrame("shoulder axis parallel to spine axis");
  const Vec3 n3 = c * (1.0 / cn);
  const Vec3 n2 = n1.cross(n3);

  ShoulderFrame f;
  f.n1 = n1;
  f.n2 = n2;
  f.n3 = n3;
  f.rotation.set_col(0, n1);
  f.rotation.set_col(1, n2);
  f.rotation.set_col(2, n3);
  if (f.rotation.det() < 0.0) {
    f.reflected = true;
    f.rotation.set_col(1, n2 * -1.0);
  }
  return f;
}

EulerResult rotation_to_euler(const Mat3& rot) {
  const auto& r = rot.m;
  EulerResult out;
  const double sp = std::clamp(-r[2][0], -1.0, 1.0);
  const double pitch = std::asin(sp);
  out.angles.pitch = rad2deg(pitch);
  if (std::abs(std::abs(out.angles.pitch) - 90.0) <= 0.1) {
    out.gimbal_lock = true;
    out.angles.roll = 0.0;
    out.angles.yaw = rad2deg(std::atan2(-r[0][1], r[1][1]));
  } else {
    out.angles.roll = rad2deg(std::atan2(r[2][1], r[2][2]));
    out.angles.yaw = rad2deg(std::atan2(r[1][0], r[0][0]));
  }
  return out;
}

Mat3 euler_to_rotation(const PoseAngles& angles) {
  const double p = deg2rad(angles.pitch);
  const double r = deg2rad(angles.roll);
  const double y = deg2rad(angles.yaw);
  const double cp = std::cos(p), sp = std::sin(p);
  const double cr = std::cos(r), sr = std::sin(r);
  const double cy = std::cos(y), sy = std::sin(y);
  Mat3 rz = Mat3::identity();
  rz.m[0][0] = cy;
  rz.m[0][1] = -sy;
  rz.m[1][0] = sy;
  rz.m[1][1] = cy;
  Mat3 ry = Mat3::identity();
  ry.m[0][0] = cp;
  ry.m[0][2] = sp;
  ry.m[2][0] = -sp;
  ry.m[2][2] = cp;
  Mat3 rx = Mat3::identity();
  rx.m[1][1] = cr;
  rx.m[1][2] = -sr;
  rx.m[2][1] = sr;
  rx.m[2][2] = cr;
  return rz * ry * rx;
}

Image crop_clamped(const Image& img, const CropBox& box) {
  const int w = std::max(1, static_cast<int>(std::lround(box.width)));
  const int h = std::max(1, static_cast<int>(std::lround(box.height)));
  const int cx = static_cast<int>(std::lround(box.center_x));
  const int cy = static_cast<int>(std::lround(box.center_y));
  const int x0 = cx - w / 2;
  const int y0 = cy - h / 2;
  Image out;
  out.height = h;
  out.width = w;
  out.v.assign(static_cast<size_t>(h) * w, 0.0);
  for (int y = 0; y < h; ++y) {
    const int sy = y0 + y;
    if (sy < 0 || sy >= img.height) continue;
    for (int x = 0; x < w; ++x) {
      const int sx = x0 + x;
      if (sx < 0 || sx >= img.width) continue;
      out.at(y, x) = img.at(sy, sx);
    }
  }
  return out;
}

}  // namespace depthpose::geo
