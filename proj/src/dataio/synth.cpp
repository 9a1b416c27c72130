#include "depthpose/dataio/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "depthpose/core/errors.hpp"
#include "depthpose/core/rng.hpp"

namespace depthpose::dataio {

namespace {

struct Ellipsoid {
  geo::Vec3 center;    // camera frame, mm
  geo::Mat3 rotation;  // local -> camera
  geo::Vec3 semi;      // semi-axes, mm
};

// Ray p = t * d (camera at origin, d_z = 1 so t is depth in mm). Returns the
// nearest positive hit or a negative value.
double intersect(const Ellipsoid& e, const geo::Vec3& d) {
  const geo::Mat3 rt = e.rotation.transposed();
  geo::Vec3 u = rt * d;
  geo::Vec3 w = rt * (geo::Vec3{0, 0, 0} - e.center);
  u = {u.x / e.semi.x, u.y / e.semi.y, u.z / e.semi.z};
  w = {w.x / e.semi.x, w.y / e.semi.y, w.z / e.semi.z};
  const double a = u.dot(u);
  const double b = 2.0 * u.dot(w);
  const double c = w.dot(w) - 1.0;
  const double disc = b * b - 4.0 * a * c;
  if (disc < 0.0) return -1.0;
  const double sq = std::sqrt(disc);
  const double t0 = (-b - sq) / (2.0 * a);
  if (t0 > 0.0) return t0;
  const double t1 = (-b + sq) / (2.0 * a);
  return t1 > 0.0 ? t1 : -1.0;
}

geo::Vec3 surface_normal(const Ellipsoid& e, const geo::Vec3& p) {
  const geo::Vec3 local = e.rotation.transposed() * (p - e.center);
  const geo::Vec3 grad_local{local.x / (e.semi.x * e.semi.x),
                             local.y / (e.semi.y * e.semi.y),
                             local.z / (e.semi.z * e.semi.z)};
  return (e.rotation * grad_local).normalized();
}

constexpr double kShoulderHalfSpan = 180.0;  // mm
constexpr double kSpineOffset = 260.0;       // mm along the frame's second axis

geo::SkeletonJoints make_joints(const geo::Vec3& ref, const geo::Mat3& rot) {
  geo::SkeletonJoints j;
  j.right_shoulder = ref + rot * geo::Vec3{kShoulderHalfSpan, 0.0, 0.0};
  j.left_shoulder = ref + rot * geo::Vec3{-kShoulderHalfSpan, 0.0, 0.0};
  j.spine_base = ref + rot * geo::Vec3{0.0, -kSpineOffset, 0.0};
  return j;
}

}  // namespace

FrameRecord render_synth_frame(const SynthConfig& cfg, const SynthScene& scene,
                               const std::string& subject_id,
                               const std::string& sequence_id, int frame_index) {
  const geo::Mat3 head_rot = geo::euler_to_rotation(scene.head_pose);
  const geo::Mat3 shoulder_rot = geo::euler_to_rotation(scene.shoulder_pose);
  const geo::Vec3 hc = scene.head_center_mm;

  const Ellipsoid head{hc, head_rot, {80.0, 100.0, 85.0}};
  const Ellipsoid nose{hc + head_rot * geo::Vec3{0.0, 8.0, -80.0}, head_rot,
                       {18.0, 24.0, 32.0}};
  const Ellipsoid torso{hc + shoulder_rot * geo::Vec3{0.0, 260.0, 40.0},
                        shoulder_rot, {230.0, 170.0, 110.0}};
  const Ellipsoid* parts[] = {&head, &nose, &torso};

  FrameRecord rec;
  rec.subject_id = subject_id;
  rec.sequence_id = sequence_id;
  rec.frame_index = frame_index;
  rec.intrinsics = {cfg.fx, cfg.fy};
  rec.depth.mm = Image(cfg.height, cfg.width, 0.0);
  GrayFrame gray{Image(cfg.height, cfg.width, 0.0)};

  const double cx = cfg.width / 2.0, cy = cfg.height / 2.0;
  for (int iy = 0; iy < cfg.height; ++iy) {
    for (int ix = 0; ix < cfg.width; ++ix) {
      const geo::Vec3 d{(ix + 0.5 - cx) / cfg.fx, (iy + 0.5 - cy) / cfg.fy, 1.0};
      double best_t = -1.0;
      const Ellipsoid* hit = nullptr;
      for (const Ellipsoid* e : parts) {
        const double t = intersect(*e, d);
        if (t > 0.0 && (best_t < 0.0 || t < best_t)) {
          best_t = t;
          hit = e;
        }
      }
      if (hit == nullptr) continue;
      const double depth_mm = std::round(best_t);  // d_z == 1
      rec.depth.mm.at(iy, ix) = std::clamp(depth_mm, 1.0, 65535.0);
      const geo::Vec3 p = d * best_t;
      const geo::Vec3 n = surface_normal(*hit, p);
      const double shade = std::max(0.0, -n.z);
      gray.intensity.at(iy, ix) = std::round(shade * 255.0) / 255.0;
    }
  }
  rec.gray = gray;

  rec.head_rotation = head_rot;
  rec.head_center_mm = hc;
  rec.head_pose = geo::rotation_to_euler(head_rot).angles;
  rec.head_center_2d = project_to_pixel(hc, rec.intrinsics, cfg.width, cfg.height);

  const geo::Vec3 joint_ref = hc + shoulder_rot * geo::Vec3{0.0, 230.0, 30.0};
  rec.joints = make_joints(joint_ref, shoulder_rot);
  rec.shoulder_pose =
      geo::rotation_to_euler(geo::shoulder_rotation(*rec.joints).rotation).angles;
  return rec;
}

std::vector<FrameRecord> synth_records(const SynthConfig& cfg) {
  if (cfg.n_subjects < 1) throw InvalidSpec("need at least one subject");
  std::vector<FrameRecord> out;
  Rng rng(cfg.seed);
  for (int s = 0; s < cfg.n_subjects; ++s) {
    Rng subject_rng = rng.fork(static_cast<uint64_t>(s));
    char subj[32], seq[32];
    std::snprintf(subj, sizeof(subj), "subject_%02d", s);
    std::snprintf(seq, sizeof(seq), "seq_00");

    const double ha = cfg.max_head_angle;
    const double sa = cfg.max_shoulder_angle;
    SynthScene scene;
    scene.head_pose = {subject_rng.uniform(-0.8 * ha, 0.8 * ha),
                       subject_rng.uniform(-0.8 * ha, 0.8 * ha),
                       subject_rng.uniform(-0.8 * ha, 0.8 * ha)};
    scene.shoulder_pose = {subject_rng.uniform(-0.8 * sa, 0.8 * sa),
                           subject_rng.uniform(-0.8 * sa, 0.8 * sa),
                           subject_rng.uniform(-0.8 * sa, 0.8 * sa)};
    scene.head_center_mm = {subject_rng.uniform(-30.0, 30.0),
                            subject_rng.uniform(-30.0, 30.0),
                            subject_rng.uniform(780.0, 920.0)};

    for (int fidx = 0; fidx < cfg.frames_per_subject; ++fidx) {
      if (fidx > 0) {
        auto walk = [&](double& v, double step, double lo, double hi) {
          v = std::clamp(v + subject_rng.uniform(-step, step), lo, hi);
        };
        walk(scene.head_pose.pitch, 4.0, -ha, ha);
        walk(scene.head_pose.roll, 4.0, -ha, ha);
        walk(scene.head_pose.yaw, 4.0, -ha, ha);
        walk(scene.shoulder_pose.pitch, 3.0, -sa, sa);
        walk(scene.shoulder_pose.roll, 3.0, -sa, sa);
        walk(scene.shoulder_pose.yaw, 3.0, -sa, sa);
        walk(scene.head_center_mm.x, 6.0, -40.0, 40.0);
        walk(scene.head_center_mm.y, 6.0, -40.0, 40.0);
        walk(scene.head_center_mm.z, 10.0, 760.0, 940.0);
      }
      out.push_back(render_synth_frame(cfg, scene, subj, seq, fidx));
    }
  }
  return out;
}

void synth_generate(const SynthConfig& cfg, const std::string& out_root) {
  const std::vector<FrameRecord> records = synth_records(cfg);
  write_intrinsics(out_root, {cfg.fx, cfg.fy});
  for (const FrameRecord& rec : records) write_record(out_root, rec);
}

}  // namespace depthpose::dataio
