#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "depthpose/core/image.hpp"
#include "depthpose/geometry/geometry.hpp"

namespace depthpose::dataio {

enum class DatasetFormat { BiwiLike, PandoraLike, Synthetic };

struct FrameRecord {
  std::string subject_id;
  std::string sequence_id;
  int frame_index = 0;
  DepthFrame depth;
  std::optional<GrayFrame> gray;
  std::optional<PixelPoint> head_center_2d;
  std::optional<geo::Vec3> head_center_mm;
  std::optional<geo::Mat3> head_rotation;
  std::optional<geo::SkeletonJoints> joints;
  std::optional<geo::PoseAngles> head_pose;
  std::optional<geo::PoseAngles> shoulder_pose;
  geo::CameraIntrinsics intrinsics;
};

enum class SplitProtocol { FixedSubjects, LeaveOneOut, KFoldSubjects };

struct SplitSpec {
  SplitProtocol protocol = SplitProtocol::FixedSubjects;
  std::vector<std::string> test_subjects;  // FixedSubjects
  int k = 0;                               // KFoldSubjects
  int fold_index = 0;                      // LeaveOneOut / KFoldSubjects
  uint64_t seed = 0;                       // KFoldSubjects shuffle
};

// Projection with the principal point at the image center; pixel centers sit
// on half-integer coordinates.
PixelPoint project_to_pixel(const geo::Vec3& p_mm, const geo::CameraIntrinsics& intr,
                            int width, int height);

// Canonical on-disk layout:
//   root/intrinsics.txt                               "f_x f_y"
//   root/subject_XX/seq_YY/frame_NNNNN_depth.png      16-bit, millimeters
//   root/subject_XX/seq_YY/frame_NNNNN_gray.png       8-bit (optional)
//   root/subject_XX/seq_YY/frame_NNNNN_pose.txt       3x3 rotation rows + head center x y z (optional)
//   root/subject_XX/seq_YY/frame_NNNNN_joints.txt     left shoulder / right shoulder / spine base (optional)
// Derived at load: head_pose from the rotation, head_center_2d by projecting
// the head center, shoulder_pose from the joints.
std::vector<FrameRecord> load_dataset(const std::string& root, DatasetFormat format);

// Writes one record in the canonical layout (creates directories as needed).
void write_record(const std::string& root, const FrameRecord& rec);
void write_intrinsics(const std::string& root, const geo::CameraIntrinsics& intr);

std::pair<std::vector<FrameRecord>, std::vector<FrameRecord>> make_splits(
    const std::vector<FrameRecord>& records, const SplitSpec& spec);

SplitSpec load_split_spec(const std::string& path);
void save_split_spec(const std::string& path, const SplitSpec& spec);

}  // namespace depthpose::dataio
