#include "depthpose/dataio/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "depthpose/core/errors.hpp"
#include "depthpose/core/rng.hpp"
#include "depthpose/dataio/png_io.hpp"

namespace fs = std::filesystem;

namespace depthpose::dataio {

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<double> parse_doubles(const std::string& line, const std::string& file) {
  std::istringstream ss(line);
  std::vector<double> out;
  double v;
  while (ss >> v) out.push_back(v);
  if (!ss.eof() && ss.fail()) throw FormatError("bad number in " + file);
  return out;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw FormatError("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(f, line))
    if (!line.empty()) lines.push_back(line);
  return lines;
}

struct PoseFile {
  geo::Mat3 rotation;
  geo::Vec3 center_mm;
};

PoseFile read_pose_file(const std::string& path) {
  const auto lines = read_lines(path);
  if (lines.size() != 4) throw FormatError("expected 4 lines in " + path);
  PoseFile p;
  for (int r = 0; r < 3; ++r) {
    const auto vals = parse_doubles(lines[static_cast<size_t>(r)], path);
    if (vals.size() != 3) throw FormatError("expected 3 values per row in " + path);
    for (int c = 0; c < 3; ++c) p.rotation.m[r][c] = vals[static_cast<size_t>(c)];
  }
  const auto cv = parse_doubles(lines[3], path);
  if (cv.size() != 3) throw FormatError("expected 3 center values in " + path);
  p.center_mm = {cv[0], cv[1], cv[2]};
  return p;
}

geo::SkeletonJoints read_joints_file(const std::string& path) {
  const auto lines = read_lines(path);
  if (lines.size() != 3) throw FormatError("expected 3 lines in " + path);
  geo::Vec3 pts[3];
  for (int i = 0; i < 3; ++i) {
    const auto vals = parse_doubles(lines[static_cast<size_t>(i)], path);
    if (vals.size() != 3) throw FormatError("expected 3 values per line in " + path);
    pts[i] = {vals[0], vals[1], vals[2]};
  }
  return {pts[0], pts[1], pts[2]};
}

geo::CameraIntrinsics read_intrinsics(const std::string& root) {
  const std::string path = (fs::path(root) / "intrinsics.txt").string();
  if (!fs::exists(path)) throw MissingIntrinsics("no intrinsics.txt under " + root);
  const auto lines = read_lines(path);
  if (lines.empty()) throw FormatError("empty " + path);
  const auto vals = parse_doubles(lines[0], path);
  if (vals.size() != 2 || vals[0] <= 0.0 || vals[1] <= 0.0)
    throw FormatError("expected two positive focal lengths in " + path);
  return {vals[0], vals[1]};
}

}  // namespace

PixelPoint project_to_pixel(const geo::Vec3& p_mm, const geo::CameraIntrinsics& intr,
                            int width, int height) {
  return {width / 2.0 + intr.fx * p_mm.x / p_mm.z,
          height / 2.0 + intr.fy * p_mm.y / p_mm.z};
}

std::vector<FrameRecord> load_dataset(const std::string& root, DatasetFormat format) {
  (void)format;  // all formats share the canonical layout
  if (!fs::is_directory(root)) throw FormatError("dataset root missing: " + root);

  std::vector<fs::path> subjects;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) subjects.push_back(e.path());
  std::sort(subjects.begin(), subjects.end());

  std::vector<std::pair<fs::path, fs::path>> tree;  // (subject, sequence)
  for (const fs::path& subj : subjects) {
    std::vector<fs::path> seqs;
    for (const auto& e : fs::directory_iterator(subj))
      if (e.is_directory()) seqs.push_back(e.path());
    std::sort(seqs.begin(), seqs.end());
    for (const fs::path& seq : seqs) tree.emplace_back(subj, seq);
  }

  bool any_frames = false;
  for (const auto& [subj, seq] : tree) {
    for (const auto& e : fs::directory_iterator(seq)) {
      const std::string name = e.path().filename().string();
      if (name.size() > 10 && name.substr(name.size() - 10) == "_depth.png") {
        any_frames = true;
        break;
      }
    }
    if (any_frames) break;
  }
  if (!any_frames) throw FormatError("no frames found under " + root);

  const geo::CameraIntrinsics intr = read_intrinsics(root);

  std::vector<FrameRecord> records;
  for (const auto& [subj, seq] : tree) {
    std::vector<fs::path> depth_files;
    for (const auto& e : fs::directory_iterator(seq)) {
      const std::string name = e.path().filename().string();
      if (name.size() > 10 && name.substr(name.size() - 10) == "_depth.png")
        depth_files.push_back(e.path());
    }
    std::sort(depth_files.begin(), depth_files.end());
    for (const fs::path& df : depth_files) {
      const std::string name = df.filename().string();
      // frame_NNNNN_depth.png
      if (name.rfind("frame_", 0) != 0)
        throw FormatError("unexpected file name: " + df.string());
      const std::string idx_str = name.substr(6, name.size() - 6 - 10);
      int frame_index = 0;
      try {
        frame_index = std::stoi(idx_str);
      } catch (...) {
        throw FormatError("unparseable frame index in " + df.string());
      }

      FrameRecord rec;
      rec.subject_id = subj.filename().string();
      rec.sequence_id = seq.filename().string();
      rec.frame_index = frame_index;
      rec.intrinsics = intr;
      rec.depth.mm = read_png16(df.string());

      const std::string stem = (seq / ("frame_" + idx_str)).string();
      if (fs::exists(stem + "_gray.png"))
        rec.gray = GrayFrame{read_png8(stem + "_gray.png")};
      if (fs::exists(stem + "_pose.txt")) {
        const PoseFile pf = read_pose_file(stem + "_pose.txt");
        rec.head_rotation = pf.rotation;
        rec.head_center_mm = pf.center_mm;
        rec.head_pose = geo::rotation_to_euler(pf.rotation).angles;
        rec.head_center_2d = project_to_pixel(pf.center_mm, intr,
                                              rec.depth.mm.width,
                                              rec.depth.mm.height);
      }
      if (fs::exists(stem + "_joints.txt")) {
        rec.joints = read_joints_file(stem + "_joints.txt");
        rec.shoulder_pose =
            geo::rotation_to_euler(geo::shoulder_rotation(*rec.joints).rotation)
                .angles;
      }
      records.push_back(std::move(rec));
    }
  }
  return records;
}

void write_intrinsics(const std::string& root, const geo::CameraIntrinsics& intr) {
  fs::create_directories(root);
  std::ofstream f(fs::path(root) / "intrinsics.txt");
  if (!f) throw IoError("cannot write intrinsics under " + root);
  f << fmt_double(intr.fx) << " " << fmt_double(intr.fy) << "\n";
}

void write_record(const std::string& root, const FrameRecord& rec) {
  char idx[16];
  std::snprintf(idx, sizeof(idx), "%05d", rec.frame_index);
  const fs::path dir = fs::path(root) / rec.subject_id / rec.sequence_id;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string());
  const std::string stem = (dir / ("frame_" + std::string(idx))).string();

  write_png16(stem + "_depth.png", rec.depth.mm);
  if (rec.gray) write_png8(stem + "_gray.png", rec.gray->intensity);
  if (rec.head_rotation && rec.head_center_mm) {
    std::ofstream f(stem + "_pose.txt");
    if (!f) throw IoError("cannot write " + stem + "_pose.txt");
    for (int r = 0; r < 3; ++r)
      f << fmt_double(rec.head_rotation->m[r][0]) << " "
        << fmt_double(rec.head_rotation->m[r][1]) << " "
        << fmt_double(rec.head_rotation->m[r][2]) << "\n";
    f << fmt_double(rec.head_center_mm->x) << " " << fmt_double(rec.head_center_mm->y)
      << " " << fmt_double(rec.head_center_mm->z) << "\n";
  }
  if (rec.joints) {
    std::ofstream f(stem + "_joints.txt");
    if (!f) throw IoError("cannot write " + stem + "_joints.txt");
    for (const geo::Vec3* p :
         {&rec.joints->left_shoulder, &rec.joints->right_shoulder,
          &rec.joints->spine_base})
      f << fmt_double(p->x) << " " << fmt_double(p->y) << " " << fmt_double(p->z)
        << "\n";
  }
}

std::pair<std::vector<FrameRecord>, std::vector<FrameRecord>> make_splits(
    const std::vector<FrameRecord>& records, const SplitSpec& spec) {
  std::set<std::string> subject_set;
  for (const auto& r : records) subject_set.insert(r.subject_id);
  std::vector<std::string> subjects(subject_set.begin(), subject_set.end());

  std::set<std::string> test_ids;
  switch (spec.protocol) {
    case SplitProtocol::FixedSubjects: {
      for (const auto& s : spec.test_subjects) {
        if (subject_set.count(s) == 0)
          throw InvalidSpec("unknown test subject " + s);
        test_ids.insert(s);
      }
      if (test_ids.empty() || test_ids.size() == subject_set.size())
        throw InvalidSpec("fixed split must leave both sides non-empty");
      break;
    }
    case SplitProtocol::LeaveOneOut: {
      if (subjects.size() < 2) throw InvalidSpec("leave-one-out needs >= 2 subjects");
      if (spec.fold_index < 0 || spec.fold_index >= static_cast<int>(subjects.size()))
        throw InvalidSpec("fold index out of range");
      test_ids.insert(subjects[static_cast<size_t>(spec.fold_index)]);
      break;
    }
    case SplitProtocol::KFoldSubjects: {
      if (subjects.size() < 2) throw InvalidSpec("k-fold needs >= 2 subjects");
      if (spec.k < 2 || spec.k > static_cast<int>(subjects.size()))
        throw InvalidSpec("k out of range for subject count");
      if (spec.fold_index < 0 || spec.fold_index >= spec.k)
        throw InvalidSpec("fold index out of range");
      std::vector<std::string> shuffled = subjects;  // already sorted
      Rng rng(spec.seed);
      rng.shuffle(shuffled);
      for (size_t i = 0; i < shuffled.size(); ++i)
        if (static_cast<int>(i) % spec.k == spec.fold_index)
          test_ids.insert(shuffled[i]);
      break;
    }
  }

  std::pair<std::vector<FrameRecord>, std::vector<FrameRecord>> out;
  for (const auto& r : records) {
    if (test_ids.count(r.subject_id))
      out.second.push_back(r);
    else
      out.first.push_back(r);
  }
  return out;
}

SplitSpec load_split_spec(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open split spec " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("unparseable split spec: " + std::string(e.what()));
  }
  SplitSpec spec;
  const std::string proto = j.value("protocol", "");
  if (proto == "fixed_subjects")
    spec.protocol = SplitProtocol::FixedSubjects;
  else if (proto == "leave_one_out")
    spec.protocol = SplitProtocol::LeaveOneOut;
  else if (proto == "kfold_subjects")
    spec.protocol = SplitProtocol::KFoldSubjects;
  else
    throw InvalidSpec("unknown split protocol: " + proto);
  if (j.contains("test_subjects"))
    spec.test_subjects = j["test_subjects"].get<std::vector<std::string>>();
  spec.k = j.value("k", 0);
  spec.fold_index = j.value("fold_index", 0);
  spec.seed = j.value("seed", 0ull);
  return spec;
}

void save_split_spec(const std::string& path, const SplitSpec& spec) {
  nlohmann::json j;
  switch (spec.protocol) {
    case SplitProtocol::FixedSubjects: j["protocol"] = "fixed_subjects"; break;
    case SplitProtocol::LeaveOneOut: j["protocol"] = "leave_one_out"; break;
    case SplitProtocol::KFoldSubjects: j["protocol"] = "kfold_subjects"; break;
  }
  j["test_subjects"] = spec.test_subjects;
  j["k"] = spec.k;
  j["fold_index"] = spec.fold_index;
  j["seed"] = spec.seed;
  std::ofstream f(path);
  if (!f) throw IoError("cannot write split spec " + path);
  f << j.dump(2) << "\n";
}

}  // namespace depthpose::dataio
