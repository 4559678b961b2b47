#pragma once
// JSON readers and writers for rigs, joint limits, poses, cameras,
// keypoints and animations.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "signsplat/body_model.hpp"
#include "signsplat/rasterizer.hpp"

namespace signsplat {

namespace fs = std::filesystem;

std::string read_text_file(const fs::path& path);
void write_text_file(const fs::path& path, const std::string& text);

SkinnedTemplate load_rig(const fs::path& path);
void save_rig(const SkinnedTemplate& tmpl, const fs::path& path);
std::string rig_to_json(const SkinnedTemplate& tmpl);
SkinnedTemplate rig_from_json(const std::string& text, const std::string& origin = "rig");

/// Joint name -> per-axis [min, max] or "locked". Unknown names are rejected.
void apply_joint_limits_file(SkinnedTemplate& tmpl, const fs::path& path);

struct PoseSequence {
  double fps = 30.0;
  std::vector<PoseParams> frames;
};

/// {"fps": f, "frames": [{beta, psi, theta, global_rot, global_trans}]}
PoseSequence load_poses(const fs::path& path);
void save_poses(const PoseSequence& seq, const fs::path& path);

/// {"background": [r,g,b], "frames": [{fx, fy, cx, cy, width, height,
/// rotation: 3x3 rows, translation, near}]}
struct CameraSet {
  Vec3 background = Vec3::Zero();
  std::vector<Camera> cameras;
};
CameraSet load_cameras(const fs::path& path);
void save_cameras(const CameraSet& cams, const fs::path& path);

/// Per frame, per joint (x, y, confidence).
struct Keypoint {
  Vec2 xy = Vec2::Zero();
  double confidence = 0.0;
};
using KeypointFrame = std::vector<Keypoint>;
std::vector<KeypointFrame> load_keypoints(const fs::path& path);
void save_keypoints(const std::vector<KeypointFrame>& kps, const fs::path& path);

/// Writes the animation and throws on an empty sequence.
void export_animation(const PoseSequence& seq, const fs::path& path);

}  // namespace signsplat
