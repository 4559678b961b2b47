#pragma once
// Procedural toy avatar scene: capsule rig, textured reference renders,
// keypoints, a held-out view and a demo gloss library.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "signsplat/image.hpp"
#include "signsplat/io.hpp"

namespace signsplat {

struct SyntheticConfig {
  std::uint64_t seed = 0;
  int poses = 6;
  int cameras = 4;
  int size = 128;
  int heldout_frames = 6;

  void validate() const;
};

/// Capsule torso and head, two arms each ending in a wrist-knuckle-finger
/// hand. Y up, the avatar faces +z.
SkinnedTemplate toy_rig();

/// Seeded poses within the toy rig's joint limits.
std::vector<PoseParams> toy_poses(const SkinnedTemplate& rig, int count, std::uint64_t seed);

/// Camera on a circle around the avatar looking at its centre.
Camera orbit_camera(double azimuth, double elevation, int size);

/// Per-vertex colour of the procedural texture (rest-pose based).
std::vector<Vec3> toy_vertex_colors(const SkinnedTemplate& rig);

/// Z-buffered triangle raster of the posed mesh with interpolated vertex
/// colours, averaged over supersample x supersample samples per pixel.
Image render_reference(const SkinnedTemplate& rig, const std::vector<Vec3>& colors, const PoseParams& pose,
                       const Camera& cam, const Vec3& background, int supersample = 3);

/// Projected world joints of `pose`, confidence 1.
KeypointFrame project_keypoints(const SkinnedTemplate& rig, const PoseParams& pose, const Camera& cam);

/// Writes the dataset (poses x cameras frames, frame = pose * cameras + camera),
/// heldout/ (frontal camera), keypoints.json, glosses/ and train.toml.
void make_synthetic(const std::filesystem::path& outdir, const SyntheticConfig& cfg);

/// Three short clips and dictionary.json for the stitcher.
void write_demo_glosses(const SkinnedTemplate& rig, const std::filesystem::path& dir);

}  // namespace signsplat
