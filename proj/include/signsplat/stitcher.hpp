#pragma once
// Gloss lookup and eased SLERP transitions between consecutive glosses.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "signsplat/io.hpp"

namespace signsplat {

struct Gloss {
  std::string name;
  double fps = 30.0;
  std::vector<PoseParams> frames;
};

/// Directory of <gloss>.json animations plus dictionary.json (token -> file).
class GlossLibrary {
 public:
  /// Reads dictionary.json and checks that every mapped file exists.
  static GlossLibrary load(const std::filesystem::path& dir);

  bool contains(const std::string& token) const;
  /// Lowercase dictionary lookup.
  Gloss get(const std::string& token) const;

  std::filesystem::path dir;
  std::map<std::string, std::string> dictionary;
};

struct StitchConfig {
  /// Maximum joint rotation per transition frame, radians.
  double omega = 0.05;
  int min_frames = 2;

  void validate() const;
};

/// Smoothstep 3t^2 - 2t^3.
double ease(double t);

/// Constant-angular-velocity interpolation between unit quaternions, with
/// hemisphere alignment and a normalized-lerp fallback for nearly equal
/// inputs. Throws InputError on a zero quaternion.
Quat slerp(const Quat& q0, const Quat& q1, double s);

/// Largest per-joint geodesic angle between the two poses.
double max_joint_angle(const PoseParams& a, const PoseParams& b);

/// max(min_frames, ceil(max_joint_angle / omega)).
int transition_frames(const PoseParams& last, const PoseParams& first, const StitchConfig& cfg);

/// Pose at transition parameter t in [0, 1]: joints SLERPed at ease(t), psi
/// lerped at t, beta and global transform taken from `a`.
PoseParams transition_pose(const PoseParams& a, const PoseParams& b, double t);

struct StitchResult {
  PoseSequence sequence;
  std::vector<std::string> skipped_tokens;
  /// (first output frame, frame count) of each transition.
  std::vector<std::pair<std::size_t, std::size_t>> transitions;
};

/// Concatenates gloss clips with n-frame transitions sampled at
/// t = (i + 1) / (n + 1). Unknown tokens are reported and skipped; beta comes
/// from the first gloss and the global transform is the average over all
/// gloss frames, held for the whole sequence.
StitchResult stitch(const std::vector<std::string>& tokens, const GlossLibrary& lib, const StitchConfig& cfg);

}  // namespace signsplat
