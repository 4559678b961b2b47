#pragma once
// Pose refinement against 2D joint keypoints by reprojection error descent.

#include <vector>

#include "signsplat/body_model.hpp"
#include "signsplat/io.hpp"
#include "signsplat/rasterizer.hpp"

namespace signsplat {

/// Keypoints further than this fraction of the image size outside the frame
/// are masked.
inline constexpr double kKeypointFrameSlack = 0.2;

struct Fit2DConfig {
  double lr = 1e-3;
  int steps = 500;
  /// Jointly refine each view's extrinsics.
  bool extrinsics = false;

  void validate() const;
};

/// One view: keypoints (joint order of the rig) and its camera.
struct KeypointView {
  KeypointFrame keypoints;
  Camera camera;
};

/// Confidence-weighted mean squared pixel error of projected joints over all
/// unmasked keypoints of all views. `d_theta` (optional) receives dE/dtheta;
/// `d_rot`/`d_trans` (optional) receive the gradient with respect to a
/// left-multiplied rotation vector and the translation of each view.
double reprojection_error(const SkinnedTemplate& tmpl, const PoseParams& pose,
                          const std::vector<KeypointView>& views, std::vector<Vec3>* d_theta = nullptr,
                          std::vector<Vec3>* d_rot = nullptr, std::vector<Vec3>* d_trans = nullptr);

struct Fit2DResult {
  PoseParams pose;
  /// Refined cameras (unchanged unless extrinsics are optimized).
  std::vector<Camera> cameras;
  double initial_error = 0.0;
  double final_error = 0.0;
  /// Best error after each step, starting with the initial error.
  std::vector<double> best_error;
  int accepted_steps = 0;
};

/// Adam on theta with step rejection (lr halves on an increase) and clamping
/// after every step. Throws InputError when every keypoint is masked.
Fit2DResult reprojection_fit(const SkinnedTemplate& tmpl, const PoseParams& initial,
                             const std::vector<KeypointView>& views, const Fit2DConfig& cfg);

}  // namespace signsplat
