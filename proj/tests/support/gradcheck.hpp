#pragma once
// Small randomized avatar scenes and a central-difference gradient checker
// shared by the unit and acceptance suites.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "signsplat/scene.hpp"

namespace signsplat::testing {

/// 3x2 vertex grid on two joints, one shape and one expression basis.
SkinnedTemplate grid_rig();

struct GradScene {
  AvatarModel model;
  PoseParams pose;
  Camera cam;
  Vec3 background = Vec3::Zero();
  /// Loss weights: L = sum(weights * image).
  Image weights;
  int sh_degree = 0;
};

/// At most 10 splats (6 vertex splats plus up to 4 densified), 16x16 camera.
GradScene random_grad_scene(std::uint64_t seed);

double scene_loss(const GradScene& s);

struct GradCheck {
  std::string name;
  double analytic = 0.0;
  double numeric = 0.0;
  bool ok = false;
};

/// Compares every checked parameter group against central differences
/// (h = 1e-4). Tolerance: |a - n| <= max(abs_tol, rel_tol * max(|a|, |n|)).
std::vector<GradCheck> check_scene_gradients(GradScene& scene, double rel_tol = 1e-3,
                                             double abs_tol = 1e-6);

}  // namespace signsplat::testing
