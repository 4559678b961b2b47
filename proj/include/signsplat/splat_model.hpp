#pragma once
// Mesh-anchored Gaussian splats: anchors, per-splat attributes, covariance
// construction, point evaluation and spherical-harmonics colour.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "signsplat/body_model.hpp"
#include "signsplat/common.hpp"

namespace signsplat {

inline constexpr int kShCoeffs = 16;
inline constexpr int kShValues = 3 * kShCoeffs;
inline constexpr double kShC0 = 0.28209479177387814;

/// Layout: sh[3 * coefficient + channel].
using ShCoeffs = std::array<double, kShValues>;

enum class SplatOrigin : std::uint8_t { OriginalVertex = 0, Densified = 1 };

/// Logit assigned to the non-selected corners of an original-vertex anchor;
/// its softmax weight underflows to exactly zero.
inline constexpr double kPinnedLogit = -1.0e4;

struct SplatAnchor {
  std::uint32_t face_id = 0;
  /// Softmax logits of the convex coefficients (k1, k2, k3).
  std::array<double, 3> k_logits{0.0, 0.0, 0.0};
  /// Offset along the face normal, meters.
  double l = 0.0;
  SplatOrigin origin = SplatOrigin::Densified;

  Vec3 coefficients() const;
  bool learnable() const { return origin == SplatOrigin::Densified; }
};

struct GaussianAttributes {
  /// Pre-activation scale; realized scale = s_max * sigmoid(log_scale).
  Vec3 log_scale = Vec3::Zero();
  Quat rotation = Quat(1.0, 0.0, 0.0, 0.0);
  double opacity_logit = 0.0;
  ShCoeffs sh{};
};

struct SplatLimits {
  /// Upper bound of realized scales per segment, meters.
  SegmentValues s_max{0.05, 0.02, 0.01};
  double l_max = 0.01;
};

/// Storage for all splats. Deactivated splats stay in storage (and in the
/// optimizer) until the next checkpoint compaction.
struct SplatSet {
  std::vector<SplatAnchor> anchors;
  std::vector<GaussianAttributes> attrs;
  std::vector<std::uint8_t> active;

  std::size_t size() const { return anchors.size(); }
  std::size_t active_count() const;
  std::vector<std::uint32_t> active_indices() const;
  void push_back(const SplatAnchor& a, const GaussianAttributes& g);
};

struct WorldGaussian {
  Vec3 mu = Vec3::Zero();
  Mat3 sigma = Mat3::Identity();
  double opacity = 1.0;
  ShCoeffs sh{};
  double depth = 0.0;
};

Vec3 softmax3(const std::array<double, 3>& logits);

/// Adjoint of softmax3.
std::array<double, 3> softmax3_backward(const Vec3& k, const Vec3& grad_k);

/// k1 x + k2 y + k3 z + l n_f on the face's posed vertices.
Vec3 anchor_position(const SplatAnchor& anchor, const PosedMesh& mesh);

/// Realized scales s_max(segment) * sigmoid(log_scale).
Vec3 realized_scale(const Vec3& log_scale, Segment segment, const SplatLimits& limits);

/// Sigma = R S S^T R^T with R = frame * R(normalized rotation).
Mat3 build_covariance(const GaussianAttributes& attrs, Segment segment, const SplatLimits& limits,
                      const Mat3& frame = Mat3::Identity());

/// exp(-0.5 (x - mu)^T Sigma^-1 (x - mu)).
double eval_gaussian(const WorldGaussian& g, const Vec3& x);

/// Real SH basis up to `degree` (0..3) at a unit direction; fills (degree+1)^2
/// entries of `basis` and, if non-null, their partials along x, y, z.
void sh_basis(const Vec3& dir, int degree, double* basis, std::array<double, 3>* partials);

/// clamp(0.5 + sum c Y, 0, 1) per channel.
Vec3 eval_sh(const ShCoeffs& sh, const Vec3& view_dir, int active_degree);

/// One splat per template vertex, anchored to the vertex's first incident face.
/// Scales follow local edge length, rotations align z with the rest normal.
SplatSet init_splats_from_vertices(const SkinnedTemplate& tmpl, const SplatLimits& limits,
                                   double initial_opacity = 0.3);

}  // namespace signsplat
