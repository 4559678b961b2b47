#pragma once
// Tile-based CPU splat rasterizer with an analytic backward pass.

#include <cstdint>
#include <optional>
#include <vector>

#include "signsplat/common.hpp"
#include "signsplat/image.hpp"
#include "signsplat/splat_model.hpp"

namespace signsplat {

inline constexpr int kTileSize = 16;
inline constexpr double kCovInflation = 0.3;
inline constexpr double kMaxAlpha = 0.99;
inline constexpr double kMinTransmittance = 1e-4;
/// Pixels further than 6 sigma (Mahalanobis) from a splat are skipped.
inline constexpr double kPowerCutoff = -18.0;
/// Splats whose mean leaves the image widened by this factor are culled.
inline constexpr double kFrustumMargin = 1.3;

/// Pinhole camera, OpenCV convention: x_cam = rot * x_world + trans, +z forward.
struct Camera {
  double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
  int width = 1, height = 1;
  Mat3 rot = Mat3::Identity();
  Vec3 trans = Vec3::Zero();
  double near = 0.01;

  void validate() const;
  Vec3 center() const { return -rot.transpose() * trans; }
  Vec3 to_camera(const Vec3& x) const { return rot * x + trans; }
  /// Pixel coordinates of a world point (no culling).
  Vec2 project_point(const Vec3& x) const;
};

struct Splat2D {
  std::uint32_t id = 0;
  Vec2 mean = Vec2::Zero();
  Mat2 cov = Mat2::Identity();
  /// Upper triangle (a, b, c) of the inverse 2D covariance.
  Vec3 conic = Vec3(1.0, 0.0, 1.0);
  double depth = 0.0;
  Vec3 color = Vec3::Zero();
  double opacity = 0.0;
};

/// Projects a world-space Gaussian. Returns nullopt when culled (behind the
/// near plane or mean outside the widened frustum). `color` and `opacity`
/// pass through unchanged.
std::optional<Splat2D> project(const Vec3& mu, const Mat3& sigma, const Vec3& color,
                               double opacity, std::uint32_t id, const Camera& cam);

/// Convenience overload: colour from the SH coefficients seen from the camera.
std::optional<Splat2D> project(const WorldGaussian& g, const Camera& cam, int sh_degree,
                               std::uint32_t id = 0);

/// Adjoint of project: maps dL/dmean2d and dL/dconic to dL/dmu, dL/dsigma.
void project_backward(const Vec3& mu, const Mat3& sigma, const Camera& cam, const Vec2& d_mean,
                      const Vec3& d_conic, Vec3& d_mu, Mat3& d_sigma);

/// Everything the backward pass needs from a forward render.
struct RenderState {
  int width = 0, height = 0;
  Vec3 background = Vec3::Zero();
  std::vector<Splat2D> splats;
  /// Per tile, indices into `splats` in front-to-back order.
  std::vector<std::vector<std::uint32_t>> tile_lists;
  std::vector<double> final_t;
  /// Number of entries of the pixel's tile list that were composited.
  std::vector<std::uint32_t> n_processed;
  bool valid = false;
};

struct RenderOutput {
  Image image;
  /// 1 - final transmittance per pixel.
  std::vector<double> alpha;
  /// Splats skipped for non-finite parameters.
  std::size_t skipped = 0;
};

/// Front-to-back compositing sorted by (depth, id). The result does not
/// depend on tile or thread count.
RenderOutput render(const std::vector<Splat2D>& splats, const Camera& cam, const Vec3& background,
                    RenderState* state = nullptr);

struct Splat2DGrad {
  Vec2 d_mean = Vec2::Zero();
  Vec3 d_conic = Vec3::Zero();
  Vec3 d_color = Vec3::Zero();
  double d_opacity = 0.0;
};

/// Gradients per entry of the splat list passed to render().
std::vector<Splat2DGrad> render_backward(const RenderState& state, const Image& d_image);

}  // namespace signsplat
