#pragma once
// Full avatar forward chain (skinning -> displacement -> anchors -> attribute
// prediction -> world Gaussians -> raster) and its reverse pass.

#include <cstdint>
#include <vector>

#include "signsplat/body_model.hpp"
#include "signsplat/predictor.hpp"
#include "signsplat/rasterizer.hpp"
#include "signsplat/splat_model.hpp"

namespace signsplat {

struct AvatarModel {
  SkinnedTemplate tmpl;
  SplatSet splats;
  DisplacementField displacement;
  AttributePredictor predictor;
  SplatLimits limits;
  SegmentValues disp_caps = default_displacement_caps();
  bool use_predictor = true;

  /// Rest-pose mesh (beta = 0) that feeds the predictor's canonical channels.
  PosedMesh canonical;
  std::vector<Segment> face_segment;
  std::vector<int> face_joint;

  /// Recomputes the derived tables above; call after changing `tmpl`.
  void refresh();

  static AvatarModel create(const SkinnedTemplate& tmpl, std::uint64_t seed,
                            const SplatLimits& limits = {}, double initial_opacity = 0.3);
};

/// Gradient buffers laid out per storage splat (inactive splats stay zero).
struct ModelGrad {
  std::vector<double> opacity;   // N
  std::vector<double> scale;     // 3N
  std::vector<double> rotation;  // 4N
  std::vector<double> sh;        // 48N
  std::vector<double> k_logits;  // 3N
  std::vector<double> l;         // N
  std::vector<double> disp;      // 3 * original vertices
  std::vector<double> predictor;
  /// Sum of |dL/dmean2d| in NDC units and observation count per splat.
  std::vector<double> screen_grad;
  std::vector<std::uint32_t> screen_count;

  void resize_for(const AvatarModel& model);
  void zero();
  /// Parameter gradients add; screen statistics add.
  void add(const ModelGrad& o);
  /// Scales parameter gradients only.
  void scale_params(double s);
};

struct FrameCache {
  PoseParams pose;
  Camera cam;
  Vec3 background = Vec3::Zero();
  int sh_degree = 0;
  SkinningState sk;
  std::vector<Vec3> body_vn, body_fn;
  std::vector<Vec3> disp_vertices, disp_vn, disp_fn;
  std::vector<std::uint32_t> active;
  std::vector<Vec3> xc, mu_body;
  AttributePredictor::Cache pred;
  std::vector<GaussianAttributes> eff;
  std::vector<Vec3> mu;
  std::vector<Mat3> frame;
  std::vector<Mat3> sigma;
  /// For each entry of the rasterized list, its position in `active`.
  std::vector<std::uint32_t> raster_to_active;
  RenderState render;
  bool valid = false;
};

/// World-space Gaussians of the active splats for one pose (storage order).
std::vector<WorldGaussian> world_gaussians(const AvatarModel& model, const PoseParams& pose);

Image render_frame(const AvatarModel& model, const PoseParams& pose, const Camera& cam,
                   const Vec3& background, int sh_degree, FrameCache* cache = nullptr);

/// Adds dL/dparameters for d_image = dL/dimage into `grad`. When `pose_grad`
/// is non-null it receives the theta/psi gradient of this frame.
void backward_frame(const AvatarModel& model, const FrameCache& cache, const Image& d_image,
                    ModelGrad& grad, PoseGradient* pose_grad = nullptr);

}  // namespace signsplat
