#pragma once
// Skinned parametric body: blend shapes, joint limits, linear blend skinning
// with its adjoint, mesh upsampling and normal-offset displacements.

#include <array>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "signsplat/common.hpp"

namespace signsplat {

using Face = std::array<int, 3>;

struct AxisLimit {
  double min = -std::numbers::pi;
  double max = std::numbers::pi;
  bool locked = false;

  static AxisLimit range(double lo, double hi) { return {lo, hi, false}; }
  static AxisLimit lock() { return {0.0, 0.0, true}; }
};

using JointLimit = std::array<AxisLimit, 3>;

struct SkinInfluence {
  int joint = 0;
  double weight = 0.0;
};

struct SkinnedTemplate {
  std::vector<Vec3> rest_vertices;
  std::vector<Face> faces;
  std::vector<std::string> joint_names;
  std::vector<Vec3> joints;
  /// parents[0] == -1; every other parent index is smaller than the child's.
  std::vector<int> parents;
  std::vector<std::vector<SkinInfluence>> skin_weights;
  /// shape_basis[k][v] is the offset of vertex v per unit of beta[k].
  std::vector<std::vector<Vec3>> shape_basis;
  std::vector<std::vector<Vec3>> expression_basis;
  std::vector<Segment> segment;
  std::vector<JointLimit> joint_limits;
  /// Vertices [0, original_vertex_count) belong to the source rig; later ones
  /// were added by upsample_mesh and carry no displacement parameters.
  std::size_t original_vertex_count = 0;

  std::size_t vertex_count() const { return rest_vertices.size(); }
  std::size_t joint_count() const { return joints.size(); }

  /// Throws InputError naming the first violated invariant.
  void validate() const;

  int joint_index(const std::string& name) const;
};

struct PoseParams {
  std::vector<double> beta;
  std::vector<double> psi;
  /// Intrinsic XYZ Euler angles per joint, radians.
  std::vector<Vec3> theta;
  Quat global_rot = Quat(1.0, 0.0, 0.0, 0.0);
  Vec3 global_trans = Vec3::Zero();

  static PoseParams zero(const SkinnedTemplate& tmpl);
};

struct PosedMesh {
  std::vector<Vec3> vertices;
  std::vector<Vec3> vertex_normals;
  std::vector<Vec3> face_normals;
  std::vector<Segment> segment;
  std::vector<Face> faces;
};

struct DisplacementField {
  /// One offset per original template vertex, meters.
  std::vector<Vec3> d;
};

/// Rigid transform x -> rot * x + trans.
struct RigidTransform {
  Mat3 rot = Mat3::Identity();
  Vec3 trans = Vec3::Zero();
};

/// Forward kinematics and skinning intermediates. `global` transforms are in
/// the body frame, before the pose's global rotation/translation.
struct SkinningState {
  std::vector<Vec3> shaped;
  std::vector<Mat3> local_rot;
  std::vector<RigidTransform> global;
  std::vector<RigidTransform> skinning;
  std::vector<Vec3> body_vertices;
  Mat3 root_rot = Mat3::Identity();
  Vec3 root_trans = Vec3::Zero();
};

/// Adjoint of SkinningState with respect to a scalar loss.
struct SkinningAdjoint {
  std::vector<Mat3> d_global_rot;
  std::vector<Vec3> d_global_trans;
  std::vector<Vec3> d_shaped;

  void reset(std::size_t joints, std::size_t vertices);
};

struct PoseGradient {
  std::vector<Vec3> theta;
  std::vector<double> psi;
};

/// Rejects NaN/inf and mismatched coefficient counts.
void check_pose(const SkinnedTemplate& tmpl, const PoseParams& pose);

SkinningState skin_forward(const SkinnedTemplate& tmpl, const PoseParams& pose);

/// World-space posed vertices of a forward state.
std::vector<Vec3> world_vertices(const SkinningState& state);

/// World-space joint positions.
std::vector<Vec3> world_joints(const SkinningState& state);

/// Posed mesh with area-weighted vertex normals and unit face normals.
PosedMesh skin(const SkinnedTemplate& tmpl, const PoseParams& pose);

/// Accumulates the adjoint of world-space vertex positions into `adj`.
void skin_vertices_backward(const SkinnedTemplate& tmpl, const SkinningState& state,
                            std::span<const Vec3> d_world, SkinningAdjoint& adj);

/// Accumulates the adjoint of world-space joint positions.
void world_joints_backward(const SkinningState& state, std::span<const Vec3> d_world,
                           SkinningAdjoint& adj);

/// Maps joint-transform and shaped-vertex adjoints to theta and psi.
PoseGradient pose_backward(const SkinnedTemplate& tmpl, const PoseParams& pose,
                           const SkinningState& state, const SkinningAdjoint& adj);

/// Clips every Euler angle to its joint limit; locked axes become 0.
PoseParams clamp_pose(const SkinnedTemplate& tmpl, const PoseParams& pose);

bool satisfies_limits(const SkinnedTemplate& tmpl, const PoseParams& pose);

/// Euler angles of every joint below `wrist` (its finger joints), 3 values
/// per joint in joint order.
std::vector<double> hand_pose_vector(const SkinnedTemplate& tmpl, const PoseParams& pose, int wrist);

/// Unnormalized face normal (v1 - v0) x (v2 - v0); its length is twice the area.
Vec3 face_cross(const std::vector<Vec3>& v, const Face& f);

void compute_normals(const std::vector<Vec3>& vertices, const std::vector<Face>& faces,
                     std::vector<Vec3>& vertex_normals, std::vector<Vec3>& face_normals);

/// Adds dL/dvertices given adjoints of the unit vertex and/or face normals
/// (either span may be empty).
void normals_backward(const std::vector<Vec3>& vertices, const std::vector<Face>& faces,
                      std::span<const Vec3> d_vertex_normals,
                      std::span<const Vec3> d_face_normals, std::vector<Vec3>& d_vertices);

/// Displacement caps, meters.
inline SegmentValues default_displacement_caps() { return {0.02, 0.01, 0.003}; }

Vec3 clamp_displacement(const Vec3& d, double cap);

/// Jacobian-transpose product of clamp_displacement.
Vec3 clamp_displacement_backward(const Vec3& d, double cap, const Vec3& grad_out);

/// v' = v + clamp(d) (elementwise) n_v on original vertices; normals are
/// recomputed. `clamped_count` receives the number of capped vertices.
PosedMesh apply_displacements(const PosedMesh& mesh, const DisplacementField& field,
                              const SegmentValues& caps, std::size_t* clamped_count = nullptr);

/// Adds centroid vertices to faces larger than `face_area_thresh` and
/// midpoints to edges longer than `edge_len_thresh`. New vertices blend
/// skinning, basis rows and labels of their parents.
SkinnedTemplate upsample_mesh(const SkinnedTemplate& tmpl, double face_area_thresh,
                              double edge_len_thresh);

/// Majority label of a face's corners; ties go to the lowest corner.
Segment face_segment(const SkinnedTemplate& tmpl, const Face& f);

/// Joint with the largest summed skin weight over a face's corners.
int face_dominant_joint(const SkinnedTemplate& tmpl, const Face& f);

}  // namespace signsplat
