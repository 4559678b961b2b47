#include "signsplat/body_model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_map>

#include "signsplat/rotation.hpp"

namespace signsplat {

const char* segment_name(Segment s) {
  switch (s) {
    case Segment::Body: return "body";
    case Segment::Head: return "head";
    case Segment::LeftHand: return "left_hand";
    case Segment::RightHand: return "right_hand";
  }
  return "body";
}

Segment segment_from_name(const std::string& name) {
  if (name == "body") return Segment::Body;
  if (name == "head") return Segment::Head;
  if (name == "left_hand") return Segment::LeftHand;
  if (name == "right_hand") return Segment::RightHand;
  throw InputError("unknown segment label '" + name + "'");
}

void SkinnedTemplate::validate() const {
  const std::size_t nv = rest_vertices.size();
  const std::size_t nj = joints.size();
  if (nv == 0) throw InputError("rig has no vertices");
  if (nj == 0) throw InputError("rig has no joints");
  if (parents.size() != nj) throw InputError("rig: parents size does not match joints");
  if (joint_names.size() != nj) throw InputError("rig: joint_names size does not match joints");
  if (joint_limits.size() != nj) throw InputError("rig: joint_limits size does not match joints");
  if (parents[0] != -1) throw InputError("rig: joint 0 must be the root (parent -1)");
  for (std::size_t j = 1; j < nj; ++j) {
    if (parents[j] < 0 || static_cast<std::size_t>(parents[j]) >= j) {
      throw InputError("rig: parent of joint " + std::to_string(j) +
                       " must precede it (tree in topological order)");
    }
  }
  if (skin_weights.size() != nv) throw InputError("rig: skin_weights size does not match vertices");
  if (segment.size() != nv) throw InputError("rig: segment size does not match vertices");
  if (original_vertex_count == 0 || original_vertex_count > nv) {
    throw InputError("rig: original_vertex_count out of range");
  }
  for (std::size_t v = 0; v < nv; ++v) {
    double sum = 0.0;
    for (const auto& inf : skin_weights[v]) {
      if (inf.joint < 0 || static_cast<std::size_t>(inf.joint) >= nj) {
        throw InputError("rig: vertex " + std::to_string(v) + " references joint out of range");
      }
      if (!(inf.weight >= 0.0)) {
        throw InputError("rig: vertex " + std::to_string(v) + " has a negative skin weight");
      }
      sum += inf.weight;
    }
    if (std::abs(sum - 1.0) > 1e-6) {
      throw InputError("rig: skin weights of vertex " + std::to_string(v) + " do not sum to 1");
    }
  }
  for (std::size_t f = 0; f < faces.size(); ++f) {
    for (int idx : faces[f]) {
      if (idx < 0 || static_cast<std::size_t>(idx) >= nv) {
        throw InputError("rig: face " + std::to_string(f) + " index out of range");
      }
    }
  }
  for (const auto& basis : {std::cref(shape_basis), std::cref(expression_basis)}) {
    for (const auto& row : basis.get()) {
      if (row.size() != nv) throw InputError("rig: blend-shape basis row size does not match vertices");
    }
  }
  for (std::size_t j = 0; j < nj; ++j) {
    for (const auto& ax : joint_limits[j]) {
      if (ax.locked && (ax.min != 0.0 || ax.max != 0.0)) {
        throw InputError("rig: locked axis of joint " + joint_names[j] + " must have min = max = 0");
      }
      if (ax.min > ax.max) throw InputError("rig: joint limit min > max for " + joint_names[j]);
    }
  }
}

int SkinnedTemplate::joint_index(const std::string& name) const {
  for (std::size_t j = 0; j < joint_names.size(); ++j) {
    if (joint_names[j] == name) return static_cast<int>(j);
  }
  return -1;
}

PoseParams PoseParams::zero(const SkinnedTemplate& tmpl) {
  PoseParams p;
  p.beta.assign(tmpl.shape_basis.size(), 0.0);
  p.psi.assign(tmpl.expression_basis.size(), 0.0);
  p.theta.assign(tmpl.joint_count(), Vec3::Zero());
  return p;
}

void SkinningAdjoint::reset(std::size_t joints, std::size_t vertices) {
  d_global_rot.assign(joints, Mat3::Zero());
  d_global_trans.assign(joints, Vec3::Zero());
  d_shaped.assign(vertices, Vec3::Zero());
}

namespace {

bool finite(const Vec3& v) { return v.allFinite(); }

}  // namespace

void check_pose(const SkinnedTemplate& tmpl, const PoseParams& pose) {
  if (pose.beta.size() != tmpl.shape_basis.size()) {
    throw InputError("pose: beta has " + std::to_string(pose.beta.size()) + " entries, rig expects " +
                     std::to_string(tmpl.shape_basis.size()));
  }
  if (pose.psi.size() != tmpl.expression_basis.size()) {
    throw InputError("pose: psi has " + std::to_string(pose.psi.size()) + " entries, rig expects " +
                     std::to_string(tmpl.expression_basis.size()));
  }
  if (pose.theta.size() != tmpl.joint_count()) {
    throw InputError("pose: theta has " + std::to_string(pose.theta.size()) + " joints, rig expects " +
                     std::to_string(tmpl.joint_count()));
  }
  for (const auto& t : pose.theta) {
    if (!finite(t)) throw InputError("pose: non-finite joint rotation");
  }
  for (double b : pose.beta) {
    if (!std::isfinite(b)) throw InputError("pose: non-finite beta");
  }
  for (double p : pose.psi) {
    if (!std::isfinite(p)) throw InputError("pose: non-finite psi");
  }
  if (!pose.global_rot.allFinite() || !finite(pose.global_trans)) {
    throw InputError("pose: non-finite global transform");
  }
  if (pose.global_rot.norm() < 1e-12) throw InputError("pose: zero global rotation quaternion");
}

SkinningState skin_forward(const SkinnedTemplate& tmpl, const PoseParams& pose) {
  check_pose(tmpl, pose);
  const std::size_t nv = tmpl.vertex_count();
  const std::size_t nj = tmpl.joint_count();
  SkinningState s;

  s.shaped = tmpl.rest_vertices;
  for (std::size_t k = 0; k < pose.beta.size(); ++k) {
    if (pose.beta[k] == 0.0) continue;
    for (std::size_t v = 0; v < nv; ++v) s.shaped[v] += pose.beta[k] * tmpl.shape_basis[k][v];
  }
  for (std::size_t k = 0; k < pose.psi.size(); ++k) {
    if (pose.psi[k] == 0.0) continue;
    for (std::size_t v = 0; v < nv; ++v) s.shaped[v] += pose.psi[k] * tmpl.expression_basis[k][v];
  }

  s.local_rot.resize(nj);
  s.global.resize(nj);
  s.skinning.resize(nj);
  for (std::size_t j = 0; j < nj; ++j) {
    s.local_rot[j] = euler_to_matrix(pose.theta[j]);
    const int p = tmpl.parents[j];
    if (p < 0) {
      s.global[j].rot = s.local_rot[j];
      s.global[j].trans = tmpl.joints[j];
    } else {
      const RigidTransform& gp = s.global[p];
      s.global[j].rot = gp.rot * s.local_rot[j];
      s.global[j].trans = gp.rot * (tmpl.joints[j] - tmpl.joints[p]) + gp.trans;
    }
    s.skinning[j].rot = s.global[j].rot;
    s.skinning[j].trans = s.global[j].trans - s.global[j].rot * tmpl.joints[j];
  }

  s.body_vertices.resize(nv);
  for (std::size_t v = 0; v < nv; ++v) {
    Vec3 acc = Vec3::Zero();
    for (const auto& inf : tmpl.skin_weights[v]) {
      const RigidTransform& a = s.skinning[inf.joint];
      acc += inf.weight * (a.rot * s.shaped[v] + a.trans);
    }
    s.body_vertices[v] = acc;
  }
  s.root_rot = quat_to_matrix(pose.global_rot / pose.global_rot.norm());
  s.root_trans = pose.global_trans;
  return s;
}

std::vector<Vec3> world_vertices(const SkinningState& state) {
  std::vector<Vec3> out(state.body_vertices.size());
  for (std::size_t v = 0; v < out.size(); ++v) {
    out[v] = state.root_rot * state.body_vertices[v] + state.root_trans;
  }
  return out;
}

std::vector<Vec3> world_joints(const SkinningState& state) {
  std::vector<Vec3> out(state.global.size());
  for (std::size_t j = 0; j < out.size(); ++j) {
    out[j] = state.root_rot * state.global[j].trans + state.root_trans;
  }
  return out;
}

PosedMesh skin(const SkinnedTemplate& tmpl, const PoseParams& pose) {
  const SkinningState state = skin_forward(tmpl, pose);
  PosedMesh mesh;
  mesh.vertices = world_vertices(state);
  mesh.faces = tmpl.faces;
  mesh.segment = tmpl.segment;
  compute_normals(mesh.vertices, mesh.faces, mesh.vertex_normals, mesh.face_normals);
  return mesh;
}

void skin_vertices_backward(const SkinnedTemplate& tmpl, const SkinningState& state,
                            std::span<const Vec3> d_world, SkinningAdjoint& adj) {
  const Mat3 rt = state.root_rot.transpose();
  for (std::size_t v = 0; v < d_world.size(); ++v) {
    if (d_world[v].isZero(0.0)) continue;
    const Vec3 d_body = rt * d_world[v];
    const Vec3& x = state.shaped[v];
    for (const auto& inf : tmpl.skin_weights[v]) {
      const Vec3 wd = inf.weight * d_body;
      const Mat3& r = state.skinning[inf.joint].rot;
      // skinning = global * [I | -J]: fold directly into the global adjoint.
      adj.d_global_rot[inf.joint] += wd * (x - tmpl.joints[inf.joint]).transpose();
      adj.d_global_trans[inf.joint] += wd;
      adj.d_shaped[v] += r.transpose() * wd;
    }
  }
}

void world_joints_backward(const SkinningState& state, std::span<const Vec3> d_world,
                           SkinningAdjoint& adj) {
  const Mat3 rt = state.root_rot.transpose();
  for (std::size_t j = 0; j < d_world.size(); ++j) adj.d_global_trans[j] += rt * d_world[j];
}

PoseGradient pose_backward(const SkinnedTemplate& tmpl, const PoseParams& pose,
                           const SkinningState& state, const SkinningAdjoint& adj) {
  const std::size_t nj = tmpl.joint_count();
  std::vector<Mat3> d_rot = adj.d_global_rot;
  std::vector<Vec3> d_trans = adj.d_global_trans;
  std::vector<Mat3> d_local(nj, Mat3::Zero());
  for (std::size_t j = nj; j-- > 0;) {
    const int p = tmpl.parents[j];
    if (p < 0) {
      d_local[j] = d_rot[j];
      continue;
    }
    const RigidTransform& gp = state.global[p];
    d_local[j] = gp.rot.transpose() * d_rot[j];
    d_rot[p] += d_rot[j] * state.local_rot[j].transpose() +
                d_trans[j] * (tmpl.joints[j] - tmpl.joints[p]).transpose();
    d_trans[p] += d_trans[j];
  }
  PoseGradient g;
  g.theta.assign(nj, Vec3::Zero());
  for (std::size_t j = 0; j < nj; ++j) {
    const auto partials = euler_matrix_partials(pose.theta[j]);
    for (int k = 0; k < 3; ++k) g.theta[j][k] = d_local[j].cwiseProduct(partials[k]).sum();
  }
  g.psi.assign(pose.psi.size(), 0.0);
  for (std::size_t k = 0; k < pose.psi.size(); ++k) {
    double acc = 0.0;
    for (std::size_t v = 0; v < adj.d_shaped.size(); ++v) {
      acc += adj.d_shaped[v].dot(tmpl.expression_basis[k][v]);
    }
    g.psi[k] = acc;
  }
  return g;
}

PoseParams clamp_pose(const SkinnedTemplate& tmpl, const PoseParams& pose) {
  PoseParams out = pose;
  for (std::size_t j = 0; j < out.theta.size() && j < tmpl.joint_limits.size(); ++j) {
    for (int k = 0; k < 3; ++k) {
      const AxisLimit& lim = tmpl.joint_limits[j][k];
      out.theta[j][k] = lim.locked ? 0.0 : std::clamp(out.theta[j][k], lim.min, lim.max);
    }
  }
  return out;
}

bool satisfies_limits(const SkinnedTemplate& tmpl, const PoseParams& pose) {
  for (std::size_t j = 0; j < pose.theta.size(); ++j) {
    for (int k = 0; k < 3; ++k) {
      const AxisLimit& lim = tmpl.joint_limits[j][k];
      const double a = pose.theta[j][k];
      if (lim.locked ? a != 0.0 : (a < lim.min || a > lim.max)) return false;
    }
  }
  return true;
}

std::vector<double> hand_pose_vector(const SkinnedTemplate& tmpl, const PoseParams& pose, int wrist) {
  const std::size_t nj = tmpl.joint_count();
  if (wrist < 0 || static_cast<std::size_t>(wrist) >= nj) throw InputError("hand_pose_vector: wrist out of range");
  if (pose.theta.size() != nj) throw InputError("hand_pose_vector: pose joint count mismatch");
  std::vector<bool> below(nj, false);
  std::vector<double> out;
  for (std::size_t j = wrist + 1; j < nj; ++j) {
    const int p = tmpl.parents[j];
    below[j] = p == wrist || (p > wrist && below[p]);
    if (!below[j]) continue;
    for (int k = 0; k < 3; ++k) out.push_back(pose.theta[j][k]);
  }
  return out;
}

Vec3 face_cross(const std::vector<Vec3>& v, const Face& f) {
  return (v[f[1]] - v[f[0]]).cross(v[f[2]] - v[f[0]]);
}

void compute_normals(const std::vector<Vec3>& vertices, const std::vector<Face>& faces,
                     std::vector<Vec3>& vertex_normals, std::vector<Vec3>& face_normals) {
  std::vector<Vec3> acc(vertices.size(), Vec3::Zero());
  face_normals.resize(faces.size());
  for (std::size_t f = 0; f < faces.size(); ++f) {
    const Vec3 c = face_cross(vertices, faces[f]);
    const double n = c.norm();
    face_normals[f] = n > 0.0 ? Vec3(c / n) : Vec3::UnitZ();
    for (int idx : faces[f]) acc[idx] += c;
  }
  vertex_normals.resize(vertices.size());
  for (std::size_t v = 0; v < vertices.size(); ++v) {
    const double n = acc[v].norm();
    vertex_normals[v] = n > 0.0 ? Vec3(acc[v] / n) : Vec3::UnitZ();
  }
}

void normals_backward(const std::vector<Vec3>& vertices, const std::vector<Face>& faces,
                      std::span<const Vec3> d_vertex_normals,
                      std::span<const Vec3> d_face_normals, std::vector<Vec3>& d_vertices) {
  std::vector<Vec3> crosses(faces.size());
  for (std::size_t f = 0; f < faces.size(); ++f) crosses[f] = face_cross(vertices, faces[f]);

  std::vector<Vec3> d_acc;
  if (!d_vertex_normals.empty()) {
    std::vector<Vec3> acc(vertices.size(), Vec3::Zero());
    for (std::size_t f = 0; f < faces.size(); ++f) {
      for (int idx : faces[f]) acc[idx] += crosses[f];
    }
    d_acc.assign(vertices.size(), Vec3::Zero());
    for (std::size_t v = 0; v < vertices.size(); ++v) {
      if (acc[v].norm() > 0.0 && !d_vertex_normals[v].isZero(0.0)) {
        d_acc[v] = normalize_backward(acc[v], d_vertex_normals[v]);
      }
    }
  }

  for (std::size_t f = 0; f < faces.size(); ++f) {
    const Face& fc = faces[f];
    Vec3 dc = Vec3::Zero();
    if (!d_acc.empty()) dc += d_acc[fc[0]] + d_acc[fc[1]] + d_acc[fc[2]];
    if (!d_face_normals.empty() && crosses[f].norm() > 0.0 && !d_face_normals[f].isZero(0.0)) {
      dc += normalize_backward(crosses[f], d_face_normals[f]);
    }
    if (dc.isZero(0.0)) continue;
    const Vec3 e1 = vertices[fc[1]] - vertices[fc[0]];
    const Vec3 e2 = vertices[fc[2]] - vertices[fc[0]];
    const Vec3 de1 = e2.cross(dc);
    const Vec3 de2 = dc.cross(e1);
    d_vertices[fc[1]] += de1;
    d_vertices[fc[2]] += de2;
    d_vertices[fc[0]] -= de1 + de2;
  }
}

Vec3 clamp_displacement(const Vec3& d, double cap) {
  const double n = d.norm();
  if (n <= cap) return d;
  return d * (cap / n);
}

Vec3 clamp_displacement_backward(const Vec3& d, double cap, const Vec3& grad_out) {
  const double n = d.norm();
  if (n <= cap) return grad_out;
  const Vec3 u = d / n;
  return (cap / n) * (grad_out - u * u.dot(grad_out));
}

PosedMesh apply_displacements(const PosedMesh& mesh, const DisplacementField& field,
                              const SegmentValues& caps, std::size_t* clamped_count) {
  if (field.d.size() > mesh.vertices.size()) {
    throw InputError("displacement field is larger than the mesh");
  }
  PosedMesh out = mesh;
  std::size_t clamped = 0;
  for (std::size_t v = 0; v < field.d.size(); ++v) {
    const double cap = caps(mesh.segment[v]);
    if (field.d[v].norm() > cap) ++clamped;
    const Vec3 d = clamp_displacement(field.d[v], cap);
    out.vertices[v] = mesh.vertices[v] + d.cwiseProduct(mesh.vertex_normals[v]);
  }
  compute_normals(out.vertices, out.faces, out.vertex_normals, out.face_normals);
  if (clamped_count != nullptr) *clamped_count = clamped;
  return out;
}

Segment face_segment(const SkinnedTemplate& tmpl, const Face& f) {
  const Segment a = tmpl.segment[f[0]], b = tmpl.segment[f[1]], c = tmpl.segment[f[2]];
  if (b == c && a != b) return b;
  return a;
}

int face_dominant_joint(const SkinnedTemplate& tmpl, const Face& f) {
  std::map<int, double> sum;
  for (int idx : f) {
    for (const auto& inf : tmpl.skin_weights[idx]) sum[inf.joint] += inf.weight;
  }
  int best = 0;
  double best_w = -1.0;
  for (const auto& [joint, w] : sum) {
    if (w > best_w) {
      best = joint;
      best_w = w;
    }
  }
  return best;
}

namespace {

struct Parent {
  int vertex;
  double weight;
};

void append_blended_vertex(SkinnedTemplate& t, std::span<const Parent> parents, Segment label) {
  Vec3 pos = Vec3::Zero();
  std::map<int, double> weights;
  for (const Parent& p : parents) {
    pos += p.weight * t.rest_vertices[p.vertex];
    for (const auto& inf : t.skin_weights[p.vertex]) weights[inf.joint] += p.weight * inf.weight;
  }
  double total = 0.0;
  for (const auto& kv : weights) total += kv.second;
  std::vector<SkinInfluence> infl;
  for (const auto& [joint, w] : weights) {
    if (w > 0.0) infl.push_back({joint, w / total});
  }
  for (auto* basis : {&t.shape_basis, &t.expression_basis}) {
    for (auto& row : *basis) {
      Vec3 acc = Vec3::Zero();
      for (const Parent& p : parents) acc += p.weight * row[p.vertex];
      row.push_back(acc);
    }
  }
  t.rest_vertices.push_back(pos);
  t.skin_weights.push_back(std::move(infl));
  t.segment.push_back(label);
}

std::uint64_t edge_key(int a, int b) {
  const auto lo = static_cast<std::uint64_t>(std::min(a, b));
  const auto hi = static_cast<std::uint64_t>(std::max(a, b));
  return (lo << 32) | hi;
}

}  // namespace

SkinnedTemplate upsample_mesh(const SkinnedTemplate& tmpl, double face_area_thresh,
                              double edge_len_thresh) {
  if (!(face_area_thresh > 0.0) || !(edge_len_thresh > 0.0)) {
    throw InputError("upsample_mesh: thresholds must be positive");
  }
  SkinnedTemplate out = tmpl;
  out.faces.clear();

  std::unordered_map<std::uint64_t, int> midpoint;
  for (const Face& f : tmpl.faces) {
    for (int e = 0; e < 3; ++e) {
      const int a = f[e], b = f[(e + 1) % 3];
      const std::uint64_t key = edge_key(a, b);
      if (midpoint.contains(key)) continue;
      const double len = (tmpl.rest_vertices[a] - tmpl.rest_vertices[b]).norm();
      if (len > edge_len_thresh) {
        const int lo = std::min(a, b), hi = std::max(a, b);
        const Parent parents[2] = {{lo, 0.5}, {hi, 0.5}};
        const int id = static_cast<int>(out.rest_vertices.size());
        append_blended_vertex(out, parents, tmpl.segment[lo]);
        midpoint.emplace(key, id);
      } else {
        midpoint.emplace(key, -1);
      }
    }
  }

  for (const Face& f : tmpl.faces) {
    std::array<int, 3> mid{};
    int splits = 0;
    for (int e = 0; e < 3; ++e) {
      mid[e] = midpoint.at(edge_key(f[e], f[(e + 1) % 3]));
      if (mid[e] >= 0) ++splits;
    }
    const double area = 0.5 * face_cross(tmpl.rest_vertices, f).norm();
    const bool split_center = area >= 1e-12 && area > face_area_thresh;

    if (split_center) {
      const Parent parents[3] = {{f[0], 1.0 / 3.0}, {f[1], 1.0 / 3.0}, {f[2], 1.0 / 3.0}};
      const int center = static_cast<int>(out.rest_vertices.size());
      append_blended_vertex(out, parents, face_segment(tmpl, f));
      std::vector<int> ring;
      for (int e = 0; e < 3; ++e) {
        ring.push_back(f[e]);
        if (mid[e] >= 0) ring.push_back(mid[e]);
      }
      for (std::size_t i = 0; i < ring.size(); ++i) {
        out.faces.push_back({ring[i], ring[(i + 1) % ring.size()], center});
      }
      continue;
    }

    if (splits == 0) {
      out.faces.push_back(f);
    } else if (splits == 3) {
      const int a = f[0], b = f[1], c = f[2];
      const int ab = mid[0], bc = mid[1], ca = mid[2];
      out.faces.push_back({a, ab, ca});
      out.faces.push_back({ab, b, bc});
      out.faces.push_back({ca, bc, c});
      out.faces.push_back({ab, bc, ca});
    } else if (splits == 1) {
      int e = 0;
      while (mid[e] < 0) ++e;
      const int a = f[e], b = f[(e + 1) % 3], c = f[(e + 2) % 3];
      out.faces.push_back({a, mid[e], c});
      out.faces.push_back({mid[e], b, c});
    } else {
      // Rotate so the unsplit edge is (c, a).
      int e = 0;
      while (mid[e] >= 0) ++e;
      const int r = (e + 1) % 3;
      const int a = f[r], b = f[(r + 1) % 3], c = f[(r + 2) % 3];
      const int ab = mid[r], bc = mid[(r + 1) % 3];
      out.faces.push_back({ab, b, bc});
      out.faces.push_back({a, ab, bc});
      out.faces.push_back({a, bc, c});
    }
  }
  return out;
}

}  // namespace signsplat
