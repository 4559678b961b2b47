#include "signsplat/splat_model.hpp"

#include <algorithm>
#include <cmath>

#include "signsplat/rotation.hpp"

namespace signsplat {

std::size_t SplatSet::active_count() const {
  return static_cast<std::size_t>(std::count(active.begin(), active.end(), std::uint8_t{1}));
}

std::vector<std::uint32_t> SplatSet::active_indices() const {
  std::vector<std::uint32_t> out;
  out.reserve(active.size());
  for (std::size_t i = 0; i < active.size(); ++i) {
    if (active[i]) out.push_back(static_cast<std::uint32_t>(i));
  }
  return out;
}

void SplatSet::push_back(const SplatAnchor& a, const GaussianAttributes& g) {
  anchors.push_back(a);
  attrs.push_back(g);
  active.push_back(1);
}

Vec3 SplatAnchor::coefficients() const { return softmax3(k_logits); }

Vec3 softmax3(const std::array<double, 3>& z) {
  const double m = std::max({z[0], z[1], z[2]});
  const Vec3 e(std::exp(z[0] - m), std::exp(z[1] - m), std::exp(z[2] - m));
  return e / e.sum();
}

std::array<double, 3> softmax3_backward(const Vec3& k, const Vec3& g) {
  const double dot = k.dot(g);
  return {k[0] * (g[0] - dot), k[1] * (g[1] - dot), k[2] * (g[2] - dot)};
}

Vec3 anchor_position(const SplatAnchor& anchor, const PosedMesh& mesh) {
  if (anchor.face_id >= mesh.faces.size()) {
    throw InputError("anchor references face " + std::to_string(anchor.face_id) + " but mesh has " +
                     std::to_string(mesh.faces.size()));
  }
  const Face& f = mesh.faces[anchor.face_id];
  const Vec3 k = anchor.coefficients();
  return k[0] * mesh.vertices[f[0]] + k[1] * mesh.vertices[f[1]] + k[2] * mesh.vertices[f[2]] +
         anchor.l * mesh.face_normals[anchor.face_id];
}

Vec3 realized_scale(const Vec3& log_scale, Segment segment, const SplatLimits& limits) {
  const double smax = limits.s_max(segment);
  return Vec3(smax * sigmoid(log_scale.x()), smax * sigmoid(log_scale.y()),
              smax * sigmoid(log_scale.z()));
}

Mat3 build_covariance(const GaussianAttributes& attrs, Segment segment, const SplatLimits& limits,
                      const Mat3& frame) {
  const double n = attrs.rotation.norm();
  if (!(n > 0.0)) throw InputError("build_covariance: zero quaternion");
  const Mat3 r = frame * quat_to_matrix(attrs.rotation / n);
  const Vec3 s = realized_scale(attrs.log_scale, segment, limits);
  const Mat3 m = r * s.asDiagonal();
  // Upper triangle mirrored, so the result is exactly symmetric.
  Mat3 sigma;
  for (int i = 0; i < 3; ++i) {
    for (int j = i; j < 3; ++j) sigma(i, j) = sigma(j, i) = m.row(i).dot(m.row(j));
  }
  return sigma;
}

double eval_gaussian(const WorldGaussian& g, const Vec3& x) {
  Mat3 sigma = g.sigma;
  Eigen::LDLT<Mat3> ldlt(sigma);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.vectorD().minCoeff() <= 0.0) {
    sigma += 1e-9 * Mat3::Identity();
    ldlt.compute(sigma);
    if (ldlt.info() != Eigen::Success || ldlt.vectorD().minCoeff() <= 0.0) {
      throw InputError("eval_gaussian: covariance is singular");
    }
  }
  const Vec3 d = x - g.mu;
  return std::exp(-0.5 * d.dot(ldlt.solve(d)));
}

namespace {

constexpr double kC1 = 0.4886025119029199;
constexpr double kC2[5] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                           -1.0925484305920792, 0.5462742152960396};
constexpr double kC3[7] = {-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
                           0.3731763325901154,  -0.4570457994644658, 1.445305721320277,
                           -0.5900435899266435};

}  // namespace

void sh_basis(const Vec3& dir, int degree, double* y, std::array<double, 3>* dy) {
  const double x = dir.x(), yy = dir.y(), z = dir.z();
  y[0] = kShC0;
  if (dy) dy[0] = {0, 0, 0};
  if (degree < 1) return;
  y[1] = -kC1 * yy;
  y[2] = kC1 * z;
  y[3] = -kC1 * x;
  if (dy) {
    dy[1] = {0, -kC1, 0};
    dy[2] = {0, 0, kC1};
    dy[3] = {-kC1, 0, 0};
  }
  if (degree < 2) return;
  const double xx = x * x, y2 = yy * yy, zz = z * z;
  y[4] = kC2[0] * x * yy;
  y[5] = kC2[1] * yy * z;
  y[6] = kC2[2] * (2 * zz - xx - y2);
  y[7] = kC2[3] * x * z;
  y[8] = kC2[4] * (xx - y2);
  if (dy) {
    dy[4] = {kC2[0] * yy, kC2[0] * x, 0};
    dy[5] = {0, kC2[1] * z, kC2[1] * yy};
    dy[6] = {-2 * kC2[2] * x, -2 * kC2[2] * yy, 4 * kC2[2] * z};
    dy[7] = {kC2[3] * z, 0, kC2[3] * x};
    dy[8] = {2 * kC2[4] * x, -2 * kC2[4] * yy, 0};
  }
  if (degree < 3) return;
  y[9] = kC3[0] * yy * (3 * xx - y2);
  y[10] = kC3[1] * x * yy * z;
  y[11] = kC3[2] * yy * (4 * zz - xx - y2);
  y[12] = kC3[3] * z * (2 * zz - 3 * xx - 3 * y2);
  y[13] = kC3[4] * x * (4 * zz - xx - y2);
  y[14] = kC3[5] * z * (xx - y2);
  y[15] = kC3[6] * x * (xx - 3 * y2);
  if (dy) {
    dy[9] = {6 * kC3[0] * x * yy, kC3[0] * (3 * xx - 3 * y2), 0};
    dy[10] = {kC3[1] * yy * z, kC3[1] * x * z, kC3[1] * x * yy};
    dy[11] = {-2 * kC3[2] * x * yy, kC3[2] * (4 * zz - xx - 3 * y2), 8 * kC3[2] * yy * z};
    dy[12] = {-6 * kC3[3] * x * z, -6 * kC3[3] * yy * z, kC3[3] * (6 * zz - 3 * xx - 3 * y2)};
    dy[13] = {kC3[4] * (4 * zz - 3 * xx - y2), -2 * kC3[4] * x * yy, 8 * kC3[4] * x * z};
    dy[14] = {2 * kC3[5] * x * z, -2 * kC3[5] * yy * z, kC3[5] * (xx - y2)};
    dy[15] = {kC3[6] * (3 * xx - 3 * y2), -6 * kC3[6] * x * yy, 0};
  }
}

Vec3 eval_sh(const ShCoeffs& sh, const Vec3& view_dir, int active_degree) {
  const int degree = std::clamp(active_degree, 0, 3);
  double basis[kShCoeffs];
  sh_basis(view_dir, degree, basis, nullptr);
  const int count = (degree + 1) * (degree + 1);
  Vec3 c = Vec3::Constant(0.5);
  for (int i = 0; i < count; ++i) {
    for (int ch = 0; ch < 3; ++ch) c[ch] += basis[i] * sh[3 * i + ch];
  }
  return c.cwiseMax(0.0).cwiseMin(1.0);
}

SplatSet init_splats_from_vertices(const SkinnedTemplate& tmpl, const SplatLimits& limits,
                                   double initial_opacity) {
  const std::size_t nv = tmpl.vertex_count();
  std::vector<int> first_face(nv, -1);
  std::vector<double> edge_sum(nv, 0.0);
  std::vector<int> edge_count(nv, 0);
  for (std::size_t f = 0; f < tmpl.faces.size(); ++f) {
    const Face& fc = tmpl.faces[f];
    for (int c = 0; c < 3; ++c) {
      if (first_face[fc[c]] < 0) first_face[fc[c]] = static_cast<int>(f);
      const double len = (tmpl.rest_vertices[fc[c]] - tmpl.rest_vertices[fc[(c + 1) % 3]]).norm();
      edge_sum[fc[c]] += len;
      edge_sum[fc[(c + 1) % 3]] += len;
      edge_count[fc[c]] += 1;
      edge_count[fc[(c + 1) % 3]] += 1;
    }
  }
  std::vector<Vec3> vn, fn;
  compute_normals(tmpl.rest_vertices, tmpl.faces, vn, fn);

  SplatSet set;
  for (std::size_t v = 0; v < nv; ++v) {
    if (first_face[v] < 0) {
      throw InputError("vertex " + std::to_string(v) + " is not referenced by any face");
    }
    SplatAnchor a;
    a.face_id = static_cast<std::uint32_t>(first_face[v]);
    a.origin = SplatOrigin::OriginalVertex;
    const Face& fc = tmpl.faces[a.face_id];
    for (int c = 0; c < 3; ++c) a.k_logits[c] = fc[c] == static_cast<int>(v) ? 0.0 : kPinnedLogit;

    GaussianAttributes g;
    const double smax = limits.s_max(face_segment(tmpl, fc));
    const double mean_edge = edge_sum[v] / std::max(edge_count[v], 1);
    const double tangent = std::min(0.5 * mean_edge, 0.9 * smax);
    const double normal = std::min(0.25 * mean_edge, 0.9 * smax);
    const double lt = to_f32(logit(tangent / smax));
    const double ln = to_f32(logit(normal / smax));
    g.log_scale = Vec3(lt, lt, ln);

    const Vec3 n = vn[v];
    const Vec3 helper = std::abs(n.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
    const Vec3 t1 = helper.cross(n).normalized();
    const Vec3 t2 = n.cross(t1);
    Mat3 frame;
    frame.col(0) = t1;
    frame.col(1) = t2;
    frame.col(2) = n;
    Quat q = quat_from_matrix(frame);
    for (int i = 0; i < 4; ++i) q[i] = to_f32(q[i]);
    g.rotation = q;
    g.opacity_logit = to_f32(logit(initial_opacity));
    set.push_back(a, g);
  }
  return set;
}

}  // namespace signsplat
