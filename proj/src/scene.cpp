#include "signsplat/scene.hpp"

#include <algorithm>

#include "signsplat/rotation.hpp"

namespace signsplat {

void AvatarModel::refresh() {
  canonical.vertices = tmpl.rest_vertices;
  canonical.faces = tmpl.faces;
  canonical.segment = tmpl.segment;
  compute_normals(canonical.vertices, canonical.faces, canonical.vertex_normals,
                  canonical.face_normals);
  face_segment.resize(tmpl.faces.size());
  face_joint.resize(tmpl.faces.size());
  for (std::size_t f = 0; f < tmpl.faces.size(); ++f) {
    face_segment[f] = signsplat::face_segment(tmpl, tmpl.faces[f]);
    face_joint[f] = face_dominant_joint(tmpl, tmpl.faces[f]);
  }
  displacement.d.resize(tmpl.original_vertex_count, Vec3::Zero());
}

AvatarModel AvatarModel::create(const SkinnedTemplate& tmpl, std::uint64_t seed,
                                const SplatLimits& limits, double initial_opacity) {
  tmpl.validate();
  AvatarModel m;
  m.tmpl = tmpl;
  m.limits = limits;
  m.splats = init_splats_from_vertices(tmpl, limits, initial_opacity);
  m.predictor = AttributePredictor::initialized(seed);
  m.displacement.d.assign(tmpl.original_vertex_count, Vec3::Zero());
  m.refresh();
  return m;
}

void ModelGrad::resize_for(const AvatarModel& model) {
  const std::size_t n = model.splats.size();
  opacity.assign(n, 0.0);
  scale.assign(3 * n, 0.0);
  rotation.assign(4 * n, 0.0);
  sh.assign(kShValues * n, 0.0);
  k_logits.assign(3 * n, 0.0);
  l.assign(n, 0.0);
  disp.assign(3 * model.tmpl.original_vertex_count, 0.0);
  predictor.assign(AttributePredictor::param_count(), 0.0);
  screen_grad.assign(n, 0.0);
  screen_count.assign(n, 0);
}

void ModelGrad::zero() {
  for (auto* v : {&opacity, &scale, &rotation, &sh, &k_logits, &l, &disp, &predictor, &screen_grad}) {
    std::fill(v->begin(), v->end(), 0.0);
  }
  std::fill(screen_count.begin(), screen_count.end(), 0u);
}

namespace {

void add_into(std::vector<double>& dst, const std::vector<double>& src) {
  if (dst.size() != src.size()) throw InputError("gradient buffers differ in size");
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

void ModelGrad::add(const ModelGrad& o) {
  add_into(opacity, o.opacity);
  add_into(scale, o.scale);
  add_into(rotation, o.rotation);
  add_into(sh, o.sh);
  add_into(k_logits, o.k_logits);
  add_into(l, o.l);
  add_into(disp, o.disp);
  add_into(predictor, o.predictor);
  add_into(screen_grad, o.screen_grad);
  for (std::size_t i = 0; i < screen_count.size(); ++i) screen_count[i] += o.screen_count[i];
}

void ModelGrad::scale_params(double s) {
  for (auto* v : {&opacity, &scale, &rotation, &sh, &k_logits, &l, &disp, &predictor}) {
    for (double& x : *v) x *= s;
  }
}

namespace {

// Everything up to world-space mean and covariance.
void evaluate_geometry(const AvatarModel& m, const PoseParams& pose, FrameCache& fc) {
  check_pose(m.tmpl, pose);
  if (m.displacement.d.size() != m.tmpl.original_vertex_count) {
    throw InputError("displacement field size does not match the template's original vertices");
  }
  const auto& faces = m.tmpl.faces;
  fc.pose = pose;
  fc.sk = skin_forward(m.tmpl, pose);
  compute_normals(fc.sk.body_vertices, faces, fc.body_vn, fc.body_fn);
  fc.disp_vertices = fc.sk.body_vertices;
  for (std::size_t i = 0; i < m.tmpl.original_vertex_count; ++i) {
    const Vec3 cd = clamp_displacement(m.displacement.d[i], m.disp_caps(m.tmpl.segment[i]));
    fc.disp_vertices[i] += cd.cwiseProduct(fc.body_vn[i]);
  }
  compute_normals(fc.disp_vertices, faces, fc.disp_vn, fc.disp_fn);

  fc.active = m.splats.active_indices();
  const std::size_t n = fc.active.size();
  fc.xc.resize(n);
  fc.mu_body.resize(n);
  for (std::size_t a = 0; a < n; ++a) {
    const SplatAnchor& anchor = m.splats.anchors[fc.active[a]];
    if (anchor.face_id >= faces.size()) {
      throw InputError("splat " + std::to_string(fc.active[a]) + " references missing face " +
                       std::to_string(anchor.face_id));
    }
    const Face& f = faces[anchor.face_id];
    const Vec3 k = anchor.coefficients();
    fc.xc[a] = k[0] * m.canonical.vertices[f[0]] + k[1] * m.canonical.vertices[f[1]] +
               k[2] * m.canonical.vertices[f[2]] + anchor.l * m.canonical.face_normals[anchor.face_id];
    fc.mu_body[a] = k[0] * fc.disp_vertices[f[0]] + k[1] * fc.disp_vertices[f[1]] +
                    k[2] * fc.disp_vertices[f[2]] + anchor.l * fc.disp_fn[anchor.face_id];
  }

  fc.eff.resize(n);
  if (m.use_predictor) {
    m.predictor.forward(fc.xc, fc.mu_body, fc.pred);
    for (std::size_t a = 0; a < n; ++a) {
      fc.eff[a] = apply_residuals(m.splats.attrs[fc.active[a]], fc.pred, a);
    }
  } else {
    for (std::size_t a = 0; a < n; ++a) fc.eff[a] = m.splats.attrs[fc.active[a]];
  }

  const Mat3& rg = fc.sk.root_rot;
  const Vec3& tg = fc.sk.root_trans;
  fc.mu.resize(n);
  fc.frame.resize(n);
  fc.sigma.resize(n);
  for (std::size_t a = 0; a < n; ++a) {
    const std::uint32_t face = m.splats.anchors[fc.active[a]].face_id;
    fc.mu[a] = rg * fc.mu_body[a] + tg;
    fc.frame[a] = rg * fc.sk.global[m.face_joint[face]].rot;
    fc.sigma[a] = build_covariance(fc.eff[a], m.face_segment[face], m.limits, fc.frame[a]);
  }
}

Vec3 view_direction(const Vec3& mu, const Camera& cam) {
  const Vec3 d = mu - cam.center();
  const double n = d.norm();
  return n > 0.0 ? Vec3(d / n) : Vec3(0.0, 0.0, 1.0);
}

}  // namespace

std::vector<WorldGaussian> world_gaussians(const AvatarModel& model, const PoseParams& pose) {
  FrameCache fc;
  evaluate_geometry(model, pose, fc);
  std::vector<WorldGaussian> out(fc.active.size());
  for (std::size_t a = 0; a < out.size(); ++a) {
    out[a].mu = fc.mu[a];
    out[a].sigma = fc.sigma[a];
    out[a].opacity = sigmoid(fc.eff[a].opacity_logit);
    out[a].sh = fc.eff[a].sh;
  }
  return out;
}

Image render_frame(const AvatarModel& model, const PoseParams& pose, const Camera& cam,
                   const Vec3& background, int sh_degree, FrameCache* cache) {
  FrameCache local;
  FrameCache& fc = cache ? *cache : local;
  fc.valid = false;
  cam.validate();
  evaluate_geometry(model, pose, fc);
  fc.cam = cam;
  fc.background = background;
  fc.sh_degree = sh_degree;

  const std::size_t n = fc.active.size();
  std::vector<Splat2D> list;
  list.reserve(n);
  fc.raster_to_active.clear();
  for (std::size_t a = 0; a < n; ++a) {
    const Vec3 color = eval_sh(fc.eff[a].sh, view_direction(fc.mu[a], cam), sh_degree);
    const double opacity = sigmoid(fc.eff[a].opacity_logit);
    auto s = project(fc.mu[a], fc.sigma[a], color, opacity, fc.active[a], cam);
    if (!s) continue;
    list.push_back(*s);
    fc.raster_to_active.push_back(static_cast<std::uint32_t>(a));
  }
  RenderOutput out = render(list, cam, background, &fc.render);
  fc.valid = true;
  return std::move(out.image);
}

void backward_frame(const AvatarModel& m, const FrameCache& fc, const Image& d_image,
                    ModelGrad& g, PoseGradient* pose_grad) {
  if (!fc.valid) throw InputError("backward_frame called without a matching forward pass");
  if (g.opacity.size() != m.splats.size()) throw InputError("gradient buffers not sized for model");
  const std::vector<Splat2DGrad> g2d = render_backward(fc.render, d_image);
  const std::size_t n = fc.active.size();
  const auto& faces = m.tmpl.faces;
  const Camera& cam = fc.cam;
  const Mat3& rg = fc.sk.root_rot;

  GaussianAttributes zero_attr;
  zero_attr.rotation.setZero();
  std::vector<GaussianAttributes> d_eff(n, zero_attr);
  std::vector<Vec3> d_mu(n, Vec3::Zero());
  SkinningAdjoint adj;
  adj.reset(m.tmpl.joint_count(), m.tmpl.vertex_count());

  const int degree = std::clamp(fc.sh_degree, 0, 3);
  const int coeffs = (degree + 1) * (degree + 1);
  for (std::size_t r = 0; r < g2d.size(); ++r) {
    const std::size_t a = fc.raster_to_active[r];
    const std::uint32_t idx = fc.active[a];
    const Splat2DGrad& sg = g2d[r];
    const GaussianAttributes& eff = fc.eff[a];
    const std::uint32_t face = m.splats.anchors[idx].face_id;

    // Normalized device units, so the densify threshold is resolution independent.
    g.screen_grad[idx] += Vec2(sg.d_mean.x() * 0.5 * cam.width, sg.d_mean.y() * 0.5 * cam.height).norm();
    g.screen_count[idx] += 1;

    Vec3 dmu;
    Mat3 dsigma;
    project_backward(fc.mu[a], fc.sigma[a], cam, sg.d_mean, sg.d_conic, dmu, dsigma);

    // Colour through SH, masked where the output was clamped.
    const Vec3 raw_dir = fc.mu[a] - cam.center();
    const Vec3 dir = view_direction(fc.mu[a], cam);
    double basis[kShCoeffs];
    std::array<double, 3> dbasis[kShCoeffs];
    sh_basis(dir, degree, basis, dbasis);
    Vec3 raw = Vec3::Constant(0.5);
    for (int i = 0; i < coeffs; ++i) {
      for (int ch = 0; ch < 3; ++ch) raw[ch] += basis[i] * eff.sh[3 * i + ch];
    }
    Vec3 dc = sg.d_color;
    for (int ch = 0; ch < 3; ++ch) {
      if (raw[ch] < 0.0 || raw[ch] > 1.0) dc[ch] = 0.0;
    }
    Vec3 d_dir = Vec3::Zero();
    for (int i = 0; i < coeffs; ++i) {
      double s = 0.0;
      for (int ch = 0; ch < 3; ++ch) {
        d_eff[a].sh[3 * i + ch] += basis[i] * dc[ch];
        s += eff.sh[3 * i + ch] * dc[ch];
      }
      for (int c = 0; c < 3; ++c) d_dir[c] += s * dbasis[i][c];
    }
    if (raw_dir.norm() > 0.0) dmu += normalize_backward(raw_dir, d_dir);

    const double op = sigmoid(eff.opacity_logit);
    d_eff[a].opacity_logit += sg.d_opacity * op * (1.0 - op);

    // Sigma = M M^T, M = F R(q) S.
    const Segment seg = m.face_segment[face];
    const double qn_norm = eff.rotation.norm();
    const Quat qn = eff.rotation / qn_norm;
    const Mat3 rq = quat_to_matrix(qn);
    const Mat3 rw = fc.frame[a] * rq;
    const Vec3 s = realized_scale(eff.log_scale, seg, m.limits);
    const Mat3 mm = rw * s.asDiagonal();
    const Mat3 d_m = (dsigma + dsigma.transpose()) * mm;
    const Mat3 d_rw = d_m * s.asDiagonal();
    const Mat3 rtdm = rw.transpose() * d_m;
    const double smax = m.limits.s_max(seg);
    for (int c = 0; c < 3; ++c) {
      const double sg_c = sigmoid(eff.log_scale[c]);
      d_eff[a].log_scale[c] += rtdm(c, c) * smax * sg_c * (1.0 - sg_c);
    }
    const Mat3 d_rq = fc.frame[a].transpose() * d_rw;
    d_eff[a].rotation += normalize_backward(eff.rotation, quat_to_matrix_backward(qn, d_rq));
    const Mat3 d_frame = d_rw * rq.transpose();
    adj.d_global_rot[m.face_joint[face]] += rg.transpose() * d_frame;

    d_mu[a] = dmu;
  }

  // Residual heads and predictor.
  std::vector<Vec3> d_xc(n, Vec3::Zero()), d_xp(n, Vec3::Zero());
  std::vector<GaussianAttributes> d_base(n, zero_attr);
  if (m.use_predictor) {
    std::vector<double> d_out(static_cast<std::size_t>(AttributePredictor::kOutputs) * n, 0.0);
    for (std::size_t a = 0; a < n; ++a) {
      apply_residuals_backward(m.splats.attrs[fc.active[a]], fc.pred, a, d_eff[a], d_out, d_base[a]);
    }
    m.predictor.backward(fc.pred, d_out, g.predictor, d_xc, d_xp);
  } else {
    d_base = d_eff;
  }
  for (std::size_t a = 0; a < n; ++a) {
    const std::size_t idx = fc.active[a];
    const GaussianAttributes& db = d_base[a];
    g.opacity[idx] += db.opacity_logit;
    for (int c = 0; c < 3; ++c) g.scale[3 * idx + c] += db.log_scale[c];
    for (int c = 0; c < 4; ++c) g.rotation[4 * idx + c] += db.rotation[c];
    for (int v = 0; v < kShValues; ++v) g.sh[kShValues * idx + v] += db.sh[v];
  }

  // Anchors on the displaced body-frame mesh and the canonical mesh.
  const std::size_t nv = m.tmpl.vertex_count();
  std::vector<Vec3> d_dv(nv, Vec3::Zero());
  std::vector<Vec3> d_dfn(faces.size(), Vec3::Zero());
  for (std::size_t a = 0; a < n; ++a) {
    const std::size_t idx = fc.active[a];
    const SplatAnchor& anchor = m.splats.anchors[idx];
    const Face& f = faces[anchor.face_id];
    const Vec3 k = anchor.coefficients();
    const Vec3 dmb = rg.transpose() * d_mu[a] + d_xp[a];
    for (int c = 0; c < 3; ++c) d_dv[f[c]] += k[c] * dmb;
    d_dfn[anchor.face_id] += anchor.l * dmb;
    if (anchor.learnable()) {
      const Vec3& dxc = d_xc[a];
      Vec3 dk;
      for (int c = 0; c < 3; ++c) {
        dk[c] = fc.disp_vertices[f[c]].dot(dmb) + m.canonical.vertices[f[c]].dot(dxc);
      }
      const auto dl = softmax3_backward(k, dk);
      for (int c = 0; c < 3; ++c) g.k_logits[3 * idx + c] += dl[c];
      g.l[idx] += fc.disp_fn[anchor.face_id].dot(dmb) +
                  m.canonical.face_normals[anchor.face_id].dot(dxc);
    }
  }
  normals_backward(fc.disp_vertices, faces, {}, d_dfn, d_dv);

  // Displacement v' = v + clamp(d) * n_v.
  std::vector<Vec3> d_bv = d_dv;
  std::vector<Vec3> d_bn(nv, Vec3::Zero());
  for (std::size_t i = 0; i < m.tmpl.original_vertex_count; ++i) {
    const Vec3& d = m.displacement.d[i];
    const double cap = m.disp_caps(m.tmpl.segment[i]);
    d_bn[i] = d_dv[i].cwiseProduct(clamp_displacement(d, cap));
    const Vec3 gd = clamp_displacement_backward(d, cap, d_dv[i].cwiseProduct(fc.body_vn[i]));
    for (int c = 0; c < 3; ++c) g.disp[3 * i + c] += gd[c];
  }
  normals_backward(fc.sk.body_vertices, faces, d_bn, {}, d_bv);

  if (pose_grad) {
    std::vector<Vec3> d_world(nv);
    for (std::size_t i = 0; i < nv; ++i) d_world[i] = rg * d_bv[i];
    skin_vertices_backward(m.tmpl, fc.sk, d_world, adj);
    *pose_grad = pose_backward(m.tmpl, fc.pose, fc.sk, adj);
  }
}

}  // namespace signsplat
