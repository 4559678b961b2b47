#include "signsplat/regularizer.hpp"

#include <algorithm>
#include <cmath>

namespace signsplat {

void RegWeights::validate() const {
  for (double v : {scale, rotation, color, opacity, disp}) {
    if (!(v >= 0.0)) throw InputError("regularizer weights must be non-negative");
  }
  for (std::size_t i = 0; i < sh_schedule.size(); ++i) {
    const double f = sh_schedule[i];
    if (!(f >= 0.0 && f <= 1.0) || (i > 0 && !(f > sh_schedule[i - 1]))) {
      throw InputError("sh_schedule fractions must be strictly increasing in [0, 1]");
    }
  }
  if (!(radius.body > 0.0) || !(radius.head > 0.0) || !(radius.hands > 0.0)) {
    throw InputError("neighbourhood radii must be positive");
  }
}

double variance_loss(const std::vector<Eigen::VectorXd>& values, std::vector<Eigen::VectorXd>* grad) {
  if (values.empty()) return 0.0;
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(values[0].size());
  for (const auto& v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double loss = 0.0;
  if (grad) grad->resize(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const Eigen::VectorXd d = values[i] - mean;
    loss += d.squaredNorm();
    // The mean's own dependence cancels because deviations sum to zero.
    if (grad) (*grad)[i] = 2.0 * d;
  }
  return loss;
}

double variance_loss(const std::vector<double>& values) {
  std::vector<Eigen::VectorXd> v;
  for (double x : values) v.push_back(Eigen::VectorXd::Constant(1, x));
  return variance_loss(v);
}

namespace {

Vec3 canonical_position(const AvatarModel& m, std::uint32_t idx) {
  const SplatAnchor& a = m.splats.anchors[idx];
  const Face& f = m.tmpl.faces[a.face_id];
  const Vec3 k = a.coefficients();
  return k[0] * m.canonical.vertices[f[0]] + k[1] * m.canonical.vertices[f[1]] +
         k[2] * m.canonical.vertices[f[2]] + a.l * m.canonical.face_normals[a.face_id];
}

}  // namespace

std::vector<Neighborhood> build_neighborhoods(const AvatarModel& m, const RegWeights& w) {
  const auto& faces = m.tmpl.faces;
  std::vector<std::vector<int>> vertex_faces(m.tmpl.vertex_count());
  for (std::size_t f = 0; f < faces.size(); ++f) {
    for (int v : faces[f]) vertex_faces[v].push_back(static_cast<int>(f));
  }
  std::vector<std::vector<std::uint32_t>> face_splats(faces.size());
  const auto active = m.splats.active_indices();
  std::vector<Vec3> xc(m.splats.size());
  for (std::uint32_t idx : active) {
    face_splats[m.splats.anchors[idx].face_id].push_back(idx);
    xc[idx] = canonical_position(m, idx);
  }

  std::vector<Neighborhood> out;
  out.reserve(active.size());
  std::vector<int> ring;
  for (std::uint32_t c : active) {
    const std::uint32_t face = m.splats.anchors[c].face_id;
    Neighborhood n;
    n.center = c;
    n.segment = m.face_segment[face];
    const double r2 = w.radius(n.segment) * w.radius(n.segment);
    ring.clear();
    for (int v : faces[face]) ring.insert(ring.end(), vertex_faces[v].begin(), vertex_faces[v].end());
    std::sort(ring.begin(), ring.end());
    ring.erase(std::unique(ring.begin(), ring.end()), ring.end());
    for (int f : ring) {
      if (m.face_segment[f] != n.segment) continue;
      for (std::uint32_t s : face_splats[f]) {
        if (s == c || (xc[s] - xc[c]).squaredNorm() <= r2) n.members.push_back(s);
      }
    }
    std::sort(n.members.begin(), n.members.end());
    out.push_back(std::move(n));
  }
  return out;
}

namespace {

struct ClassValues {
  std::vector<Eigen::VectorXd> scale, rotation, color, opacity;
  std::vector<double> rot_sign;
};

ClassValues gather(const AvatarModel& m, const Neighborhood& n) {
  ClassValues cv;
  const Quat& qc = m.splats.attrs[n.center].rotation;
  for (std::uint32_t s : n.members) {
    const auto& a = m.splats.attrs[s];
    cv.scale.push_back(a.log_scale);
    const double sign = a.rotation.dot(qc) < 0.0 ? -1.0 : 1.0;
    cv.rot_sign.push_back(sign);
    cv.rotation.push_back(sign * a.rotation);
    cv.color.push_back(Vec3(a.sh[0], a.sh[1], a.sh[2]));
    cv.opacity.push_back(Eigen::VectorXd::Constant(1, a.opacity_logit));
  }
  return cv;
}

}  // namespace

std::array<double, 4> variance_components(const AvatarModel& m, const std::vector<Neighborhood>& nbrs) {
  std::array<double, 4> out{0, 0, 0, 0};
  if (nbrs.empty()) return out;
  for (const auto& n : nbrs) {
    const ClassValues cv = gather(m, n);
    out[0] += variance_loss(cv.scale);
    out[1] += variance_loss(cv.rotation);
    out[2] += variance_loss(cv.color);
    out[3] += variance_loss(cv.opacity);
  }
  for (double& v : out) v /= static_cast<double>(nbrs.size());
  return out;
}

RegLoss regularize(const AvatarModel& m, const std::vector<Neighborhood>& nbrs, const RegWeights& w,
                   ModelGrad* grad) {
  RegLoss loss;
  if (!nbrs.empty()) {
    const double inv = 1.0 / static_cast<double>(nbrs.size());
    std::vector<Eigen::VectorXd> g;
    for (const auto& n : nbrs) {
      const ClassValues cv = gather(m, n);
      const double ws = w.scale * inv, wr = w.rotation * inv, wc = w.color * inv, wo = w.opacity * inv;
      loss.variance += ws * variance_loss(cv.scale, grad ? &g : nullptr);
      if (grad) {
        for (std::size_t i = 0; i < n.members.size(); ++i) {
          for (int c = 0; c < 3; ++c) grad->scale[3 * n.members[i] + c] += ws * g[i][c];
        }
      }
      loss.variance += wr * variance_loss(cv.rotation, grad ? &g : nullptr);
      if (grad) {
        for (std::size_t i = 0; i < n.members.size(); ++i) {
          for (int c = 0; c < 4; ++c) grad->rotation[4 * n.members[i] + c] += wr * cv.rot_sign[i] * g[i][c];
        }
      }
      loss.variance += wc * variance_loss(cv.color, grad ? &g : nullptr);
      if (grad) {
        for (std::size_t i = 0; i < n.members.size(); ++i) {
          for (int c = 0; c < 3; ++c) grad->sh[kShValues * n.members[i] + c] += wc * g[i][c];
        }
      }
      loss.variance += wo * variance_loss(cv.opacity, grad ? &g : nullptr);
      if (grad) {
        for (std::size_t i = 0; i < n.members.size(); ++i) grad->opacity[n.members[i]] += wo * g[i][0];
      }
    }
  }
  std::vector<double> dgrad;
  loss.displacement =
      w.disp * displacement_penalty(m.displacement, m.tmpl.segment, m.disp_caps, grad ? &dgrad : nullptr);
  if (grad) {
    for (std::size_t i = 0; i < dgrad.size(); ++i) grad->disp[i] += w.disp * dgrad[i];
  }
  return loss;
}

double displacement_penalty(const DisplacementField& field, const std::vector<Segment>& segment,
                            const SegmentValues& caps, std::vector<double>* grad) {
  if (segment.size() < field.d.size()) throw InputError("displacement field larger than segment table");
  double total = 0.0;
  if (grad) grad->assign(3 * field.d.size(), 0.0);
  for (std::size_t i = 0; i < field.d.size(); ++i) {
    const double n = field.d[i].norm();
    const double excess = n - caps(segment[i]);
    if (excess <= 0.0) continue;
    total += excess * excess;
    if (grad) {
      const Vec3 g = 2.0 * excess * field.d[i] / n;
      for (int c = 0; c < 3; ++c) (*grad)[3 * i + c] = g[c];
    }
  }
  return total;
}

int sh_active_degree(long iteration, long total, const std::array<double, 3>& schedule) {
  if (total <= 0) return 3;
  const double frac = static_cast<double>(iteration) / static_cast<double>(total);
  int degree = 0;
  for (double f : schedule) {
    if (frac >= f) ++degree;
  }
  return degree;
}

}  // namespace signsplat
