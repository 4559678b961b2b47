#include "signsplat/density_control.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

namespace signsplat {

void DensifyPolicy::validate() const {
  if (!(grad_threshold > 0.0)) throw InputError("density.grad_threshold must be positive");
  if (interval <= 0) throw InputError("density.interval must be positive");
  if (!(start < stop)) throw InputError("density.start must be smaller than density.stop");
  if (max_splats == 0) throw InputError("density.max_splats must be positive");
  if (!(scale_divisor > 0.0)) throw InputError("density.scale_divisor must be positive");
}

void PrunePolicy::validate() const {
  if (!(opacity_eps > 0.0 && opacity_eps < 1.0)) throw InputError("density.opacity_eps must be in (0, 1)");
  if (!(reset_opacity > 0.0 && reset_opacity < 1.0)) {
    throw InputError("density.reset_opacity must be in (0, 1)");
  }
}

void GradAccumulator::resize(std::size_t n) {
  sum.resize(n, 0.0);
  count.resize(n, 0);
}

void GradAccumulator::reset(std::uint32_t id) {
  sum[id] = 0.0;
  count[id] = 0;
}

void GradAccumulator::reset_all() {
  std::fill(sum.begin(), sum.end(), 0.0);
  std::fill(count.begin(), count.end(), 0u);
}

void GradAccumulator::add(const ModelGrad& g) {
  resize(g.screen_grad.size());
  for (std::size_t i = 0; i < g.screen_grad.size(); ++i) {
    sum[i] += g.screen_grad[i];
    count[i] += g.screen_count[i];
  }
}

std::vector<std::uint32_t> select_candidates(const GradAccumulator& acc, const DensifyPolicy& policy,
                                             const std::vector<std::uint8_t>& active) {
  std::vector<std::uint32_t> ids;
  for (std::uint32_t i = 0; i < acc.sum.size(); ++i) {
    if (i < active.size() && !active[i]) continue;
    if (acc.count[i] > 0 && acc.mean(i) > policy.grad_threshold) ids.push_back(i);
  }
  std::sort(ids.begin(), ids.end(), [&](std::uint32_t a, std::uint32_t b) {
    const double ma = acc.mean(a), mb = acc.mean(b);
    if (ma != mb) return ma > mb;
    return a < b;
  });
  return ids;
}

DensifyResult densify(AvatarModel& m, const std::vector<std::uint32_t>& candidates,
                      const DensifyPolicy& policy, GradAccumulator& acc) {
  const auto& faces = m.tmpl.faces;
  std::vector<std::vector<std::uint32_t>> vertex_faces(m.tmpl.vertex_count());
  for (std::uint32_t f = 0; f < faces.size(); ++f) {
    for (int v : faces[f]) vertex_faces[v].push_back(f);
  }
  DensifyResult res;
  std::size_t active = m.splats.active_count();
  acc.resize(m.splats.size());
  for (std::uint32_t id : candidates) {
    const SplatAnchor parent = m.splats.anchors[id];
    const GaussianAttributes pattr = m.splats.attrs[id];
    const Vec3 k = parent.coefficients();
    int corner = 0;
    for (int c = 1; c < 3; ++c) {
      if (k[c] > k[corner]) corner = c;
    }
    const auto& ring = vertex_faces[faces[parent.face_id][corner]];
    if (active + ring.size() > policy.max_splats) {
      ++res.skipped_candidates;
      continue;
    }
    const Vec3 parent_scale = realized_scale(pattr.log_scale, m.face_segment[parent.face_id], m.limits);
    for (std::uint32_t f : ring) {
      SplatAnchor a;
      a.face_id = f;
      a.origin = SplatOrigin::Densified;
      GaussianAttributes g = pattr;
      const double smax = m.limits.s_max(m.face_segment[f]);
      for (int c = 0; c < 3; ++c) {
        const double ratio = std::clamp(parent_scale[c] / policy.scale_divisor / smax, 1e-6, 1.0 - 1e-6);
        g.log_scale[c] = to_f32(logit(ratio));
      }
      res.created.push_back(static_cast<std::uint32_t>(m.splats.size()));
      m.splats.push_back(a, g);
    }
    active += ring.size();
    acc.reset(id);
  }
  if (res.skipped_candidates > 0) {
    std::cerr << "warning: splat cap " << policy.max_splats << " reached, skipped "
              << res.skipped_candidates << " densification candidates\n";
  }
  acc.resize(m.splats.size());
  return res;
}

PruneResult prune(AvatarModel& m, const PrunePolicy& policy) {
  PruneResult res;
  for (std::uint32_t i = 0; i < m.splats.size(); ++i) {
    if (!m.splats.active[i]) continue;
    GaussianAttributes& a = m.splats.attrs[i];
    bool saturated = false;
    for (int c = 0; c < 3; ++c) saturated |= sigmoid(a.log_scale[c]) >= 1.0 - 1e-6;
    const bool transparent = sigmoid(a.opacity_logit) < policy.opacity_eps;
    if (!saturated && !transparent) continue;
    if (m.splats.anchors[i].learnable()) {
      m.splats.active[i] = 0;
      res.deactivated.push_back(i);
    } else {
      a.opacity_logit = to_f32(logit(policy.reset_opacity));
      res.reset.push_back(i);
    }
  }
  return res;
}

std::vector<long> compact(AvatarModel& m) {
  std::vector<long> map(m.splats.size(), -1);
  SplatSet out;
  for (std::size_t i = 0; i < m.splats.size(); ++i) {
    if (!m.splats.active[i]) continue;
    map[i] = static_cast<long>(out.size());
    out.push_back(m.splats.anchors[i], m.splats.attrs[i]);
  }
  m.splats = std::move(out);
  return map;
}

}  // namespace signsplat
