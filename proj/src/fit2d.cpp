#include "signsplat/fit2d.hpp"

#include "signsplat/optim.hpp"
#include "signsplat/rotation.hpp"

namespace signsplat {

void Fit2DConfig::validate() const {
  if (!(lr > 0.0)) throw InputError("fit2d.lr must be positive");
  if (steps < 0) throw InputError("fit2d.steps must be non-negative");
}

namespace {

bool masked(const Keypoint& k, const Camera& cam) {
  if (!(k.confidence > 0.0) || !k.xy.allFinite()) return true;
  const double sx = kKeypointFrameSlack * cam.width;
  const double sy = kKeypointFrameSlack * cam.height;
  return k.xy.x() < -sx || k.xy.x() > cam.width + sx || k.xy.y() < -sy || k.xy.y() > cam.height + sy;
}

double total_weight(const SkinnedTemplate& tmpl, const std::vector<KeypointView>& views) {
  double w = 0.0;
  for (const auto& v : views) {
    if (v.keypoints.size() != tmpl.joint_count()) {
      throw InputError("keypoint frame has " + std::to_string(v.keypoints.size()) + " joints, rig has " +
                       std::to_string(tmpl.joint_count()));
    }
    for (const auto& k : v.keypoints) {
      if (!masked(k, v.camera)) w += k.confidence;
    }
  }
  return w;
}

}  // namespace

double reprojection_error(const SkinnedTemplate& tmpl, const PoseParams& pose, const std::vector<KeypointView>& views,
                          std::vector<Vec3>* d_theta, std::vector<Vec3>* d_rot, std::vector<Vec3>* d_trans) {
  const double wsum = total_weight(tmpl, views);
  if (!(wsum > 0.0)) throw InputError("fit2d: every keypoint is masked");
  const SkinningState st = skin_forward(tmpl, pose);
  const std::vector<Vec3> joints = world_joints(st);
  std::vector<Vec3> d_joints(joints.size(), Vec3::Zero());
  if (d_rot) d_rot->assign(views.size(), Vec3::Zero());
  if (d_trans) d_trans->assign(views.size(), Vec3::Zero());
  double err = 0.0;
  for (std::size_t v = 0; v < views.size(); ++v) {
    const Camera& cam = views[v].camera;
    for (std::size_t j = 0; j < joints.size(); ++j) {
      const Keypoint& k = views[v].keypoints[j];
      if (masked(k, cam)) continue;
      const Vec3 rx = cam.rot * joints[j];
      const Vec3 t = rx + cam.trans;
      if (!(t.z() >= cam.near)) continue;
      const double iz = 1.0 / t.z();
      const Vec2 p(cam.fx * t.x() * iz + cam.cx, cam.fy * t.y() * iz + cam.cy);
      const Vec2 r = p - k.xy;
      const double w = k.confidence / wsum;
      err += w * r.squaredNorm();
      const Vec2 dp = 2.0 * w * r;
      const Vec3 dt(dp.x() * cam.fx * iz, dp.y() * cam.fy * iz,
                    -(dp.x() * cam.fx * t.x() + dp.y() * cam.fy * t.y()) * iz * iz);
      d_joints[j] += cam.rot.transpose() * dt;
      if (d_rot) (*d_rot)[v] += rx.cross(dt);
      if (d_trans) (*d_trans)[v] += dt;
    }
  }
  if (d_theta) {
    SkinningAdjoint adj;
    adj.reset(tmpl.joint_count(), tmpl.vertex_count());
    world_joints_backward(st, d_joints, adj);
    *d_theta = pose_backward(tmpl, pose, st, adj).theta;
  }
  return err;
}

Fit2DResult reprojection_fit(const SkinnedTemplate& tmpl, const PoseParams& initial,
                             const std::vector<KeypointView>& views, const Fit2DConfig& cfg) {
  cfg.validate();
  if (views.empty()) throw InputError("fit2d: no keypoint views");
  check_pose(tmpl, initial);
  Fit2DResult res;
  res.pose = clamp_pose(tmpl, initial);
  std::vector<KeypointView> cur = views;
  std::vector<Vec3> base_rot_vec(views.size(), Vec3::Zero()), base_trans(views.size());
  for (std::size_t v = 0; v < views.size(); ++v) base_trans[v] = views[v].camera.trans;
  std::vector<Vec3> rot_vec = base_rot_vec, trans = base_trans;
  auto apply_cameras = [&](std::vector<KeypointView>& out, const std::vector<Vec3>& rv, const std::vector<Vec3>& tv) {
    for (std::size_t v = 0; v < views.size(); ++v) {
      out[v].camera.rot = axis_angle_to_matrix(rv[v]) * views[v].camera.rot;
      out[v].camera.trans = tv[v];
    }
  };

  const std::size_t nj = tmpl.joint_count();
  AdamMoments m_theta{"theta", {}, {}}, m_rot{"rot", {}, {}}, m_trans{"trans", {}, {}};
  m_theta.resize(3 * nj);
  m_rot.resize(3 * views.size());
  m_trans.resize(3 * views.size());
  const AdamConfig adam;

  double best = reprojection_error(tmpl, res.pose, cur, nullptr);
  res.initial_error = best;
  res.best_error.push_back(best);
  double lr = cfg.lr;
  for (int s = 0; s < cfg.steps && best > 0.0; ++s) {
    std::vector<Vec3> d_theta, d_rot, d_trans;
    reprojection_error(tmpl, res.pose, cur, &d_theta, cfg.extrinsics ? &d_rot : nullptr,
                       cfg.extrinsics ? &d_trans : nullptr);
    PoseParams trial = res.pose;
    const long t = s + 1;
    for (std::size_t j = 0; j < nj; ++j) {
      for (int k = 0; k < 3; ++k) {
        adam_update(trial.theta[j][k], d_theta[j][k], m_theta.m[3 * j + k], m_theta.v[3 * j + k], lr, t, adam);
      }
    }
    trial = clamp_pose(tmpl, trial);
    std::vector<Vec3> trial_rot = rot_vec, trial_trans = trans;
    std::vector<KeypointView> trial_views = cur;
    if (cfg.extrinsics) {
      for (std::size_t v = 0; v < views.size(); ++v) {
        for (int k = 0; k < 3; ++k) {
          adam_update(trial_rot[v][k], d_rot[v][k], m_rot.m[3 * v + k], m_rot.v[3 * v + k], lr, t, adam);
          adam_update(trial_trans[v][k], d_trans[v][k], m_trans.m[3 * v + k], m_trans.v[3 * v + k], lr, t, adam);
        }
      }
      apply_cameras(trial_views, trial_rot, trial_trans);
    }
    const double e = reprojection_error(tmpl, trial, trial_views, nullptr);
    if (std::isfinite(e) && e <= best) {
      best = e;
      res.pose = trial;
      rot_vec = trial_rot;
      trans = trial_trans;
      cur = trial_views;
      ++res.accepted_steps;
    } else {
      lr *= 0.5;
    }
    res.best_error.push_back(best);
  }
  res.final_error = best;
  for (const auto& v : cur) res.cameras.push_back(v.camera);
  return res;
}

}  // namespace signsplat
