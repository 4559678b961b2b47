#include "signsplat/trainer.hpp"

#include <cstdio>
#include <iostream>

#include "signsplat/io.hpp"
#include "signsplat/metrics.hpp"

namespace signsplat {

Dataset load_dataset(const std::filesystem::path& dir, const SkinnedTemplate* rig) {
  if (!std::filesystem::is_directory(dir)) throw InputError("dataset directory not found: " + dir.string());
  Dataset d;
  const auto rig_path = dir / "rig.json";
  if (rig && !std::filesystem::exists(rig_path)) {
    d.rig = *rig;
  } else {
    if (!std::filesystem::exists(rig_path)) throw InputError("missing " + rig_path.string());
    d.rig = load_rig(rig_path);
  }
  const auto cam_path = dir / "cameras.json";
  const auto pose_path = dir / "poses.json";
  if (!std::filesystem::exists(cam_path)) throw InputError("missing " + cam_path.string());
  if (!std::filesystem::exists(pose_path)) throw InputError("missing " + pose_path.string());
  const CameraSet cams = load_cameras(cam_path);
  const PoseSequence poses = load_poses(pose_path);
  if (cams.cameras.size() != poses.frames.size()) {
    throw InputError(pose_path.string() + ": " + std::to_string(poses.frames.size()) + " poses but " +
                     cam_path.string() + " has " + std::to_string(cams.cameras.size()) + " cameras");
  }
  if (cams.cameras.empty()) throw InputError(cam_path.string() + ": no frames");
  d.background = cams.background;
  d.fps = poses.fps;
  for (std::size_t i = 0; i < cams.cameras.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "%04zu.png", i);
    const auto img_path = dir / "frames" / name;
    if (!std::filesystem::exists(img_path)) throw InputError("missing " + img_path.string());
    TrainingFrame f;
    f.image = load_png(img_path);
    f.camera = cams.cameras[i];
    if (f.image.width != f.camera.width || f.image.height != f.camera.height) {
      throw InputError(img_path.string() + ": image size does not match camera " + std::to_string(i));
    }
    try {
      check_pose(d.rig, poses.frames[i]);
    } catch (const InputError& e) {
      throw InputError(pose_path.string() + ": frame " + std::to_string(i) + ": " + e.what());
    }
    f.pose = clamp_pose(d.rig, poses.frames[i]);
    f.id = static_cast<int>(i);
    d.frames.push_back(std::move(f));
  }
  return d;
}

LossReport image_loss(const Image& pred, const Image& gt, const LossWeights& w, Image* grad) {
  if (!pred.same_shape(gt)) throw InputError("loss: image dimensions differ");
  LossReport r;
  Image g1, gs;
  r.l1 = l1_loss(pred, gt, grad ? &g1 : nullptr);
  r.ssim = ssim(pred, gt, grad ? &gs : nullptr);
  r.dssim = 0.5 * (1.0 - r.ssim);
  r.psnr = psnr(pred, gt);
  r.total = w.l1 * r.l1 + w.dssim * r.dssim;
  if (grad) {
    *grad = Image(pred.width, pred.height);
    for (std::size_t i = 0; i < grad->data.size(); ++i) {
      grad->data[i] = w.l1 * g1.data[i] - 0.5 * w.dssim * gs.data[i];
    }
  }
  return r;
}

TrainConfig TrainConfig::from(const Config& c) {
  TrainConfig t;
  t.iterations = c.integer("trainer.iterations");
  t.batch = static_cast<int>(c.integer("trainer.batch"));
  t.seed = static_cast<std::uint64_t>(c.integer("trainer.seed"));
  t.log_interval = c.integer("trainer.log_interval");
  t.checkpoint_interval = c.integer("trainer.checkpoint_interval");
  t.pose_refinement = c.boolean("trainer.pose_refinement");
  t.use_predictor = c.boolean("trainer.use_predictor");
  t.initial_opacity = c.real("trainer.initial_opacity");
  t.loss = {c.real("loss.l1"), c.real("loss.dssim")};
  t.lr = {c.real("lr.opacity"), c.real("lr.scale"),      c.real("lr.rotation"),  c.real("lr.sh"),
          c.real("lr.anchor"),  c.real("lr.displacement"), c.real("lr.predictor"), c.real("lr.pose")};
  t.regularize = c.boolean("reg.enabled");
  t.reg.scale = c.real("reg.scale");
  t.reg.rotation = c.real("reg.rotation");
  t.reg.color = c.real("reg.color");
  t.reg.opacity = c.real("reg.opacity");
  t.reg.disp = c.real("reg.displacement");
  const auto sched = c.reals("reg.sh_schedule");
  if (sched.size() != 3) throw InputError("reg.sh_schedule needs exactly 3 fractions");
  t.reg.sh_schedule = {sched[0], sched[1], sched[2]};
  t.reg.radius = {c.real("reg.radius_body"), c.real("reg.radius_head"), c.real("reg.radius_hands")};
  t.densify = c.boolean("density.enabled");
  t.density.grad_threshold = c.real("density.grad_threshold");
  t.density.interval = c.integer("density.interval");
  t.density.start = c.integer("density.start");
  t.density.stop = c.integer("density.stop");
  const long max_splats = c.integer("density.max_splats");
  if (max_splats <= 0) throw InputError("density.max_splats must be positive");
  t.density.max_splats = static_cast<std::size_t>(max_splats);
  t.density.scale_divisor = c.real("density.scale_divisor");
  t.prune.opacity_eps = c.real("density.opacity_eps");
  t.prune.reset_opacity = c.real("density.reset_opacity");
  t.limits.s_max = {c.real("limits.smax_body"), c.real("limits.smax_head"), c.real("limits.smax_hands")};
  t.limits.l_max = c.real("limits.l_max");
  t.disp_caps = {c.real("limits.disp_body"), c.real("limits.disp_head"), c.real("limits.disp_hands")};
  t.validate();
  return t;
}

void TrainConfig::validate() const {
  if (iterations < 0) throw InputError("trainer.iterations must be non-negative");
  if (batch < 1) throw InputError("trainer.batch must be at least 1");
  if (log_interval < 1) throw InputError("trainer.log_interval must be at least 1");
  if (checkpoint_interval < 0) throw InputError("trainer.checkpoint_interval must be non-negative");
  if (!(initial_opacity > 0.0 && initial_opacity < 1.0)) {
    throw InputError("trainer.initial_opacity must be in (0, 1)");
  }
  if (!(loss.l1 >= 0.0 && loss.dssim >= 0.0)) throw InputError("loss weights must be non-negative");
  for (double v : {lr.opacity, lr.scale, lr.rotation, lr.sh, lr.anchor, lr.displacement, lr.predictor, lr.pose}) {
    if (!(v >= 0.0)) throw InputError("learning rates must be non-negative");
  }
  reg.validate();
  density.validate();
  prune.validate();
  for (double v : {limits.s_max.body, limits.s_max.head, limits.s_max.hands, limits.l_max}) {
    if (!(v > 0.0)) throw InputError("limits.smax_* and limits.l_max must be positive");
  }
  for (double v : {disp_caps.body, disp_caps.head, disp_caps.hands}) {
    if (!(v >= 0.0)) throw InputError("limits.disp_* must be non-negative");
  }
}

namespace {

std::uint64_t splitmix(std::uint64_t& s) {
  std::uint64_t z = (s += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

bool all_finite(const std::vector<double>& v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

std::size_t pose_width(const PoseParams& p) { return 3 * p.theta.size() + p.psi.size(); }

}  // namespace

Trainer::Trainer(const Dataset& data, const TrainConfig& cfg) : data_(data), cfg_(cfg) {
  cfg_.validate();
  if (data.frames.empty()) throw InputError("training dataset has no frames");
  state_.model = AvatarModel::create(data.rig, cfg.seed, cfg.limits, cfg.initial_opacity);
  state_.model.disp_caps = cfg.disp_caps;
  state_.model.use_predictor = cfg.use_predictor;
  for (const auto& f : data.frames) state_.poses.push_back(f.pose);
  state_.accumulator.resize(state_.model.splats.size());
  rng_state_ = cfg.seed;
  rebuild_neighborhoods();
}

Trainer::Trainer(const Dataset& data, const TrainConfig& cfg, TrainState state)
    : data_(data), cfg_(cfg), state_(std::move(state)) {
  cfg_.validate();
  if (state_.poses.size() != data.frames.size()) {
    throw InputError("checkpoint pose count does not match the dataset frame count");
  }
  state_.accumulator.resize(state_.model.splats.size());
  rng_state_ = cfg.seed;
  // Replay the batch schedule so a resumed run continues the same sequence.
  for (long i = 0; i < state_.iteration; ++i) next_batch();
  rebuild_neighborhoods();
}

int Trainer::sh_degree() const {
  return sh_active_degree(state_.iteration, cfg_.iterations, cfg_.reg.sh_schedule);
}

void Trainer::rebuild_neighborhoods() {
  nbrs_.clear();
  if (cfg_.regularize) nbrs_ = build_neighborhoods(state_.model, cfg_.reg);
}

std::vector<std::size_t> Trainer::next_batch() {
  std::vector<std::size_t> out;
  const std::size_t n = data_.frames.size();
  while (out.size() < static_cast<std::size_t>(cfg_.batch)) {
    if (cursor_ >= order_.size()) {
      order_.resize(n);
      for (std::size_t i = 0; i < n; ++i) order_[i] = i;
      for (std::size_t i = n; i > 1; --i) std::swap(order_[i - 1], order_[splitmix(rng_state_) % i]);
      cursor_ = 0;
    }
    out.push_back(order_[cursor_++]);
  }
  return out;
}

LossReport Trainer::gradient(const std::vector<std::size_t>& frames, ModelGrad& grad,
                             std::vector<PoseGradient>* pose_grads) {
  const AvatarModel& m = state_.model;
  grad.resize_for(m);
  if (pose_grads) pose_grads->assign(frames.size(), PoseGradient{});
  const int degree = sh_degree();
  LossReport total;
  ModelGrad fg;
  FrameCache cache;
  for (std::size_t b = 0; b < frames.size(); ++b) {
    const TrainingFrame& f = data_.frames.at(frames[b]);
    const Image pred = render_frame(m, state_.poses[frames[b]], f.camera, data_.background, degree, &cache);
    Image d_img;
    const LossReport r = image_loss(pred, f.image, cfg_.loss, &d_img);
    fg.resize_for(m);
    backward_frame(m, cache, d_img, fg, pose_grads ? &(*pose_grads)[b] : nullptr);
    grad.add(fg);
    total.l1 += r.l1;
    total.dssim += r.dssim;
    total.psnr += r.psnr;
    total.ssim += r.ssim;
    total.total += r.total;
  }
  const double inv = 1.0 / static_cast<double>(frames.size());
  grad.scale_params(inv);
  if (pose_grads) {
    for (auto& pg : *pose_grads) {
      for (auto& t : pg.theta) t *= inv;
      for (auto& p : pg.psi) p *= inv;
    }
  }
  total.l1 *= inv;
  total.dssim *= inv;
  total.psnr *= inv;
  total.ssim *= inv;
  total.total *= inv;

  RegWeights w = cfg_.reg;
  if (!cfg_.regularize) w.scale = w.rotation = w.color = w.opacity = 0.0;
  const RegLoss reg = regularize(m, nbrs_, w, &grad);
  total.variance = reg.variance;
  total.displacement = reg.displacement;
  total.total += reg.total();
  return total;
}

void Trainer::apply_update(const ModelGrad& g, const std::vector<std::size_t>& frames,
                           const std::vector<PoseGradient>& pose_grads) {
  AvatarModel& m = state_.model;
  AdamState& adam = state_.adam;
  const long t = ++adam.step;
  const std::size_t n = m.splats.size();
  const auto& c = cfg_.adam;

  auto& mo = adam.group("opacity");
  auto& ms = adam.group("scale");
  auto& mr = adam.group("rotation");
  auto& mh = adam.group("sh");
  auto& mk = adam.group("k_logits");
  auto& ml = adam.group("l");
  mo.resize(n);
  ms.resize(3 * n);
  mr.resize(4 * n);
  mh.resize(kShValues * n);
  mk.resize(3 * n);
  ml.resize(n);
  auto step = [&](double& p, double grad, AdamMoments& mom, std::size_t i, double lr) {
    adam_update(p, grad, mom.m[i], mom.v[i], lr, t, c);
    p = to_f32(p);
  };
  for (std::size_t i = 0; i < n; ++i) {
    if (!m.splats.active[i]) continue;
    GaussianAttributes& a = m.splats.attrs[i];
    SplatAnchor& an = m.splats.anchors[i];
    step(a.opacity_logit, g.opacity[i], mo, i, cfg_.lr.opacity);
    for (int k = 0; k < 3; ++k) step(a.log_scale[k], g.scale[3 * i + k], ms, 3 * i + k, cfg_.lr.scale);
    for (int k = 0; k < 4; ++k) step(a.rotation[k], g.rotation[4 * i + k], mr, 4 * i + k, cfg_.lr.rotation);
    for (int k = 0; k < kShValues; ++k) {
      step(a.sh[k], g.sh[kShValues * i + k], mh, kShValues * i + k, cfg_.lr.sh);
    }
    if (an.learnable()) {
      for (int k = 0; k < 3; ++k) step(an.k_logits[k], g.k_logits[3 * i + k], mk, 3 * i + k, cfg_.lr.anchor);
      step(an.l, g.l[i], ml, i, cfg_.lr.anchor);
    }
  }

  auto& md = adam.group("displacement");
  md.resize(g.disp.size());
  for (std::size_t v = 0; v < m.displacement.d.size(); ++v) {
    for (int k = 0; k < 3; ++k) {
      adam_update(m.displacement.d[v][k], g.disp[3 * v + k], md.m[3 * v + k], md.v[3 * v + k],
                  cfg_.lr.displacement, t, c);
    }
  }
  if (m.use_predictor) {
    auto& mp = adam.group("predictor");
    auto& params = m.predictor.params();
    mp.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      adam_update(params[i], g.predictor[i], mp.m[i], mp.v[i], cfg_.lr.predictor, t, c);
    }
  }
  if (cfg_.pose_refinement) {
    auto& mp = adam.group("pose");
    const std::size_t width = pose_width(state_.poses.front());
    mp.resize(width * state_.poses.size());
    std::vector<bool> done(state_.poses.size(), false);
    for (std::size_t b = 0; b < frames.size(); ++b) {
      const std::size_t f = frames[b];
      // A frame repeated within a batch already received its summed share.
      if (done[f]) continue;
      done[f] = true;
      PoseParams& p = state_.poses[f];
      std::vector<double> gsum(width, 0.0);
      for (std::size_t b2 = b; b2 < frames.size(); ++b2) {
        if (frames[b2] != f) continue;
        const PoseGradient& pg = pose_grads[b2];
        for (std::size_t j = 0; j < pg.theta.size(); ++j) {
          for (int k = 0; k < 3; ++k) gsum[3 * j + k] += pg.theta[j][k];
        }
        for (std::size_t e = 0; e < pg.psi.size(); ++e) gsum[3 * p.theta.size() + e] += pg.psi[e];
      }
      const std::size_t base = f * width;
      for (std::size_t j = 0; j < p.theta.size(); ++j) {
        for (int k = 0; k < 3; ++k) {
          const std::size_t i = base + 3 * j + k;
          adam_update(p.theta[j][k], gsum[3 * j + k], mp.m[i], mp.v[i], cfg_.lr.pose, t, c);
        }
      }
      for (std::size_t e = 0; e < p.psi.size(); ++e) {
        const std::size_t i = base + 3 * p.theta.size() + e;
        adam_update(p.psi[e], gsum[3 * p.theta.size() + e], mp.m[i], mp.v[i], cfg_.lr.pose, t, c);
      }
      p = clamp_pose(m.tmpl, p);
    }
  }
}

void Trainer::density_step(StepReport& report) {
  const long it = state_.iteration;
  if (!cfg_.densify || it < cfg_.density.start || it > cfg_.density.stop || it % cfg_.density.interval != 0 ||
      it >= cfg_.iterations) {
    return;
  }
  AvatarModel& m = state_.model;
  const auto cands = select_candidates(state_.accumulator, cfg_.density, m.splats.active);
  const DensifyResult d = densify(m, cands, cfg_.density, state_.accumulator);
  if (d.skipped_candidates > 0) {
    std::cerr << "warning: iteration " << it << ": " << d.skipped_candidates
              << " densification candidates skipped at the splat cap\n";
  }
  const PruneResult p = prune(m, cfg_.prune);
  report.densified = d.created.size();
  report.pruned = p.deactivated.size();
  state_.accumulator.resize(m.splats.size());
  state_.accumulator.reset_all();
  rebuild_neighborhoods();
}

StepReport Trainer::step_on(const std::vector<std::size_t>& frames) {
  if (frames.empty()) throw InputError("empty training batch");
  StepReport report;
  report.batch = static_cast<int>(frames.size());
  ModelGrad grad;
  std::vector<PoseGradient> pose_grads;
  report.loss = gradient(frames, grad, cfg_.pose_refinement ? &pose_grads : nullptr);

  bool finite = std::isfinite(report.loss.total);
  for (const auto* v : {&grad.opacity, &grad.scale, &grad.rotation, &grad.sh, &grad.k_logits, &grad.l,
                        &grad.disp, &grad.predictor}) {
    finite = finite && all_finite(*v);
  }
  for (const auto& pg : pose_grads) {
    for (const auto& t : pg.theta) finite = finite && t.allFinite();
    finite = finite && all_finite(pg.psi);
  }
  if (!finite) {
    std::cerr << "warning: iteration " << state_.iteration
              << ": non-finite loss or gradient, step discarded and state kept\n";
    report.rolled_back = true;
  } else {
    apply_update(grad, frames, pose_grads);
    state_.accumulator.add(grad);
  }
  ++state_.iteration;
  if (!report.rolled_back) density_step(report);
  report.iteration = state_.iteration;
  report.active_splats = state_.model.splats.active_count();
  return report;
}

StepReport Trainer::step() { return step_on(next_batch()); }

void Trainer::run(const std::function<void(const StepReport&)>& on_step) {
  while (state_.iteration < cfg_.iterations) {
    const StepReport r = step();
    if (on_step) on_step(r);
  }
}

EvalReport evaluate(const AvatarModel& model, const std::vector<TrainingFrame>& frames, const Vec3& background,
                    int sh_degree, const std::vector<PoseParams>* poses) {
  if (poses && poses->size() != frames.size()) throw InputError("evaluate: pose and frame counts differ");
  EvalReport r;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const PoseParams& pose = poses ? (*poses)[i] : frames[i].pose;
    const Image img = render_frame(model, pose, frames[i].camera, background, sh_degree);
    r.psnr.push_back(psnr(img, frames[i].image));
    r.ssim.push_back(ssim(img, frames[i].image));
  }
  for (std::size_t i = 0; i < frames.size(); ++i) {
    r.mean_psnr += r.psnr[i];
    r.mean_ssim += r.ssim[i];
  }
  if (!frames.empty()) {
    r.mean_psnr /= static_cast<double>(frames.size());
    r.mean_ssim /= static_cast<double>(frames.size());
  }
  return r;
}

MetricsLog::MetricsLog(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  out_.open(path);
  if (!out_) throw RuntimeError("cannot write " + path.string());
  out_ << "iteration,batch,l1,dssim,var,total,psnr,ssim,active_splats\n";
}

void MetricsLog::write(const StepReport& r) {
  char line[256];
  std::snprintf(line, sizeof(line), "%ld,%d,%.9g,%.9g,%.9g,%.9g,%.6f,%.6f,%zu\n", r.iteration, r.batch, r.loss.l1,
                r.loss.dssim, r.loss.variance, r.loss.total, r.loss.psnr, r.loss.ssim, r.active_splats);
  out_ << line;
  out_.flush();
}

}  // namespace signsplat
