// Acceptance suite: one PASS/FAIL line per criterion.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <map>
#include <numbers>
#include <set>
#include <string>

#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "json.hpp"
#include "signsplat/checkpoint.hpp"
#include "signsplat/fit2d.hpp"
#include "signsplat/regularizer.hpp"
#include "signsplat/rotation.hpp"
#include "signsplat/stitcher.hpp"
#include "signsplat/synthetic.hpp"
#include "signsplat/trainer.hpp"

using namespace signsplat;
namespace st = signsplat::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + std::string("failed: ") + what;
    }
  }
  void note(const std::string& s) { detail += (detail.empty() ? "" : "; ") + s; }
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, a);
  return buf;
}

std::string fmt(const char* f, double a, double b) {
  char buf[96];
  std::snprintf(buf, sizeof(buf), f, a, b);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int failures = 0;

void report(int id, const std::string& title, const std::function<Outcome()>& f) {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    o = f();
  } catch (const std::exception& e) {
    o.pass = false;
    o.detail = std::string("exception: ") + e.what();
  }
  if (!o.pass) ++failures;
  std::printf("%s %d %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", id, title.c_str(), o.detail.c_str(),
              seconds_since(t0));
  std::fflush(stdout);
}

// 1. Gradients against central differences on small random scenes.
Outcome gradient_oracle() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  std::map<std::string, std::size_t> per_group;
  std::size_t total = 0, bad = 0;
  std::string first_bad;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    st::GradScene s = st::random_grad_scene(seed);
    o.require(s.model.splats.size() <= 10 && s.cam.width == 16 && s.cam.height == 16, "scene size");
    for (const auto& c : st::check_scene_gradients(s, 1e-3, 1e-6)) {
      std::string group = c.name.substr(c.name.find('.') + 1);
      if (c.name.rfind("disp", 0) == 0) group = "displacement";
      if (c.name.rfind("theta", 0) == 0) group = "joint angle";
      if (c.name.rfind("predictor", 0) == 0) {
        group = c.name;
      } else {
        group.erase(std::remove_if(group.begin(), group.end(), ::isdigit), group.end());
      }
      ++per_group[group];
      ++total;
      if (!c.ok) {
        ++bad;
        if (first_bad.empty()) first_bad = c.name + " seed " + std::to_string(seed);
      }
    }
  }
  for (const char* g : {"opacity", "scale", "rotation", "sh_dc", "k", "l", "displacement", "joint angle"}) {
    o.require(per_group.count(g) > 0, std::string("group ") + g + " checked");
  }
  std::size_t predictor_layers = 0;
  for (const auto& [g, n] : per_group) predictor_layers += g.rfind("predictor", 0) == 0;
  o.require(predictor_layers == AttributePredictor::layout().size(), "one weight per predictor layer");
  o.require(bad == 0, std::to_string(bad) + " mismatches, first " + first_bad);
  const double secs = seconds_since(t0);
  o.require(secs < 300.0, "runtime under 5 min");
  o.note(std::to_string(total) + " derivatives over 20 scenes, " + std::to_string(per_group.size()) +
         " groups, " + fmt("%.1f s", secs));
  return o;
}

// 5. Stitching properties on the demo library plus closed-form cases.
Outcome stitching_suite(const fs::path& glosses) {
  Outcome o;
  const SkinnedTemplate rig = toy_rig();
  o.require(static_cast<float>(ease(0.0)) == 0.0f, "s(0) = 0");
  o.require(static_cast<float>(ease(0.5)) == 0.5f, "s(0.5) = 0.5");
  o.require(static_cast<float>(ease(0.25)) == 0.15625f, "s(0.25) = 0.15625");

  StitchConfig cfg;
  PoseParams a = PoseParams::zero(rig), b = a;
  b.theta[5].x() = 0.5;
  o.require(transition_frames(a, b, cfg) == 10, "delta 0.5 gives 10 frames");
  b.theta[5].x() = 0.501;
  o.require(transition_frames(a, b, cfg) == 11, "delta 0.501 gives 11 frames");
  o.require(transition_frames(a, a, cfg) == 2, "identical poses give 2 frames");

  const GlossLibrary lib = GlossLibrary::load(glosses);
  const std::vector<std::string> tokens = {"hello", "thanks", "you", "hello"};
  const StitchResult r = stitch(tokens, lib, cfg);
  const auto& out = r.sequence.frames;
  std::size_t expected = 0;
  for (const auto& t : tokens) expected += lib.get(t).frames.size();
  for (const auto& t : r.transitions) expected += t.second;
  o.require(out.size() == expected, "frame count = gloss frames + transition frames");

  double endpoint = 0.0, unit = 0.0, speed = 0.0;
  for (const auto& [start, n] : r.transitions) {
    const PoseParams& last = out[start - 1];
    const PoseParams& first = out[start + n];
    endpoint = std::max({endpoint, max_joint_angle(transition_pose(last, first, 0.0), last),
                         max_joint_angle(transition_pose(last, first, 1.0), first)});
    for (std::size_t i = start; i <= start + n; ++i) speed = std::max(speed, max_joint_angle(out[i - 1], out[i]));
  }
  // Gloss frames themselves pass through unchanged.
  std::size_t pos = 0;
  for (std::size_t g = 0; g < tokens.size(); ++g) {
    if (g > 0) pos += r.transitions[g - 1].second;
    for (const auto& f : lib.get(tokens[g]).frames) endpoint = std::max(endpoint, max_joint_angle(f, out[pos++]));
  }
  double rot_var = 0.0, trans_var = 0.0;
  for (const auto& f : out) {
    for (const auto& t : f.theta) unit = std::max(unit, std::abs(euler_to_quat(t).norm() - 1.0));
    rot_var = std::max(rot_var, (f.global_rot - out[0].global_rot).squaredNorm());
    trans_var = std::max(trans_var, (f.global_trans - out[0].global_trans).squaredNorm());
  }
  o.require(endpoint < 1e-6, "endpoint exactness");
  o.require(unit < 1e-6, "unit quaternions");
  o.require(speed <= 1.5 * cfg.omega + 1e-9, "transition speed bound");
  o.require(rot_var == 0.0 && trans_var == 0.0, "constant global transform");
  o.note(std::to_string(out.size()) + " frames, " + std::to_string(r.transitions.size()) + " transitions");
  o.note("endpoint " + fmt("%.2e rad", endpoint) + ", |q|-1 " + fmt("%.2e", unit) + ", max step " +
         fmt("%.4f rad", speed) + ", global variance " + fmt("%g", rot_var + trans_var));
  return o;
}

// 6. Closed-form values of the Gaussian, displacement, anchor and variance terms.
Outcome closed_form_oracles() {
  Outcome o;
  WorldGaussian g;
  const double iso = eval_gaussian(g, Vec3(0.0, 1.0, 0.0));
  o.require(std::abs(iso - std::exp(-0.5)) <= 1e-9, "isotropic unit distance");

  PosedMesh m;
  m.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)};
  m.faces = {{0, 1, 2}};
  m.segment.assign(3, Segment::Body);
  compute_normals(m.vertices, m.faces, m.vertex_normals, m.face_normals);
  DisplacementField d;
  d.d = {Vec3(0.5, 0.5, 0.01), Vec3::Zero(), Vec3::Zero()};
  const Vec3 moved = apply_displacements(m, d, SegmentValues{1.0, 1.0, 1.0}).vertices[0];
  o.require((moved - Vec3(0.0, 0.0, 0.01)).norm() <= 1e-9, "elementwise displacement");

  SplatAnchor centroid;
  centroid.face_id = 0;
  o.require((anchor_position(centroid, m) - Vec3(1.0 / 3.0, 1.0 / 3.0, 0.0)).norm() <= 1e-9, "centroid anchor");
  SplatAnchor hand;
  hand.face_id = 0;
  hand.k_logits = {std::log(0.2), std::log(0.3), std::log(0.5)};
  hand.l = 0.1;
  const Vec3 p = anchor_position(hand, m);
  o.require((p - Vec3(0.3, 0.5, 0.1)).norm() <= 1e-9, "(0.3, 0.5, 0.1) anchor");

  const double var = variance_loss(std::vector<double>{0.0, 2.0});
  o.require(std::abs(var - 2.0) <= 1e-9, "two-member variance");
  o.note("exp(-1/2) err " + fmt("%.1e", std::abs(iso - std::exp(-0.5))) + ", displaced " +
         fmt("(%.3f, %.3f, ", moved.x(), moved.y()) + fmt("%.3f)", moved.z()) + ", anchor " +
         fmt("(%.3f, %.3f, ", p.x(), p.y()) + fmt("%.3f)", p.z()) + ", variance " + fmt("%.9f", var));
  return o;
}

// 7. Single-joint perturbations recovered from two views.
Outcome fit2d_roundtrip() {
  Outcome o;
  const SkinnedTemplate rig = toy_rig();
  constexpr int kElbow = 4;
  // Recovery from a 0.3 rad error needs more travel than the refinement defaults allow.
  Fit2DConfig recover;
  recover.lr = 0.03;
  recover.steps = 1000;
  double worst = 0.0, worst_default = 0.0;
  bool monotone = true, limits = true;
  int cases = 0;
  auto within_limits = [&](const PoseParams& p) {
    for (std::size_t j = 0; j < rig.joint_count(); ++j) {
      for (int a = 0; a < 3; ++a) {
        const AxisLimit& l = rig.joint_limits[j][a];
        const double v = p.theta[j][a];
        if (l.locked ? v != 0.0 : (v < l.min || v > l.max)) return false;
      }
    }
    return true;
  };
  auto views_of = [&](const PoseParams& truth) {
    std::vector<KeypointView> v;
    for (double az : {0.0, 1.5}) {
      const Camera cam = orbit_camera(az, 0.1, 256);
      v.push_back({project_keypoints(rig, truth, cam), cam});
    }
    return v;
  };
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    for (double sign : {-1.0, 1.0}) {
      const PoseParams truth = toy_poses(rig, 1, seed)[0];
      PoseParams init = truth;
      init.theta[kElbow].x() += 0.3 * sign;
      const AxisLimit& l = rig.joint_limits[kElbow][0];
      if (init.theta[kElbow].x() < l.min || init.theta[kElbow].x() > l.max) continue;
      const auto views = views_of(truth);
      const Fit2DResult r = reprojection_fit(rig, init, views, recover);
      worst = std::max(worst, std::abs(r.pose.theta[kElbow].x() - truth.theta[kElbow].x()));
      for (std::size_t i = 1; i < r.best_error.size(); ++i) monotone = monotone && r.best_error[i] <= r.best_error[i - 1];
      monotone = monotone && r.final_error <= r.initial_error;
      limits = limits && within_limits(r.pose);
      const Fit2DResult d = reprojection_fit(rig, init, views, Fit2DConfig{});
      worst_default = std::max(worst_default, std::abs(d.pose.theta[kElbow].x() - truth.theta[kElbow].x()));
      ++cases;
    }
  }
  // Keypoints of a pose beyond the joint limits.
  PoseParams beyond = PoseParams::zero(rig);
  beyond.theta[kElbow] = Vec3(-2.9, 1.9, 0.4);
  beyond.theta[3] = Vec3(0.9, 1.4, 2.0);
  const Fit2DResult r = reprojection_fit(rig, PoseParams::zero(rig), views_of(beyond), recover);
  limits = limits && within_limits(r.pose);
  for (std::size_t i = 1; i < r.best_error.size(); ++i) monotone = monotone && r.best_error[i] <= r.best_error[i - 1];

  o.require(worst < 0.05, "elbow recovered within 0.05 rad");
  o.require(monotone, "best error non-increasing");
  o.require(limits, "joint limits respected");
  o.note(std::to_string(cases) + " perturbations, worst error " + fmt("%.4f rad", worst) +
         " (lr 0.03, 1000 steps); refinement defaults leave " + fmt("%.4f rad", worst_default));
  return o;
}

struct RunResult {
  TrainState state;
  int sh_degree = 0;
  EvalReport train, heldout;
  double variance = 0.0;
  double seconds = 0.0;
  std::vector<Image> renders;
  fs::path checkpoint;
};

class Runs {
 public:
  Runs(fs::path data, long iterations) : data_dir_(std::move(data)), iterations_(iterations) {
    data_ = load_dataset(data_dir_);
    heldout_ = load_dataset(data_dir_ / "heldout", &data_.rig);
    base_ = Config::load(data_dir_ / "train.toml");
    base_.set("trainer.iterations", std::to_string(iterations_));
  }

  const RunResult& get(const std::string& name, const std::vector<std::string>& overrides) {
    auto it = runs_.find(name);
    if (it != runs_.end()) return it->second;
    Config c = base_;
    for (const auto& ov : overrides) c.apply_override(ov);
    const TrainConfig tc = TrainConfig::from(c);
    RunResult r;
    const auto t0 = std::chrono::steady_clock::now();
    Trainer trainer(data_, tc);
    trainer.run();
    r.seconds = seconds_since(t0);
    r.sh_degree = trainer.sh_degree();
    r.state = trainer.state();
    r.train = evaluate(r.state.model, data_.frames, data_.background, r.sh_degree, &r.state.poses);
    r.heldout = evaluate(r.state.model, heldout_.frames, heldout_.background, r.sh_degree);
    // Variance under the default weights, whatever the run trained with.
    const RegWeights w = TrainConfig::from(base_).reg;
    r.variance = regularize(r.state.model, build_neighborhoods(r.state.model, w), w).variance;
    for (const auto& f : heldout_.frames) {
      r.renders.push_back(render_frame(r.state.model, f.pose, f.camera, heldout_.background, r.sh_degree));
    }
    r.renders.push_back(render_frame(r.state.model, r.state.poses[0], data_.frames[0].camera, data_.background,
                                     r.sh_degree));
    r.checkpoint = st::scratch_dir("acceptance_" + name);
    save_checkpoint(r.state, r.checkpoint);
    std::printf("  run %s: %.0f s, train PSNR %.3f, held-out PSNR %.3f SSIM %.5f, variance %.6g, %zu splats\n",
                name.c_str(), r.seconds, r.train.mean_psnr, r.heldout.mean_psnr, r.heldout.mean_ssim, r.variance,
                r.state.model.splats.active_count());
    std::fflush(stdout);
    return runs_.emplace(name, std::move(r)).first->second;
  }

  const RunResult& baseline() { return get("baseline", {}); }
  const Dataset& data() const { return data_; }
  const Dataset& heldout() const { return heldout_; }
  long iterations() const { return iterations_; }

 private:
  fs::path data_dir_;
  long iterations_;
  Dataset data_, heldout_;
  Config base_;
  std::map<std::string, RunResult> runs_;
};

// 2. Overfit the synthetic scene.
Outcome synthetic_overfit(Runs& runs) {
  Outcome o;
  o.require(runs.data().frames.size() == 24 && runs.data().frames[0].image.width == 128, "24 frames at 128 px");
  const RunResult& r = runs.baseline();
  o.require(r.train.mean_psnr >= 30.0, "training PSNR >= 30 dB");
  o.require(r.heldout.mean_psnr >= 25.0, "held-out PSNR >= 25 dB");
  o.require(r.seconds < 1800.0, "runtime under 30 min");
  o.note(std::to_string(runs.iterations()) + " iterations: train " + fmt("%.2f dB", r.train.mean_psnr) +
         ", held-out " + fmt("%.2f dB", r.heldout.mean_psnr) + fmt(" in %.0f s", r.seconds));
  return o;
}

// 3. Direction of each ablation on the held-out view.
Outcome ablation_directions(Runs& runs) {
  Outcome o;
  const RunResult& full = runs.baseline();
  const RunResult& no_density = runs.get("no_density", {"density.enabled=false"});
  const RunResult& single = runs.get("batch1", {"trainer.batch=1"});
  const RunResult& no_reg = runs.get("no_reg", {"reg.enabled=false"});
  o.require(full.heldout.mean_ssim > no_density.heldout.mean_ssim, "(a) densification improves held-out SSIM");
  o.require(full.heldout.mean_psnr > single.heldout.mean_psnr, "(b) B=4 improves held-out PSNR");
  o.require(full.heldout.mean_psnr >= no_reg.heldout.mean_psnr - 0.5, "(c) regularization costs <= 0.5 dB");
  o.require(full.variance <= 0.5 * no_reg.variance, "(c) variance reduced by >= 50%");
  o.note("(a) SSIM " + fmt("%.5f vs %.5f", full.heldout.mean_ssim, no_density.heldout.mean_ssim) + ", (b) PSNR " +
         fmt("%.3f vs %.3f", full.heldout.mean_psnr, single.heldout.mean_psnr) + ", (c) PSNR " +
         fmt("%.3f vs %.3f", full.heldout.mean_psnr, no_reg.heldout.mean_psnr) + ", variance " +
         fmt("%.4g vs %.4g", full.variance, no_reg.variance) +
         fmt(" (%.1f%% lower)", 100.0 * (1.0 - full.variance / std::max(no_reg.variance, 1e-300))));
  return o;
}

// 4. Two identical runs agree bit for bit.
Outcome determinism(Runs& runs) {
  Outcome o;
  const RunResult& a = runs.baseline();
  const RunResult& b = runs.get("baseline_repeat", {});
  for (const char* f : {"splats.ply", "predictor.bin", "state.bin", "rig.json"}) {
    o.require(st::file_bytes(a.checkpoint / f) == st::file_bytes(b.checkpoint / f), std::string(f) + " identical");
  }
  bool same = a.renders.size() == b.renders.size();
  for (std::size_t i = 0; same && i < a.renders.size(); ++i) same = st::images_identical(a.renders[i], b.renders[i]);
  o.require(same, "renders identical");
  o.note("checkpoint files and " + std::to_string(a.renders.size()) + " renders compared bytewise");
  return o;
}

// 8. Save, load and render again.
Outcome checkpoint_roundtrip(Runs& runs) {
  Outcome o;
  const RunResult& a = runs.baseline();
  const TrainState back = load_checkpoint(a.checkpoint);
  std::size_t i = 0;
  bool same = true;
  for (const auto& f : runs.heldout().frames) {
    same = same && st::images_identical(render_frame(back.model, f.pose, f.camera, runs.heldout().background,
                                                     a.sh_degree),
                                        a.renders[i++]);
  }
  same = same && st::images_identical(render_frame(back.model, back.poses[0], runs.data().frames[0].camera,
                                                   runs.data().background, a.sh_degree),
                                      a.renders[i]);
  o.require(same, "renders after reload identical");
  o.require(back.iteration == a.state.iteration, "iteration restored");
  o.note(std::to_string(i + 1) + " renders compared bytewise, " +
         std::to_string(back.model.splats.size()) + " splats reloaded");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  long iterations = 2000;
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::strcmp(argv[i], "--iterations") == 0) iterations = std::atol(argv[i + 1]);
  }
  const fs::path data = st::scratch_dir("acceptance_scene");
  make_synthetic(data, SyntheticConfig{});

  report(1, "gradient oracle", gradient_oracle);
  report(5, "stitching suite", [&] { return stitching_suite(data / "glosses"); });
  report(6, "closed-form oracles", closed_form_oracles);
  report(7, "fit2d round trip", fit2d_roundtrip);

  Runs runs(data, iterations);
  report(2, "synthetic overfit", [&] { return synthetic_overfit(runs); });
  report(8, "checkpoint round trip", [&] { return checkpoint_roundtrip(runs); });
  report(3, "ablation directions", [&] { return ablation_directions(runs); });
  report(4, "determinism", [&] { return determinism(runs); });

  std::printf("%s: %d of 8 criteria failed\n", failures == 0 ? "ALL PASS" : "FAILURES", failures);
  return failures == 0 ? 0 : 1;
}
