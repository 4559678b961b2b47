#include <cstdio>
#include <iostream>

#include "CLI11.hpp"
#include "signsplat/checkpoint.hpp"
#include "signsplat/config.hpp"
#include "signsplat/fit2d.hpp"
#include "signsplat/stitcher.hpp"
#include "signsplat/synthetic.hpp"
#include "signsplat/trainer.hpp"

namespace fs = std::filesystem;
using namespace signsplat;

namespace {

const std::vector<std::string> kPathKeys = {"data.dataset", "data.heldout", "output.dir", "output.log"};

// File values of path keys are relative to the config file; overrides to the
// working directory.
Config build_config(const std::string& file, const std::vector<std::string>& overrides) {
  Config c;
  if (!file.empty()) {
    if (!fs::exists(file)) throw InputError("missing config file " + file);
    c = Config::load(file);
    const fs::path base = fs::path(file).parent_path();
    for (const auto& k : kPathKeys) {
      const std::string v = c.string(k);
      if (!v.empty() && fs::path(v).is_relative()) c.set(k, (base / v).lexically_normal().string());
    }
  }
  for (const auto& o : overrides) c.apply_override(o);
  return c;
}

void add_common(CLI::App* cmd, std::string& config, std::vector<std::string>& overrides, const std::string& name) {
  cmd->add_option("-c,--config", config, "config file");
  cmd->add_option("-o,--override", overrides, "key=value override (repeatable)");
  cmd->footer("Config keys:\n" + config_help(name));
}

std::string frame_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04zu.png", i);
  return buf;
}

int cmd_train(const Config& c) {
  const TrainConfig tc = TrainConfig::from(c);
  const std::string ds = c.string("data.dataset");
  if (ds.empty()) throw InputError("data.dataset is not set");
  const Dataset data = load_dataset(ds);
  std::string held = c.string("data.heldout");
  if (held.empty() && fs::is_directory(fs::path(ds) / "heldout")) held = (fs::path(ds) / "heldout").string();
  const fs::path out = c.string("output.dir");
  const fs::path log_path = c.string("output.log").empty() ? out / "metrics.csv" : fs::path(c.string("output.log"));
  fs::create_directories(out);
  write_text_file(out / "config.toml", c.dump());

  Trainer trainer(data, tc);
  MetricsLog log(log_path);
  trainer.run([&](const StepReport& r) {
    if (r.iteration % tc.log_interval == 0 || r.iteration == tc.iterations) log.write(r);
    if (r.densified > 0 || r.pruned > 0) {
      std::printf("iteration %ld: %zu splats added, %zu pruned, %zu active\n", r.iteration, r.densified, r.pruned,
                  r.active_splats);
    }
    if (tc.checkpoint_interval > 0 && r.iteration % tc.checkpoint_interval == 0 && r.iteration < tc.iterations) {
      save_checkpoint(trainer.state(), out / ("checkpoint_" + std::to_string(r.iteration)));
    }
  });
  save_checkpoint(trainer.state(), out);

  const int deg = trainer.sh_degree();
  const EvalReport tr = evaluate(trainer.state().model, data.frames, data.background, deg, &trainer.state().poses);
  std::printf("train: %zu frames, PSNR %.3f dB, SSIM %.4f, %zu active splats\n", data.frames.size(), tr.mean_psnr,
              tr.mean_ssim, trainer.state().model.splats.active_count());
  if (!held.empty()) {
    const Dataset hd = load_dataset(held, &data.rig);
    const EvalReport hr = evaluate(trainer.state().model, hd.frames, hd.background, deg);
    std::printf("heldout: %zu frames, PSNR %.3f dB, SSIM %.4f\n", hd.frames.size(), hr.mean_psnr, hr.mean_ssim);
  }
  return 0;
}

int cmd_render(const Config& c, const std::string& ckpt, const std::string& poses_path, const std::string& cams_path,
               const std::string& outdir) {
  const TrainState st = load_checkpoint(ckpt);
  const PoseSequence poses = load_poses(poses_path);
  const CameraSet cams = load_cameras(cams_path);
  if (poses.frames.empty()) throw InputError(poses_path + ": no frames");
  if (cams.cameras.size() != 1 && cams.cameras.size() != poses.frames.size()) {
    throw InputError(cams_path + ": " + std::to_string(cams.cameras.size()) + " cameras for " +
                     std::to_string(poses.frames.size()) + " frames (need 1 or equal counts)");
  }
  const int deg = static_cast<int>(c.integer("render.sh_degree"));
  if (deg < 0 || deg > 3) throw InputError("render.sh_degree must be in [0, 3]");
  fs::create_directories(outdir);
  for (std::size_t i = 0; i < poses.frames.size(); ++i) {
    const Camera& cam = cams.cameras[cams.cameras.size() == 1 ? 0 : i];
    const PoseParams pose = clamp_pose(st.model.tmpl, poses.frames[i]);
    save_png(render_frame(st.model, pose, cam, cams.background, deg), fs::path(outdir) / frame_name(i));
  }
  std::printf("rendered %zu frames to %s\n", poses.frames.size(), outdir.c_str());
  return 0;
}

int cmd_eval(const Config& c, const std::string& ckpt, std::string data_dir) {
  const TrainState st = load_checkpoint(ckpt);
  if (data_dir.empty()) data_dir = c.string("data.heldout");
  if (data_dir.empty()) data_dir = c.string("data.dataset");
  if (data_dir.empty()) throw InputError("no dataset given (--data or data.dataset)");
  const Dataset d = load_dataset(data_dir, &st.model.tmpl);
  const int deg = static_cast<int>(c.integer("render.sh_degree"));
  const EvalReport r = evaluate(st.model, d.frames, d.background, deg);
  std::printf("frame,psnr,ssim\n");
  for (std::size_t i = 0; i < r.psnr.size(); ++i) std::printf("%zu,%.4f,%.5f\n", i, r.psnr[i], r.ssim[i]);
  std::printf("mean,%.4f,%.5f\n", r.mean_psnr, r.mean_ssim);
  return 0;
}

int cmd_fit2d(const Config& c, const std::string& dir, const std::string& out) {
  const fs::path d(dir);
  const SkinnedTemplate rig = load_rig(d / "rig.json");
  const PoseSequence poses = load_poses(d / "poses.json");
  const CameraSet cams = load_cameras(d / "cameras.json");
  const auto kps = load_keypoints(d / "keypoints.json");
  if (poses.frames.size() != cams.cameras.size() || poses.frames.size() != kps.size()) {
    throw InputError(dir + ": poses, cameras and keypoints have different frame counts");
  }
  Fit2DConfig fc;
  fc.lr = c.real("fit2d.lr");
  fc.steps = static_cast<int>(c.integer("fit2d.steps"));
  fc.extrinsics = c.boolean("fit2d.extrinsics");

  // Frames sharing an identical initial pose are views of one instant.
  PoseSequence result = poses;
  std::vector<bool> done(poses.frames.size(), false);
  for (std::size_t i = 0; i < poses.frames.size(); ++i) {
    if (done[i]) continue;
    std::vector<std::size_t> group;
    std::vector<KeypointView> views;
    for (std::size_t j = i; j < poses.frames.size(); ++j) {
      const PoseParams& a = poses.frames[i];
      const PoseParams& b = poses.frames[j];
      bool same = a.beta == b.beta && a.psi == b.psi && a.global_rot == b.global_rot &&
                  a.global_trans == b.global_trans && a.theta.size() == b.theta.size();
      for (std::size_t k = 0; same && k < a.theta.size(); ++k) same = a.theta[k] == b.theta[k];
      if (!same) continue;
      done[j] = true;
      group.push_back(j);
      views.push_back(KeypointView{kps[j], cams.cameras[j]});
    }
    const Fit2DResult r = reprojection_fit(rig, poses.frames[i], views, fc);
    for (std::size_t j : group) result.frames[j] = r.pose;
    std::printf("frame %zu (%zu views): error %.6g -> %.6g px^2\n", i, group.size(), r.initial_error, r.final_error);
  }
  save_poses(result, out);
  return 0;
}

int cmd_stitch(const Config& c, const std::string& lib_dir, const std::vector<std::string>& tokens,
               const std::string& out) {
  StitchConfig sc;
  sc.omega = c.real("stitch.omega");
  sc.min_frames = static_cast<int>(c.integer("stitch.min_frames"));
  const GlossLibrary lib = GlossLibrary::load(lib_dir);
  const StitchResult r = stitch(tokens, lib, sc);
  export_animation(r.sequence, out);
  std::printf("%zu frames, %zu transitions, %zu skipped tokens\n", r.sequence.frames.size(), r.transitions.size(),
              r.skipped_tokens.size());
  return 0;
}

int cmd_make_synthetic(const Config& c, const std::string& out) {
  SyntheticConfig sc;
  sc.seed = static_cast<std::uint64_t>(c.integer("synthetic.seed"));
  sc.poses = static_cast<int>(c.integer("synthetic.poses"));
  sc.cameras = static_cast<int>(c.integer("synthetic.cameras"));
  sc.size = static_cast<int>(c.integer("synthetic.size"));
  sc.heldout_frames = static_cast<int>(c.integer("synthetic.heldout_frames"));
  make_synthetic(out, sc);
  std::printf("wrote %d frames to %s\n", sc.poses * sc.cameras, out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mesh-anchored Gaussian splatting avatars"};
  app.require_subcommand(1);

  std::string config;
  std::vector<std::string> overrides;
  std::string ckpt, poses, cameras, out, data, library;
  std::vector<std::string> tokens;

  auto* train = app.add_subcommand("train", "optimize an avatar on a dataset");
  add_common(train, config, overrides, "train");

  auto* render = app.add_subcommand("render", "render a checkpoint for a pose sequence");
  add_common(render, config, overrides, "render");
  render->add_option("--checkpoint", ckpt, "checkpoint directory")->required();
  render->add_option("--poses", poses, "poses.json or animation file")->required();
  render->add_option("--cameras", cameras, "cameras.json (one camera, or one per frame)")->required();
  render->add_option("--out", out, "output directory")->required();

  auto* eval = app.add_subcommand("eval", "PSNR and SSIM of a checkpoint on a dataset");
  add_common(eval, config, overrides, "eval");
  eval->add_option("--checkpoint", ckpt, "checkpoint directory")->required();
  eval->add_option("--data", data, "dataset directory");

  auto* fit = app.add_subcommand("fit2d", "refine poses against 2D keypoints");
  add_common(fit, config, overrides, "fit2d");
  fit->add_option("--data", data, "directory with rig.json, poses.json, cameras.json, keypoints.json")->required();
  fit->add_option("--out", out, "refined poses file")->required();

  auto* st = app.add_subcommand("stitch", "stitch glosses into an animation");
  add_common(st, config, overrides, "stitch");
  st->add_option("--library", library, "gloss directory with dictionary.json")->required();
  st->add_option("--out", out, "animation file")->required();
  st->add_option("tokens", tokens, "gloss tokens")->required();

  auto* syn = app.add_subcommand("make-synthetic", "write the synthetic toy dataset");
  add_common(syn, config, overrides, "make-synthetic");
  syn->add_option("--out", out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const Config c = build_config(config, overrides);
    if (*train) return cmd_train(c);
    if (*render) return cmd_render(c, ckpt, poses, cameras, out);
    if (*eval) return cmd_eval(c, ckpt, data);
    if (*fit) return cmd_fit2d(c, data, out);
    if (*st) return cmd_stitch(c, library, tokens, out);
    if (*syn) return cmd_make_synthetic(c, out);
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
