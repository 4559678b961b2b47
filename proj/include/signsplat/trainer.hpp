#pragma once
// Dataset loading, loss assembly, batched Adam training and evaluation.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <vector>

#include "signsplat/config.hpp"
#include "signsplat/density_control.hpp"
#include "signsplat/image.hpp"
#include "signsplat/optim.hpp"
#include "signsplat/regularizer.hpp"

namespace signsplat {

struct TrainingFrame {
  Image image;
  Camera camera;
  PoseParams pose;
  int id = 0;
};

struct Dataset {
  SkinnedTemplate rig;
  Vec3 background = Vec3::Zero();
  double fps = 30.0;
  std::vector<TrainingFrame> frames;
};

/// Reads rig.json, cameras.json, poses.json and frames/NNNN.png from `dir`.
/// When `rig` is given, a missing rig.json falls back to it. Throws
/// InputError naming the first failing file.
Dataset load_dataset(const std::filesystem::path& dir, const SkinnedTemplate* rig = nullptr);

struct LossWeights {
  double l1 = 0.8;
  double dssim = 0.2;
};

struct LossReport {
  double l1 = 0.0;
  double dssim = 0.0;
  double variance = 0.0;
  double displacement = 0.0;
  double total = 0.0;
  double psnr = 0.0;
  double ssim = 0.0;
};

/// l1, dssim = (1 - SSIM) / 2, psnr, ssim and total = w.l1 l1 + w.dssim dssim.
/// `grad` receives dtotal/dpred.
LossReport image_loss(const Image& pred, const Image& gt, const LossWeights& w, Image* grad = nullptr);

struct LearningRates {
  double opacity = 1e-2;
  double scale = 5e-3;
  double rotation = 5e-3;
  double sh = 2.5e-3;
  double anchor = 1e-3;
  double displacement = 1e-4;
  double predictor = 1e-3;
  double pose = 1e-5;
};

struct TrainConfig {
  long iterations = 2000;
  int batch = 4;
  std::uint64_t seed = 0;
  long log_interval = 10;
  long checkpoint_interval = 0;
  bool pose_refinement = true;
  bool use_predictor = true;
  double initial_opacity = 0.3;
  LossWeights loss;
  LearningRates lr;
  bool regularize = true;
  RegWeights reg;
  bool densify = true;
  DensifyPolicy density;
  PrunePolicy prune;
  SplatLimits limits;
  SegmentValues disp_caps = default_displacement_caps();
  AdamConfig adam;

  static TrainConfig from(const Config& c);
  void validate() const;
};

struct StepReport {
  /// Batch means of the image terms plus the regularizer.
  LossReport loss;
  /// Iteration count after the step.
  long iteration = 0;
  int batch = 0;
  std::size_t active_splats = 0;
  bool rolled_back = false;
  std::size_t densified = 0;
  std::size_t pruned = 0;
};

class Trainer {
 public:
  Trainer(const Dataset& data, const TrainConfig& cfg);
  /// Resumes from a loaded state.
  Trainer(const Dataset& data, const TrainConfig& cfg, TrainState state);

  /// One accumulate-and-update step on the next scheduled batch.
  StepReport step();
  /// One step on the given frame indices.
  StepReport step_on(const std::vector<std::size_t>& frames);

  /// Batch-mean loss and gradient for `frames` without updating anything.
  /// `pose_grads` (optional) receives one entry per listed frame.
  LossReport gradient(const std::vector<std::size_t>& frames, ModelGrad& grad,
                      std::vector<PoseGradient>* pose_grads = nullptr);

  /// Runs until cfg.iterations, calling `on_step` after every step.
  void run(const std::function<void(const StepReport&)>& on_step = {});

  TrainState& state() { return state_; }
  const TrainState& state() const { return state_; }
  const TrainConfig& config() const { return cfg_; }
  int sh_degree() const;
  const std::vector<Neighborhood>& neighborhoods() const { return nbrs_; }

 private:
  std::vector<std::size_t> next_batch();
  void apply_update(const ModelGrad& grad, const std::vector<std::size_t>& frames,
                    const std::vector<PoseGradient>& pose_grads);
  void density_step(StepReport& report);
  void rebuild_neighborhoods();

  const Dataset& data_;
  TrainConfig cfg_;
  TrainState state_;
  std::vector<Neighborhood> nbrs_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::uint64_t rng_state_ = 0;
};

struct EvalReport {
  std::vector<double> psnr;
  std::vector<double> ssim;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
};

/// Renders every frame (with `poses` overriding frame poses when given).
EvalReport evaluate(const AvatarModel& model, const std::vector<TrainingFrame>& frames,
                    const Vec3& background, int sh_degree,
                    const std::vector<PoseParams>* poses = nullptr);

/// CSV rows: iteration,batch,l1,dssim,var,total,psnr,ssim,active_splats.
class MetricsLog {
 public:
  explicit MetricsLog(const std::filesystem::path& path);
  void write(const StepReport& r);

 private:
  std::ofstream out_;
};

}  // namespace signsplat
