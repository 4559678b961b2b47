#pragma once
// Adam optimizer state and the full training state that checkpoints persist.

#include <span>
#include <string>
#include <vector>

#include "signsplat/density_control.hpp"
#include "signsplat/scene.hpp"

namespace signsplat {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamMoments {
  std::string name;
  std::vector<double> m;
  std::vector<double> v;

  void resize(std::size_t n) {
    m.resize(n, 0.0);
    v.resize(n, 0.0);
  }
};

/// Moments per parameter group plus the shared step counter.
struct AdamState {
  long step = 0;
  std::vector<AdamMoments> groups;

  AdamMoments& group(const std::string& name);
  const AdamMoments* find(const std::string& name) const;
};

/// One Adam update of a single element at step t (1-based). Elements with an
/// exactly zero gradient are left untouched, moments included.
inline void adam_update(double& param, double grad, double& m, double& v, double lr, long t,
                        const AdamConfig& cfg) {
  if (grad == 0.0) return;
  m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
  v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad * grad;
  const double mhat = m / (1.0 - std::pow(cfg.beta1, static_cast<double>(t)));
  const double vhat = v / (1.0 - std::pow(cfg.beta2, static_cast<double>(t)));
  param -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
}

/// Vector form of adam_update.
void adam_update(std::span<double> params, std::span<const double> grads, AdamMoments& mom, double lr,
                 long t, const AdamConfig& cfg);

struct TrainState {
  AvatarModel model;
  /// Per training frame; refined when pose refinement is on.
  std::vector<PoseParams> poses;
  AdamState adam;
  GradAccumulator accumulator;
  long iteration = 0;
};

/// Splat-indexed optimizer groups (and their element count per splat).
const std::vector<std::pair<std::string, int>>& splat_groups();

/// Drops inactive splats from the model and remaps the splat-indexed Adam
/// moments and accumulator accordingly.
void compact_state(TrainState& state);

}  // namespace signsplat
