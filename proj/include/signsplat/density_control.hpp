#pragma once
// Face-anchored densification and opacity/scale pruning.

#include <cstdint>
#include <vector>

#include "signsplat/scene.hpp"

namespace signsplat {

struct DensifyPolicy {
  double grad_threshold = 2e-4;
  long interval = 500;
  long start = 500;
  long stop = 15000;
  std::size_t max_splats = 200000;
  /// Realized-scale divisor for children.
  double scale_divisor = 1.6;

  void validate() const;
};

struct PrunePolicy {
  double opacity_eps = 0.005;
  /// Original-vertex splats get this opacity instead of being deactivated.
  double reset_opacity = 0.1;

  void validate() const;
};

/// Running mean of view-space position-gradient magnitudes per splat.
struct GradAccumulator {
  std::vector<double> sum;
  std::vector<std::uint32_t> count;

  void resize(std::size_t n);
  void reset(std::uint32_t id);
  void reset_all();
  void add(const ModelGrad& grad);
  double mean(std::uint32_t id) const { return count[id] ? sum[id] / count[id] : 0.0; }
};

/// Splats with mean gradient above the threshold, by magnitude descending,
/// ties by id ascending. Inactive splats are never selected.
std::vector<std::uint32_t> select_candidates(const GradAccumulator& acc, const DensifyPolicy& policy,
                                             const std::vector<std::uint8_t>& active);

struct DensifyResult {
  std::vector<std::uint32_t> created;
  std::size_t skipped_candidates = 0;
};

/// Adds one child per face around each candidate's nearest face vertex
/// (largest anchor coefficient) at the face centroid, copying attributes
/// with realized scale divided by policy.scale_divisor. Candidates whose
/// children would exceed max_splats active splats are skipped.
DensifyResult densify(AvatarModel& model, const std::vector<std::uint32_t>& candidates,
                      const DensifyPolicy& policy, GradAccumulator& acc);

struct PruneResult {
  std::vector<std::uint32_t> deactivated;
  std::vector<std::uint32_t> reset;
};

/// Deactivates densified splats with opacity below eps or a saturated scale;
/// original-vertex splats are kept and their opacity reset instead.
PruneResult prune(AvatarModel& model, const PrunePolicy& policy);

/// Drops inactive splats from storage; returns old index -> new index
/// (-1 for removed).
std::vector<long> compact(AvatarModel& model);

}  // namespace signsplat
