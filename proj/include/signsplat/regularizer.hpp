#pragma once
// Neighbourhood variance of splat attributes, displacement penalty and the
// SH degree schedule.

#include <array>
#include <cstdint>
#include <vector>

#include "signsplat/scene.hpp"

namespace signsplat {

struct Neighborhood {
  std::uint32_t center = 0;
  /// Storage indices; includes `center`.
  std::vector<std::uint32_t> members;
  Segment segment = Segment::Body;
};

struct RegWeights {
  double scale = 0.1;
  double rotation = 0.05;
  double color = 0.01;
  double opacity = 0.01;
  double disp = 1.0;
  std::array<double, 3> sh_schedule{0.7, 0.8, 0.9};
  /// Neighbourhood radius in the canonical pose, meters.
  SegmentValues radius{0.02, 0.008, 0.008};

  void validate() const;
};

/// Sum over members of the squared deviation from the member mean, summed
/// over dimensions. `grad` (optional) receives d/dvalue per member.
double variance_loss(const std::vector<Eigen::VectorXd>& values,
                     std::vector<Eigen::VectorXd>* grad = nullptr);
double variance_loss(const std::vector<double>& values);

/// One neighbourhood per active splat: active splats of the same segment on
/// the centre's face or faces sharing a vertex with it, within the segment
/// radius of the centre in the canonical pose.
std::vector<Neighborhood> build_neighborhoods(const AvatarModel& model, const RegWeights& w);

struct RegLoss {
  /// Weighted variance term, averaged over neighbourhoods.
  double variance = 0.0;
  /// Weighted displacement penalty.
  double displacement = 0.0;
  double total() const { return variance + displacement; }
};

/// Unweighted mean neighbourhood variance per attribute class
/// (scale, rotation, colour, opacity) over base attributes.
std::array<double, 4> variance_components(const AvatarModel& model,
                                          const std::vector<Neighborhood>& nbrs);

/// Regularizer value; gradients are added to `grad` when non-null.
RegLoss regularize(const AvatarModel& model, const std::vector<Neighborhood>& nbrs,
                   const RegWeights& w, ModelGrad* grad = nullptr);

/// sum max(0, |d| - cap(segment))^2 over original vertices.
double displacement_penalty(const DisplacementField& field, const std::vector<Segment>& segment,
                            const SegmentValues& caps, std::vector<double>* grad = nullptr);

/// Active SH degree: the number of schedule fractions reached by
/// iteration / total.
int sh_active_degree(long iteration, long total, const std::array<double, 3>& schedule);

}  // namespace signsplat
