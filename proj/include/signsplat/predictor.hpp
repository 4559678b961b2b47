#pragma once
// Pose-conditioned attribute predictor.
//
// A shared 1D convolution trunk runs over the splat sequence (storage order
// of the active splats). Each point carries six input channels: its
// canonical position x_c and the translation phi = x_c - x_posed. Two conv
// layers (32 channels, kernel 5, tanh) feed four per-point affine heads that
// emit residuals for log-scale (3), rotation (4), opacity logit (1) and the
// DC colour term (3).

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "signsplat/common.hpp"
#include "signsplat/splat_model.hpp"

namespace signsplat {

struct ParamBlock {
  std::string name;
  std::size_t offset = 0;
  std::vector<int> shape;

  std::size_t size() const;
};

class AttributePredictor {
 public:
  static constexpr int kInputs = 6;
  static constexpr int kHidden = 32;
  static constexpr int kKernel = 5;
  static constexpr int kPad = kKernel / 2;
  static constexpr int kOutputs = 11;
  // Residual row layout.
  static constexpr int kScaleRow = 0;
  static constexpr int kRotRow = 3;
  static constexpr int kOpacityRow = 7;
  static constexpr int kColorRow = 8;

  /// All weights zero.
  AttributePredictor();

  /// Trunk weights uniform in +-1/sqrt(fan_in) from `seed`; heads zero, so the
  /// initial residuals are exactly zero.
  static AttributePredictor initialized(std::uint64_t seed);

  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }

  /// Blocks in file/layer order: conv1.w, conv1.b, conv2.w, conv2.b,
  /// then weight/bias of the scale, rotation, opacity and colour heads.
  static const std::vector<ParamBlock>& layout();
  static std::size_t param_count();
  static const ParamBlock& block(const std::string& name);

  /// Activations kept for the backward pass. Channel-major with kPad zero
  /// columns on both sides where the next layer convolves.
  struct Cache {
    std::size_t n = 0;
    std::vector<double> input;   // kInputs x (n + 2 pad)
    std::vector<double> hidden1; // kHidden x (n + 2 pad)
    std::vector<double> hidden2; // kHidden x n
    std::vector<double> output;  // kOutputs x n

    double out(int row, std::size_t i) const { return output[row * n + i]; }
  };

  /// Residuals for n points; canonical and posed must have equal length.
  void forward(std::span<const Vec3> canonical, std::span<const Vec3> posed, Cache& cache) const;

  /// Given dL/doutput (kOutputs x n, channel-major), accumulates parameter
  /// gradients into d_params and input gradients into d_canonical/d_posed.
  void backward(const Cache& cache, std::span<const double> d_output, std::span<double> d_params,
                std::span<Vec3> d_canonical, std::span<Vec3> d_posed) const;

 private:
  std::vector<double> params_;
};

/// Adds predicted residuals to a base attribute set: log-scale, opacity and
/// DC colour add; rotation composes as normalize(1 + r) * normalize(base).
GaussianAttributes apply_residuals(const GaussianAttributes& base,
                                   const AttributePredictor::Cache& cache, std::size_t index);

/// Adjoint of apply_residuals. Writes dL/d(residual row) for point `index`
/// into d_output and accumulates dL/dbase into d_base.
void apply_residuals_backward(const GaussianAttributes& base, const AttributePredictor::Cache& cache,
                              std::size_t index, const GaussianAttributes& d_effective,
                              std::span<double> d_output, GaussianAttributes& d_base);

/// Effective attributes for a splat sequence given the canonical and posed
/// meshes. The sequence order is the order of `anchors`.
std::vector<GaussianAttributes> predict_attributes(const AttributePredictor& pred,
                                                   const PosedMesh& canonical,
                                                   const PosedMesh& posed,
                                                   std::span<const SplatAnchor> anchors,
                                                   std::span<const GaussianAttributes> base);

}  // namespace signsplat
