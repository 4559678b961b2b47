#include "signsplat/predictor.hpp"

#include <cmath>
#include <random>

#include "signsplat/kernels/kernels.hpp"
#include "signsplat/rotation.hpp"

namespace signsplat {

std::size_t ParamBlock::size() const {
  std::size_t s = 1;
  for (int d : shape) s *= static_cast<std::size_t>(d);
  return s;
}

namespace {

using P = AttributePredictor;

std::vector<ParamBlock> make_layout() {
  std::vector<ParamBlock> blocks;
  std::size_t offset = 0;
  auto add = [&](std::string name, std::vector<int> shape) {
    ParamBlock b{std::move(name), offset, std::move(shape)};
    offset += b.size();
    blocks.push_back(std::move(b));
  };
  add("conv1.weight", {P::kHidden, P::kInputs, P::kKernel});
  add("conv1.bias", {P::kHidden});
  add("conv2.weight", {P::kHidden, P::kHidden, P::kKernel});
  add("conv2.bias", {P::kHidden});
  add("head.scale.weight", {3, P::kHidden});
  add("head.scale.bias", {3});
  add("head.rotation.weight", {4, P::kHidden});
  add("head.rotation.bias", {4});
  add("head.opacity.weight", {1, P::kHidden});
  add("head.opacity.bias", {1});
  add("head.color.weight", {3, P::kHidden});
  add("head.color.bias", {3});
  return blocks;
}

struct HeadRow {
  std::size_t weight;  // offset of the row's kHidden weights
  std::size_t bias;
};

std::array<HeadRow, P::kOutputs> head_rows() {
  std::array<HeadRow, P::kOutputs> rows{};
  const char* names[4] = {"scale", "rotation", "opacity", "color"};
  int row = 0;
  for (const char* n : names) {
    const ParamBlock& w = P::block(std::string("head.") + n + ".weight");
    const ParamBlock& b = P::block(std::string("head.") + n + ".bias");
    for (int r = 0; r < w.shape[0]; ++r, ++row) {
      rows[row] = {w.offset + static_cast<std::size_t>(r) * P::kHidden, b.offset + r};
    }
  }
  return rows;
}

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace

const std::vector<ParamBlock>& AttributePredictor::layout() {
  static const std::vector<ParamBlock> blocks = make_layout();
  return blocks;
}

std::size_t AttributePredictor::param_count() {
  const auto& l = layout();
  return l.back().offset + l.back().size();
}

const ParamBlock& AttributePredictor::block(const std::string& name) {
  for (const auto& b : layout()) {
    if (b.name == name) return b;
  }
  throw InputError("predictor has no parameter block '" + name + "'");
}

AttributePredictor::AttributePredictor() : params_(param_count(), 0.0) {}

AttributePredictor AttributePredictor::initialized(std::uint64_t seed) {
  AttributePredictor p;
  std::mt19937_64 rng(seed);
  for (const char* name : {"conv1.weight", "conv2.weight"}) {
    const ParamBlock& b = block(name);
    const double bound = 1.0 / std::sqrt(static_cast<double>(b.shape[1] * b.shape[2]));
    for (std::size_t i = 0; i < b.size(); ++i) {
      p.params_[b.offset + i] = (2.0 * uniform01(rng) - 1.0) * bound;
    }
  }
  return p;
}

void AttributePredictor::forward(std::span<const Vec3> canonical, std::span<const Vec3> posed,
                                 Cache& cache) const {
  if (canonical.size() != posed.size()) {
    throw InputError("predictor: canonical and posed point counts differ");
  }
  const auto& k = kernels::active();
  const std::size_t n = canonical.size();
  const std::size_t np = n + 2 * kPad;
  cache.n = n;
  cache.input.assign(kInputs * np, 0.0);
  cache.hidden1.assign(kHidden * np, 0.0);
  cache.hidden2.assign(kHidden * n, 0.0);
  cache.output.assign(kOutputs * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 phi = canonical[i] - posed[i];
    for (int c = 0; c < 3; ++c) {
      cache.input[c * np + kPad + i] = canonical[i][c];
      cache.input[(3 + c) * np + kPad + i] = phi[c];
    }
  }
  if (n == 0) return;

  const ParamBlock& w1 = block("conv1.weight");
  const ParamBlock& b1 = block("conv1.bias");
  const ParamBlock& w2 = block("conv2.weight");
  const ParamBlock& b2 = block("conv2.bias");

  for (int o = 0; o < kHidden; ++o) {
    double* row = &cache.hidden1[o * np + kPad];
    std::fill(row, row + n, params_[b1.offset + o]);
    for (int c = 0; c < kInputs; ++c) {
      for (int t = 0; t < kKernel; ++t) {
        const double w = params_[w1.offset + (o * kInputs + c) * kKernel + t];
        k.axpy(n, w, &cache.input[c * np + t], row);
      }
    }
    for (std::size_t i = 0; i < n; ++i) row[i] = std::tanh(row[i]);
  }
  for (int o = 0; o < kHidden; ++o) {
    double* row = &cache.hidden2[o * n];
    std::fill(row, row + n, params_[b2.offset + o]);
    for (int c = 0; c < kHidden; ++c) {
      for (int t = 0; t < kKernel; ++t) {
        const double w = params_[w2.offset + (o * kHidden + c) * kKernel + t];
        k.axpy(n, w, &cache.hidden1[c * np + t], row);
      }
    }
    for (std::size_t i = 0; i < n; ++i) row[i] = std::tanh(row[i]);
  }
  static const auto rows = head_rows();
  for (int j = 0; j < kOutputs; ++j) {
    double* row = &cache.output[j * n];
    std::fill(row, row + n, params_[rows[j].bias]);
    for (int c = 0; c < kHidden; ++c) {
      const double w = params_[rows[j].weight + c];
      if (w != 0.0) k.axpy(n, w, &cache.hidden2[c * n], row);
    }
  }
}

void AttributePredictor::backward(const Cache& cache, std::span<const double> d_output,
                                  std::span<double> d_params, std::span<Vec3> d_canonical,
                                  std::span<Vec3> d_posed) const {
  const auto& k = kernels::active();
  const std::size_t n = cache.n;
  if (n == 0) return;
  const std::size_t np = n + 2 * kPad;
  static const auto rows = head_rows();

  // Heads.
  std::vector<double> d_h2(kHidden * n, 0.0);
  for (int j = 0; j < kOutputs; ++j) {
    const double* g = &d_output[j * n];
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += g[i];
    d_params[rows[j].bias] += sum;
    for (int c = 0; c < kHidden; ++c) {
      d_params[rows[j].weight + c] += k.dot(n, g, &cache.hidden2[c * n]);
      const double w = params_[rows[j].weight + c];
      if (w != 0.0) k.axpy(n, w, g, &d_h2[c * n]);
    }
  }

  // conv2.
  const ParamBlock& w1 = block("conv1.weight");
  const ParamBlock& b1 = block("conv1.bias");
  const ParamBlock& w2 = block("conv2.weight");
  const ParamBlock& b2 = block("conv2.bias");
  for (std::size_t i = 0; i < d_h2.size(); ++i) {
    const double h = cache.hidden2[i];
    d_h2[i] *= 1.0 - h * h;
  }
  std::vector<double> d_h1(kHidden * np, 0.0);
  for (int o = 0; o < kHidden; ++o) {
    const double* g = &d_h2[o * n];
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += g[i];
    d_params[b2.offset + o] += sum;
    for (int c = 0; c < kHidden; ++c) {
      for (int t = 0; t < kKernel; ++t) {
        const std::size_t wi = w2.offset + (o * kHidden + c) * kKernel + t;
        d_params[wi] += k.dot(n, g, &cache.hidden1[c * np + t]);
        k.axpy(n, params_[wi], g, &d_h1[c * np + t]);
      }
    }
  }

  // conv1.
  std::vector<double> d_pre1(kHidden * n);
  for (int c = 0; c < kHidden; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      const double h = cache.hidden1[c * np + kPad + i];
      d_pre1[c * n + i] = d_h1[c * np + kPad + i] * (1.0 - h * h);
    }
  }
  std::vector<double> d_in(kInputs * np, 0.0);
  for (int o = 0; o < kHidden; ++o) {
    const double* g = &d_pre1[o * n];
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += g[i];
    d_params[b1.offset + o] += sum;
    for (int c = 0; c < kInputs; ++c) {
      for (int t = 0; t < kKernel; ++t) {
        const std::size_t wi = w1.offset + (o * kInputs + c) * kKernel + t;
        d_params[wi] += k.dot(n, g, &cache.input[c * np + t]);
        k.axpy(n, params_[wi], g, &d_in[c * np + t]);
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) {
      const double d_pos = d_in[c * np + kPad + i];
      const double d_phi = d_in[(3 + c) * np + kPad + i];
      d_canonical[i][c] += d_pos + d_phi;
      d_posed[i][c] -= d_phi;
    }
  }
}

GaussianAttributes apply_residuals(const GaussianAttributes& base,
                                   const AttributePredictor::Cache& cache, std::size_t i) {
  using AP = AttributePredictor;
  GaussianAttributes out = base;
  for (int c = 0; c < 3; ++c) out.log_scale[c] = base.log_scale[c] + cache.out(AP::kScaleRow + c, i);
  const Quat raw(1.0 + cache.out(AP::kRotRow, i), cache.out(AP::kRotRow + 1, i),
                 cache.out(AP::kRotRow + 2, i), cache.out(AP::kRotRow + 3, i));
  out.rotation = quat_mul(raw / raw.norm(), base.rotation / base.rotation.norm());
  out.opacity_logit = base.opacity_logit + cache.out(AP::kOpacityRow, i);
  for (int c = 0; c < 3; ++c) out.sh[c] = base.sh[c] + cache.out(AP::kColorRow + c, i);
  return out;
}

void apply_residuals_backward(const GaussianAttributes& base, const AttributePredictor::Cache& cache,
                              std::size_t i, const GaussianAttributes& d_eff,
                              std::span<double> d_output, GaussianAttributes& d_base) {
  using AP = AttributePredictor;
  const std::size_t n = cache.n;
  for (int c = 0; c < 3; ++c) {
    d_output[(AP::kScaleRow + c) * n + i] += d_eff.log_scale[c];
    d_base.log_scale[c] += d_eff.log_scale[c];
  }
  const Quat raw(1.0 + cache.out(AP::kRotRow, i), cache.out(AP::kRotRow + 1, i),
                 cache.out(AP::kRotRow + 2, i), cache.out(AP::kRotRow + 3, i));
  const Quat a = raw / raw.norm();
  const Quat b = base.rotation / base.rotation.norm();
  const Quat d_a = quat_mul(d_eff.rotation, quat_conj(b));
  const Quat d_b = quat_mul(quat_conj(a), d_eff.rotation);
  const Quat d_raw = normalize_backward(raw, d_a);
  for (int c = 0; c < 4; ++c) d_output[(AP::kRotRow + c) * n + i] += d_raw[c];
  d_base.rotation += normalize_backward(base.rotation, d_b);
  d_output[AP::kOpacityRow * n + i] += d_eff.opacity_logit;
  d_base.opacity_logit += d_eff.opacity_logit;
  for (int c = 0; c < 3; ++c) d_output[(AP::kColorRow + c) * n + i] += d_eff.sh[c];
  for (int v = 0; v < kShValues; ++v) d_base.sh[v] += d_eff.sh[v];
}

std::vector<GaussianAttributes> predict_attributes(const AttributePredictor& pred,
                                                   const PosedMesh& canonical,
                                                   const PosedMesh& posed,
                                                   std::span<const SplatAnchor> anchors,
                                                   std::span<const GaussianAttributes> base) {
  if (canonical.vertices.size() != posed.vertices.size() ||
      canonical.faces.size() != posed.faces.size()) {
    throw InputError("predict_attributes: canonical and posed meshes differ in topology");
  }
  if (anchors.size() != base.size()) {
    throw InputError("predict_attributes: anchor and attribute counts differ");
  }
  std::vector<Vec3> xc(anchors.size()), xp(anchors.size());
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    xc[i] = anchor_position(anchors[i], canonical);
    xp[i] = anchor_position(anchors[i], posed);
  }
  AttributePredictor::Cache cache;
  pred.forward(xc, xp, cache);
  std::vector<GaussianAttributes> out(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) out[i] = apply_residuals(base[i], cache, i);
  return out;
}

}  // namespace signsplat
