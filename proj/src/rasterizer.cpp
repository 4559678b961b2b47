#include "signsplat/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "signsplat/kernels/kernels.hpp"

namespace signsplat {

void Camera::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw InputError("camera focal lengths must be positive");
  if (width < 1 || height < 1) throw InputError("camera image size must be at least 1x1");
  if (!(near > 0.0)) throw InputError("camera near plane must be positive");
  if (!rot.allFinite() || !trans.allFinite() || !std::isfinite(cx) || !std::isfinite(cy)) {
    throw InputError("camera parameters must be finite");
  }
  const double ortho = (rot * rot.transpose() - Mat3::Identity()).norm();
  if (ortho > 1e-6 || rot.determinant() < 0.0) throw InputError("camera rotation is not a rotation");
}

Vec2 Camera::project_point(const Vec3& x) const {
  const Vec3 t = to_camera(x);
  return Vec2(fx * t.x() / t.z() + cx, fy * t.y() / t.z() + cy);
}

namespace {

// Rows of the projection Jacobian at camera-space point t.
Eigen::Matrix<double, 2, 3> projection_jacobian(const Camera& cam, const Vec3& t) {
  const double iz = 1.0 / t.z();
  Eigen::Matrix<double, 2, 3> j;
  j << cam.fx * iz, 0.0, -cam.fx * t.x() * iz * iz, 0.0, cam.fy * iz, -cam.fy * t.y() * iz * iz;
  return j;
}

bool outside_margin(const Vec2& m, const Camera& cam) {
  const double hx = 0.5 * kFrustumMargin * cam.width;
  const double hy = 0.5 * kFrustumMargin * cam.height;
  return std::abs(m.x() - 0.5 * cam.width) > hx || std::abs(m.y() - 0.5 * cam.height) > hy;
}

bool finite_splat(const Splat2D& s) {
  return s.mean.allFinite() && s.conic.allFinite() && s.cov.allFinite() && s.color.allFinite() &&
         std::isfinite(s.opacity) && std::isfinite(s.depth);
}

// The footprint is shifted so it reaches exactly zero at the cutoff; this
// keeps the image continuous in every splat parameter.
const double kCutoffValue = std::exp(kPowerCutoff);
const double kCutoffScale = 1.0 / (1.0 - kCutoffValue);

double footprint(double power) { return (std::exp(power) - kCutoffValue) * kCutoffScale; }

struct TileGrid {
  int tiles_x = 0, tiles_y = 0;
  TileGrid(int w, int h) : tiles_x((w + kTileSize - 1) / kTileSize), tiles_y((h + kTileSize - 1) / kTileSize) {}
  int count() const { return tiles_x * tiles_y; }
};

}  // namespace

std::optional<Splat2D> project(const Vec3& mu, const Mat3& sigma, const Vec3& color, double opacity,
                               std::uint32_t id, const Camera& cam) {
  const Vec3 t = cam.to_camera(mu);
  if (!(t.z() >= cam.near)) return std::nullopt;
  Splat2D s;
  s.id = id;
  s.mean = Vec2(cam.fx * t.x() / t.z() + cam.cx, cam.fy * t.y() / t.z() + cam.cy);
  if (outside_margin(s.mean, cam)) return std::nullopt;
  const Eigen::Matrix<double, 2, 3> tw = projection_jacobian(cam, t) * cam.rot;
  s.cov = tw * sigma * tw.transpose();
  s.cov(0, 1) = s.cov(1, 0) = 0.5 * (s.cov(0, 1) + s.cov(1, 0));
  s.cov(0, 0) += kCovInflation;
  s.cov(1, 1) += kCovInflation;
  const double det = s.cov(0, 0) * s.cov(1, 1) - s.cov(0, 1) * s.cov(0, 1);
  if (!(det > 0.0)) return std::nullopt;
  s.conic = Vec3(s.cov(1, 1) / det, -s.cov(0, 1) / det, s.cov(0, 0) / det);
  s.depth = t.z();
  s.color = color;
  s.opacity = opacity;
  return s;
}

std::optional<Splat2D> project(const WorldGaussian& g, const Camera& cam, int sh_degree,
                               std::uint32_t id) {
  Vec3 dir = g.mu - cam.center();
  const double n = dir.norm();
  dir = n > 0.0 ? Vec3(dir / n) : Vec3(0.0, 0.0, 1.0);
  return project(g.mu, g.sigma, eval_sh(g.sh, dir, sh_degree), g.opacity, id, cam);
}

void project_backward(const Vec3& mu, const Mat3& sigma, const Camera& cam, const Vec2& d_mean,
                      const Vec3& d_conic, Vec3& d_mu, Mat3& d_sigma) {
  const Vec3 t = cam.to_camera(mu);
  const Eigen::Matrix<double, 2, 3> j = projection_jacobian(cam, t);
  const Eigen::Matrix<double, 2, 3> tw = j * cam.rot;
  Mat2 cov = tw * sigma * tw.transpose();
  cov(0, 1) = cov(1, 0) = 0.5 * (cov(0, 1) + cov(1, 0));
  cov(0, 0) += kCovInflation;
  cov(1, 1) += kCovInflation;
  const Mat2 q = cov.inverse();
  Mat2 g;
  g << d_conic[0], 0.5 * d_conic[1], 0.5 * d_conic[1], d_conic[2];
  const Mat2 d_cov = -q * g * q;

  d_sigma = tw.transpose() * d_cov * tw;
  const Eigen::Matrix<double, 2, 3> d_tw = 2.0 * d_cov * tw * sigma;
  const Eigen::Matrix<double, 2, 3> d_j = d_tw * cam.rot.transpose();

  const double iz = 1.0 / t.z(), iz2 = iz * iz, iz3 = iz2 * iz;
  Vec3 d_t;
  d_t.x() = d_mean.x() * cam.fx * iz - d_j(0, 2) * cam.fx * iz2;
  d_t.y() = d_mean.y() * cam.fy * iz - d_j(1, 2) * cam.fy * iz2;
  d_t.z() = -d_mean.x() * cam.fx * t.x() * iz2 - d_mean.y() * cam.fy * t.y() * iz2 -
            d_j(0, 0) * cam.fx * iz2 + d_j(0, 2) * 2.0 * cam.fx * t.x() * iz3 -
            d_j(1, 1) * cam.fy * iz2 + d_j(1, 2) * 2.0 * cam.fy * t.y() * iz3;
  d_mu = cam.rot.transpose() * d_t;
}

RenderOutput render(const std::vector<Splat2D>& splats, const Camera& cam, const Vec3& background,
                    RenderState* state) {
  cam.validate();
  const int w = cam.width, h = cam.height;
  const TileGrid grid(w, h);
  RenderOutput out;
  out.image = Image(w, h);
  out.alpha.assign(static_cast<std::size_t>(w) * h, 0.0);

  std::vector<std::uint32_t> order;
  order.reserve(splats.size());
  for (std::uint32_t i = 0; i < splats.size(); ++i) {
    if (finite_splat(splats[i])) {
      order.push_back(i);
    } else {
      ++out.skipped;
    }
  }
  std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    if (splats[a].depth != splats[b].depth) return splats[a].depth < splats[b].depth;
    return splats[a].id < splats[b].id;
  });

  std::vector<std::vector<std::uint32_t>> tiles(grid.count());
  const double reach = std::sqrt(-2.0 * kPowerCutoff) * (1.0 + 1e-9);
  for (std::uint32_t i : order) {
    const Splat2D& s = splats[i];
    const double rx = reach * std::sqrt(s.cov(0, 0));
    const double ry = reach * std::sqrt(s.cov(1, 1));
    const int x0 = std::max(0, static_cast<int>(std::floor(s.mean.x() - rx - 0.5)));
    const int x1 = std::min(w - 1, static_cast<int>(std::ceil(s.mean.x() + rx - 0.5)));
    const int y0 = std::max(0, static_cast<int>(std::floor(s.mean.y() - ry - 0.5)));
    const int y1 = std::min(h - 1, static_cast<int>(std::ceil(s.mean.y() + ry - 0.5)));
    if (x0 > x1 || y0 > y1) continue;
    for (int ty = y0 / kTileSize; ty <= y1 / kTileSize; ++ty) {
      for (int tx = x0 / kTileSize; tx <= x1 / kTileSize; ++tx) {
        tiles[ty * grid.tiles_x + tx].push_back(i);
      }
    }
  }

  std::vector<double> final_t(static_cast<std::size_t>(w) * h, 1.0);
  std::vector<std::uint32_t> n_proc(static_cast<std::size_t>(w) * h, 0);
  const auto& k = kernels::active();

#pragma omp parallel for schedule(dynamic)
  for (int tile = 0; tile < grid.count(); ++tile) {
    const int tx0 = (tile % grid.tiles_x) * kTileSize;
    const int ty0 = (tile / grid.tiles_x) * kTileSize;
    const int tw = std::min(kTileSize, w - tx0);
    const int th = std::min(kTileSize, h - ty0);
    const auto& list = tiles[tile];
    double power[kTileSize];
    for (int py = ty0; py < ty0 + th; ++py) {
      double t_row[kTileSize];
      double c_row[kTileSize][3] = {};
      bool done[kTileSize] = {};
      std::uint32_t last[kTileSize] = {};
      std::fill(t_row, t_row + tw, 1.0);
      int remaining = tw;
      const double yc = py + 0.5;
      for (std::uint32_t li = 0; li < list.size() && remaining > 0; ++li) {
        const Splat2D& s = splats[list[li]];
        const double dy = s.mean.y() - yc;
        if (0.5 * dy * dy / s.cov(1, 1) > -kPowerCutoff + 1e-6) continue;
        k.gaussian_power_row(tw, tx0 + 0.5, yc, s.mean.x(), s.mean.y(), s.conic[0], s.conic[1],
                             s.conic[2], power);
        for (int i = 0; i < tw; ++i) {
          if (done[i] || power[i] < kPowerCutoff || power[i] > 0.0) continue;
          const double alpha = std::min(kMaxAlpha, s.opacity * footprint(power[i]));
          const double next_t = t_row[i] * (1.0 - alpha);
          if (next_t < kMinTransmittance) {
            done[i] = true;
            --remaining;
            continue;
          }
          const double wgt = alpha * t_row[i];
          for (int c = 0; c < 3; ++c) c_row[i][c] += s.color[c] * wgt;
          t_row[i] = next_t;
          last[i] = li + 1;
        }
      }
      for (int i = 0; i < tw; ++i) {
        const std::size_t p = static_cast<std::size_t>(py) * w + tx0 + i;
        for (int c = 0; c < 3; ++c) out.image.data[p * 3 + c] = c_row[i][c] + t_row[i] * background[c];
        out.alpha[p] = 1.0 - t_row[i];
        final_t[p] = t_row[i];
        n_proc[p] = last[i];
      }
    }
  }

  if (state) {
    state->width = w;
    state->height = h;
    state->background = background;
    state->splats = splats;
    state->tile_lists = std::move(tiles);
    state->final_t = std::move(final_t);
    state->n_processed = std::move(n_proc);
    state->valid = true;
  }
  return out;
}

std::vector<Splat2DGrad> render_backward(const RenderState& state, const Image& d_image) {
  if (!state.valid) throw InputError("render_backward called without a matching forward pass");
  if (d_image.width != state.width || d_image.height != state.height) {
    throw InputError("render_backward: gradient image size does not match the forward render");
  }
  const int w = state.width, h = state.height;
  const TileGrid grid(w, h);
  const auto& splats = state.splats;
  const auto& k = kernels::active();
  const Vec3& bg = state.background;

  std::vector<std::vector<Splat2DGrad>> tile_grads(grid.count());

#pragma omp parallel for schedule(dynamic)
  for (int tile = 0; tile < grid.count(); ++tile) {
    const auto& list = state.tile_lists[tile];
    auto& grads = tile_grads[tile];
    grads.assign(list.size(), Splat2DGrad{});
    if (list.empty()) continue;
    const int tx0 = (tile % grid.tiles_x) * kTileSize;
    const int ty0 = (tile / grid.tiles_x) * kTileSize;
    const int tw = std::min(kTileSize, w - tx0);
    const int th = std::min(kTileSize, h - ty0);
    double power[kTileSize];
    for (int py = ty0; py < ty0 + th; ++py) {
      const double yc = py + 0.5;
      for (int i = 0; i < tw; ++i) {
        const int px = tx0 + i;
        const std::size_t p = static_cast<std::size_t>(py) * w + px;
        const Vec3 dpix(d_image.data[p * 3], d_image.data[p * 3 + 1], d_image.data[p * 3 + 2]);
        if (dpix.isZero(0.0)) continue;
        const double t_final = state.final_t[p];
        double t = t_final;
        Vec3 accum = Vec3::Zero();
        Vec3 last_color = Vec3::Zero();
        double last_alpha = 0.0;
        const double bg_dot = bg.dot(dpix);
        for (std::uint32_t li = state.n_processed[p]; li-- > 0;) {
          const Splat2D& s = splats[list[li]];
          const double dy = s.mean.y() - yc;
          if (0.5 * dy * dy / s.cov(1, 1) > -kPowerCutoff + 1e-6) continue;
          k.gaussian_power_row(1, px + 0.5, yc, s.mean.x(), s.mean.y(), s.conic[0], s.conic[1],
                               s.conic[2], power);
          const double pw = power[0];
          if (pw < kPowerCutoff || pw > 0.0) continue;
          const double gval = footprint(pw);
          const double raw_alpha = s.opacity * gval;
          const double alpha = std::min(kMaxAlpha, raw_alpha);
          t = t / (1.0 - alpha);
          Splat2DGrad& g = grads[li];
          g.d_color += alpha * t * dpix;
          accum = last_alpha * last_color + (1.0 - last_alpha) * accum;
          last_color = s.color;
          last_alpha = alpha;
          double d_alpha = (s.color - accum).dot(dpix) * t;
          d_alpha += -t_final / (1.0 - alpha) * bg_dot;
          if (raw_alpha >= kMaxAlpha) continue;
          g.d_opacity += gval * d_alpha;
          const double d_power = d_alpha * s.opacity * std::exp(pw) * kCutoffScale;
          const double dx = s.mean.x() - (px + 0.5);
          g.d_mean.x() += -d_power * (s.conic[0] * dx + s.conic[1] * dy);
          g.d_mean.y() += -d_power * (s.conic[2] * dy + s.conic[1] * dx);
          g.d_conic[0] += -0.5 * d_power * dx * dx;
          g.d_conic[1] += -d_power * dx * dy;
          g.d_conic[2] += -0.5 * d_power * dy * dy;
        }
      }
    }
  }

  std::vector<Splat2DGrad> result(splats.size());
  for (int tile = 0; tile < grid.count(); ++tile) {
    const auto& list = state.tile_lists[tile];
    for (std::size_t li = 0; li < list.size(); ++li) {
      Splat2DGrad& dst = result[list[li]];
      const Splat2DGrad& src = tile_grads[tile][li];
      dst.d_mean += src.d_mean;
      dst.d_conic += src.d_conic;
      dst.d_color += src.d_color;
      dst.d_opacity += src.d_opacity;
    }
  }
  return result;
}

}  // namespace signsplat
