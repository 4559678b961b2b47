#include "signsplat/metrics.hpp"

#include <array>
#include <cmath>

#include "signsplat/kernels/kernels.hpp"

namespace signsplat {

namespace {

void require_same(const Image& a, const Image& b, const char* what) {
  if (!a.same_shape(b)) {
    throw InputError(std::string(what) + ": image sizes differ (" + std::to_string(a.width) + "x" +
                     std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                     std::to_string(b.height) + ")");
  }
}

const std::array<double, 2 * kSsimRadius + 1>& window_taps() {
  static const auto taps = [] {
    std::array<double, 2 * kSsimRadius + 1> t{};
    double sum = 0.0;
    for (int i = -kSsimRadius; i <= kSsimRadius; ++i) {
      t[i + kSsimRadius] = std::exp(-(i * i) / (2.0 * kSsimSigma * kSsimSigma));
      sum += t[i + kSsimRadius];
    }
    for (double& v : t) v /= sum;
    return t;
  }();
  return taps;
}

}  // namespace

void gaussian_blur_plane(const double* src, int width, int height, double* dst) {
  const auto& k = kernels::active();
  const auto& taps = window_taps();
  constexpr int r = kSsimRadius;
  const std::size_t w = static_cast<std::size_t>(width);
  const std::size_t h = static_cast<std::size_t>(height);

  std::vector<double> row(w + 2 * r, 0.0);
  std::vector<double> mid((h + 2 * r) * w, 0.0);
  for (std::size_t y = 0; y < h; ++y) {
    std::copy(src + y * w, src + (y + 1) * w, row.begin() + r);
    k.correlate_row(w, row.data(), taps.data(), r, &mid[(y + r) * w]);
  }
  k.correlate_cols(w, h, w, mid.data(), taps.data(), r, dst, w);
}

double l1_loss(const Image& pred, const Image& gt, Image* grad) {
  require_same(pred, gt, "l1_loss");
  const double n = static_cast<double>(pred.data.size());
  double sum = 0.0;
  if (grad) *grad = Image(pred.width, pred.height);
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const double d = pred.data[i] - gt.data[i];
    sum += std::abs(d);
    if (grad) grad->data[i] = d > 0.0 ? 1.0 / n : (d < 0.0 ? -1.0 / n : 0.0);
  }
  return sum / n;
}

double mse(const Image& a, const Image& b) {
  require_same(a, b, "mse");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    sum += d * d;
  }
  return sum / static_cast<double>(a.data.size());
}

double psnr(const Image& a, const Image& b) {
  const double m = mse(a, b);
  if (m < 1e-10) return 100.0;
  return 10.0 * std::log10(1.0 / m);
}

double ssim(const Image& a, const Image& b, Image* grad_a) {
  require_same(a, b, "ssim");
  const int w = a.width, h = a.height;
  const std::size_t n = a.pixel_count();
  const double norm = 1.0 / static_cast<double>(n * 3);
  if (grad_a) *grad_a = Image(w, h);

  std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
  std::vector<double> mx(n), my(n), exx(n), eyy(n), exy(n);
  std::vector<double> g_mu, g_xx, g_xy;
  if (grad_a) {
    g_mu.resize(n);
    g_xx.resize(n);
    g_xy.resize(n);
  }
  double total = 0.0;
  for (int c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = a.data[i * 3 + c];
      y[i] = b.data[i * 3 + c];
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    gaussian_blur_plane(x.data(), w, h, mx.data());
    gaussian_blur_plane(y.data(), w, h, my.data());
    gaussian_blur_plane(xx.data(), w, h, exx.data());
    gaussian_blur_plane(yy.data(), w, h, eyy.data());
    gaussian_blur_plane(xy.data(), w, h, exy.data());
    for (std::size_t i = 0; i < n; ++i) {
      const double mux = mx[i], muy = my[i];
      const double sxx = exx[i] - mux * mux;
      const double syy = eyy[i] - muy * muy;
      const double sxy = exy[i] - mux * muy;
      const double a1 = 2.0 * mux * muy + kSsimC1;
      const double a2 = 2.0 * sxy + kSsimC2;
      const double b1 = mux * mux + muy * muy + kSsimC1;
      const double b2 = sxx + syy + kSsimC2;
      const double num = a1 * a2;
      const double den = b1 * b2;
      total += num / den;
      if (grad_a) {
        const double dnum = 2.0 * muy * a2 - 2.0 * muy * a1;
        const double dden = 2.0 * mux * b2 - 2.0 * mux * b1;
        const double den2 = den * den;
        g_mu[i] = norm * (dnum * den - num * dden) / den2;
        g_xx[i] = norm * (-num * b1) / den2;
        g_xy[i] = norm * 2.0 * a1 / den;
      }
    }
    if (grad_a) {
      // The zero-padded symmetric window is self-adjoint.
      gaussian_blur_plane(g_mu.data(), w, h, mx.data());
      gaussian_blur_plane(g_xx.data(), w, h, exx.data());
      gaussian_blur_plane(g_xy.data(), w, h, exy.data());
      for (std::size_t i = 0; i < n; ++i) {
        grad_a->data[i * 3 + c] = mx[i] + 2.0 * x[i] * exx[i] + y[i] * exy[i];
      }
    }
  }
  return total * norm;
}

}  // namespace signsplat
