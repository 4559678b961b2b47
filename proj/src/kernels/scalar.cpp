#include "signsplat/kernels/kernels.hpp"

namespace signsplat::kernels {
namespace {

void axpy_scalar(std::size_t n, double a, const double* x, double* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

double dot_scalar(std::size_t n, const double* x, const double* y) {
  double s[4] = {0.0, 0.0, 0.0, 0.0};
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s[0] += x[i] * y[i];
    s[1] += x[i + 1] * y[i + 1];
    s[2] += x[i + 2] * y[i + 2];
    s[3] += x[i + 3] * y[i + 3];
  }
  double total = (s[0] + s[1]) + (s[2] + s[3]);
  for (; i < n; ++i) total += x[i] * y[i];
  return total;
}

void correlate_row_scalar(std::size_t n, const double* src, const double* taps,
                          int radius, double* dst) {
  const int width = 2 * radius + 1;
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int k = 0; k < width; ++k) acc += taps[k] * src[i + k];
    dst[i] = acc;
  }
}

void correlate_cols_scalar(std::size_t width, std::size_t height,
                           std::size_t stride, const double* src,
                           const double* taps, int radius, double* dst,
                           std::size_t dst_stride) {
  const int span = 2 * radius + 1;
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      double acc = 0.0;
      for (int k = 0; k < span; ++k) acc += taps[k] * src[(y + k) * stride + x];
      dst[y * dst_stride + x] = acc;
    }
  }
}

void gaussian_power_row_scalar(std::size_t n, double x0, double y, double mx,
                               double my, double qa, double qb, double qc,
                               double* out) {
  const double dy = my - y;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = mx - (x0 + static_cast<double>(i));
    out[i] = -0.5 * (qa * dx * dx + qc * dy * dy) - qb * dx * dy;
  }
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table{
      "scalar",        axpy_scalar,           dot_scalar,
      correlate_row_scalar, correlate_cols_scalar, gaussian_power_row_scalar};
  return table;
}

}  // namespace signsplat::kernels
