// AVX2 variants. Compiled with -mavx2 only (no FMA) so that every lane performs
// the same rounding sequence as the scalar reference.

#include "signsplat/kernels/kernels.hpp"

#if defined(__AVX2__)
#include <immintrin.h>

namespace signsplat::kernels {
namespace {

void axpy_avx2(std::size_t n, double a, const double* x, double* y) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d prod = _mm256_mul_pd(va, _mm256_loadu_pd(x + i));
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), prod));
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

double dot_avx2(std::size_t n, const double* x, const double* y) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_loadu_pd(x + i),
                                           _mm256_loadu_pd(y + i)));
  }
  alignas(32) double s[4];
  _mm256_store_pd(s, acc);
  double total = (s[0] + s[1]) + (s[2] + s[3]);
  for (; i < n; ++i) total += x[i] * y[i];
  return total;
}

void correlate_row_avx2(std::size_t n, const double* src, const double* taps,
                        int radius, double* dst) {
  const int span = 2 * radius + 1;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d acc = _mm256_setzero_pd();
    for (int k = 0; k < span; ++k) {
      acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_set1_pd(taps[k]),
                                             _mm256_loadu_pd(src + i + k)));
    }
    _mm256_storeu_pd(dst + i, acc);
  }
  for (; i < n; ++i) {
    double acc = 0.0;
    for (int k = 0; k < span; ++k) acc += taps[k] * src[i + k];
    dst[i] = acc;
  }
}

void correlate_cols_avx2(std::size_t width, std::size_t height,
                         std::size_t stride, const double* src,
                         const double* taps, int radius, double* dst,
                         std::size_t dst_stride) {
  const int span = 2 * radius + 1;
  for (std::size_t y = 0; y < height; ++y) {
    std::size_t x = 0;
    for (; x + 4 <= width; x += 4) {
      __m256d acc = _mm256_setzero_pd();
      for (int k = 0; k < span; ++k) {
        const __m256d v = _mm256_loadu_pd(src + (y + k) * stride + x);
        acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_set1_pd(taps[k]), v));
      }
      _mm256_storeu_pd(dst + y * dst_stride + x, acc);
    }
    for (; x < width; ++x) {
      double acc = 0.0;
      for (int k = 0; k < span; ++k) acc += taps[k] * src[(y + k) * stride + x];
      dst[y * dst_stride + x] = acc;
    }
  }
}

void gaussian_power_row_avx2(std::size_t n, double x0, double y, double mx,
                             double my, double qa, double qb, double qc,
                             double* out) {
  const double dy = my - y;
  const __m256d vmx = _mm256_set1_pd(mx);
  const __m256d vx0 = _mm256_set1_pd(x0);
  const __m256d vqa = _mm256_set1_pd(qa);
  const __m256d vqb = _mm256_set1_pd(qb);
  const __m256d vdy = _mm256_set1_pd(dy);
  const __m256d half = _mm256_set1_pd(-0.5);
  const __m256d cdd = _mm256_set1_pd(qc * dy * dy);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const double b = static_cast<double>(i);
    const __m256d idx = _mm256_set_pd(b + 3.0, b + 2.0, b + 1.0, b);
    const __m256d dx = _mm256_sub_pd(vmx, _mm256_add_pd(vx0, idx));
    const __m256d quad =
        _mm256_add_pd(_mm256_mul_pd(_mm256_mul_pd(vqa, dx), dx), cdd);
    const __m256d cross = _mm256_mul_pd(_mm256_mul_pd(vqb, dx), vdy);
    _mm256_storeu_pd(out + i, _mm256_sub_pd(_mm256_mul_pd(half, quad), cross));
  }
  for (; i < n; ++i) {
    const double dx = mx - (x0 + static_cast<double>(i));
    out[i] = -0.5 * (qa * dx * dx + qc * dy * dy) - qb * dx * dy;
  }
}

}  // namespace

const KernelTable* avx2_table_impl() {
  static const KernelTable table{"avx2",          axpy_avx2,
                                 dot_avx2,        correlate_row_avx2,
                                 correlate_cols_avx2, gaussian_power_row_avx2};
  return &table;
}

}  // namespace signsplat::kernels

#else

namespace signsplat::kernels {
const KernelTable* avx2_table_impl() { return nullptr; }
}  // namespace signsplat::kernels

#endif
