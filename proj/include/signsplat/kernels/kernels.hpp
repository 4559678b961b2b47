#pragma once
// Data-parallel inner loops shared by the rasterizer, the attribute
// predictor and the image metrics.
//
// Every kernel has a portable scalar reference and, on x86-64, an AVX2
// variant picked at runtime. The vector variants process four doubles per
// lane group and reproduce the scalar operation order exactly, so both
// tables produce bit-identical results (see tests/unit/kernels_test.cpp).

#include <cstddef>
#include <string_view>

namespace signsplat::kernels {

/// Function table for one instruction-set level.
struct KernelTable {
  std::string_view name;

  /// y[i] += a * x[i]
  void (*axpy)(std::size_t n, double a, const double* x, double* y);

  /// Sum of x[i] * y[i]. Accumulates in four interleaved partial sums
  /// (lane i % 4), combined as (s0 + s1) + (s2 + s3), then adds the tail.
  double (*dot)(std::size_t n, const double* x, const double* y);

  /// Correlates one row with a symmetric (2r+1)-tap kernel. `src` points at
  /// element 0 of a row padded with r zeros on each side; writes n outputs.
  void (*correlate_row)(std::size_t n, const double* src, const double* taps,
                        int radius, double* dst);

  /// Same as correlate_row but along columns of a row-major image: `src`
  /// points at row 0 of an image padded with r zero rows above and below,
  /// `stride` is the row pitch. Writes `height` rows of `width` values.
  void (*correlate_cols)(std::size_t width, std::size_t height,
                         std::size_t stride, const double* src,
                         const double* taps, int radius, double* dst,
                         std::size_t dst_stride);

  /// Gaussian exponent -0.5 * d^T Q d for n consecutive pixel centres
  /// (x0 + i, y), d = mean - pixel, Q = [[qa, qb], [qb, qc]].
  void (*gaussian_power_row)(std::size_t n, double x0, double y, double mx,
                             double my, double qa, double qb, double qc,
                             double* out);
};

const KernelTable& scalar_table();

/// nullptr when the binary or the CPU lacks AVX2.
const KernelTable* avx2_table();

/// Best table for this machine. Honours SIGNSPLAT_KERNELS=scalar.
const KernelTable& active();

}  // namespace signsplat::kernels
