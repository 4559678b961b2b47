#pragma once
// Image reconstruction metrics and their gradients.

#include "signsplat/image.hpp"

namespace signsplat {

inline constexpr int kSsimRadius = 5;       // 11x11 window
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

/// Mean absolute error over all pixels and channels. If `grad` is non-null it
/// receives dL1/dpred.
double l1_loss(const Image& pred, const Image& gt, Image* grad = nullptr);

double mse(const Image& a, const Image& b);

/// 10 log10(1 / MSE), capped at 100 dB when MSE < 1e-10.
double psnr(const Image& a, const Image& b);

/// Mean SSIM with an 11x11 Gaussian window (sigma 1.5, zero padding),
/// averaged over pixels and channels. `grad_a` receives dSSIM/da.
double ssim(const Image& a, const Image& b, Image* grad_a = nullptr);

/// Zero-padded separable Gaussian blur of one plane (the SSIM window).
void gaussian_blur_plane(const double* src, int width, int height, double* dst);

}  // namespace signsplat
