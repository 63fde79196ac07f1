#pragma once

#include "nspl/image.hpp"

namespace nspl {

inline constexpr double kPsnrCap = 99.0;

double mse(const Image& a, const Image& b);
double mean_abs_error(const Image& a, const Image& b);

/// 10 log10(1 / MSE) on [0, 1] images, capped at 99 dB for identical inputs.
double psnr(const Image& a, const Image& b);

/// Mean SSIM over all pixels and channels: 11x11 Gaussian window (sigma 1.5),
/// zero padding, C1 = 0.01^2, C2 = 0.03^2.
double ssim(const Image& a, const Image& b);

/// SSIM plus dSSIM/da written into `grad_a` (resized to match).
double ssim_with_gradient(const Image& a, const Image& b, Image& grad_a);

}  // namespace nspl
