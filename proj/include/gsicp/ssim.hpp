#pragma once

#include "gsicp/image.hpp"

namespace gsicp {

/// Mean structural similarity with an 11x11 Gaussian window (sigma 1.5),
/// K1 = 0.01, K2 = 0.03 and dynamic range 1. Near the border the window is
/// truncated to the image and renormalised. Multi-channel images average the
/// per-channel maps. Throws InputError on a shape mismatch.
double ssim(const Image& a, const Image& b);

/// Same value; also writes d ssim / d a into `grad_a` when non-null.
double ssimWithGrad(const Image& a, const Image& b, Image* grad_a);

}  // namespace gsicp
