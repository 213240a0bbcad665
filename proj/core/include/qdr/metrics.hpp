// SPDX-License-Identifier: Apache-2.0
#ifndef QDR_METRICS_HPP
#define QDR_METRICS_HPP

#include "qdr/image.hpp"

namespace qdr {

/// 10*log10(1/MSE) for [0,1] images; +infinity for identical inputs.
double psnr(const Image& a, const Image& b);

/// Mean local SSIM over valid (fully interior) 8x8 windows, averaged across
/// channels; standard stabilizers. Result in [-1, 1].
double ssim(const Image& a, const Image& b);

} // namespace qdr

#endif
