// SPDX-License-Identifier: Apache-2.0
#include "qdr/metrics.hpp"

#include <cmath>
#include <limits>

#include "qdr/errors.hpp"
#include "window_stats.hpp"

namespace qdr {

double psnr(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw InvalidInput("psnr: shape mismatch");
    if (a.data.empty()) throw InvalidInput("psnr: empty image");
    double mse = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = static_cast<double>(a.data[i]) - b.data[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.data.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

double ssim(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw InvalidInput("ssim: shape mismatch");
    if (a.height < 1 || a.width < 1) throw InvalidInput("ssim: empty image");

    const int win = std::min({detail::kWindow, a.height, a.width});
    const int h = a.height, w = a.width;
    const double n_win = static_cast<double>(win) * win;

    double acc = 0.0;
    for (int c = 0; c < a.channels; ++c) {
        std::vector<double> pa(static_cast<std::size_t>(h) * w), pb(pa.size()), paa(pa.size()),
            pbb(pa.size()), pab(pa.size());
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const std::size_t i = static_cast<std::size_t>(y) * w + x;
                pa[i] = a.at(y, x, c);
                pb[i] = b.at(y, x, c);
                paa[i] = pa[i] * pa[i];
                pbb[i] = pb[i] * pb[i];
                pab[i] = pa[i] * pb[i];
            }
        }
        const detail::Sat sa(pa, h, w), sb(pb, h, w), saa(paa, h, w), sbb(pbb, h, w),
            sab(pab, h, w);

        double channel_acc = 0.0;
        std::size_t count = 0;
        for (int y = 0; y + win <= h; ++y) {
            for (int x = 0; x + win <= w; ++x) {
                const double ma = sa.rect(y, x, y + win, x + win) / n_win;
                const double mb = sb.rect(y, x, y + win, x + win) / n_win;
                const double va =
                    std::max(0.0, saa.rect(y, x, y + win, x + win) / n_win - ma * ma);
                const double vb =
                    std::max(0.0, sbb.rect(y, x, y + win, x + win) / n_win - mb * mb);
                const double cov = sab.rect(y, x, y + win, x + win) / n_win - ma * mb;
                const double num =
                    (2.0 * ma * mb + detail::kSsimC1) * (2.0 * cov + detail::kSsimC2);
                const double den = (ma * ma + mb * mb + detail::kSsimC1) *
                                   (va + vb + detail::kSsimC2);
                channel_acc += num / den;
                ++count;
            }
        }
        acc += channel_acc / static_cast<double>(count);
    }
    return acc / a.channels;
}

} // namespace qdr
