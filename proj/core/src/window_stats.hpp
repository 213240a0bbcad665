// SPDX-License-Identifier: Apache-2.0
//
// Internal: summed-area tables and 8x8 sliding-window statistics shared by
// the quality scorers and the SSIM metric. Not installed.
#ifndef QDR_SRC_WINDOW_STATS_HPP
#define QDR_SRC_WINDOW_STATS_HPP

#include <algorithm>
#include <cstddef>
#include <vector>

namespace qdr::detail {

constexpr int kWindow = 8;
constexpr int kPadBefore = 3; // window for pixel (y,x) covers [y-3, y+4]
constexpr int kPadAfter = 4;

/// Summed-area table with double accumulation; rect() is half-open.
class Sat {
public:
    Sat(const std::vector<double>& src, int h, int w) : h_(h), w_(w), s_((h + 1) * (w + 1), 0.0) {
        for (int y = 0; y < h; ++y) {
            double row = 0.0;
            for (int x = 0; x < w; ++x) {
                row += src[static_cast<std::size_t>(y) * w + x];
                s_[idx(y + 1, x + 1)] = s_[idx(y, x + 1)] + row;
            }
        }
    }

    double rect(int y0, int x0, int y1, int x1) const {
        return s_[idx(y1, x1)] - s_[idx(y0, x1)] - s_[idx(y1, x0)] + s_[idx(y0, x0)];
    }

private:
    std::size_t idx(int y, int x) const { return static_cast<std::size_t>(y) * (w_ + 1) + x; }
    int h_, w_;
    std::vector<double> s_;
};

/// Edge-replicated padding by (kPadBefore, kPadAfter) on each axis.
inline std::vector<double> pad_replicate(const float* src, int h, int w) {
    const int ph = h + kPadBefore + kPadAfter;
    const int pw = w + kPadBefore + kPadAfter;
    std::vector<double> out(static_cast<std::size_t>(ph) * pw);
    for (int y = 0; y < ph; ++y) {
        const int sy = std::clamp(y - kPadBefore, 0, h - 1);
        for (int x = 0; x < pw; ++x) {
            const int sx = std::clamp(x - kPadBefore, 0, w - 1);
            out[static_cast<std::size_t>(y) * pw + x] = src[static_cast<std::size_t>(sy) * w + sx];
        }
    }
    return out;
}

/// Per-pixel mean over the 8x8 edge-replicated window centered at each pixel.
/// `transform` maps a padded sample before summation (identity, square, ...).
template <typename Fn>
std::vector<double> window_mean(const float* src, int h, int w, Fn transform) {
    const int pw = w + kPadBefore + kPadAfter;
    std::vector<double> padded = pad_replicate(src, h, w);
    for (double& v : padded) v = transform(v);
    const Sat sat(padded, h + kPadBefore + kPadAfter, pw);
    std::vector<double> out(static_cast<std::size_t>(h) * w);
    const double inv = 1.0 / (kWindow * kWindow);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            out[static_cast<std::size_t>(y) * w + x] =
                sat.rect(y, x, y + kWindow, x + kWindow) * inv;
    return out;
}

/// Joint per-pixel window means of (a, b, a^2, b^2, a*b) for one channel pair.
struct PairStats {
    std::vector<double> mean_a, mean_b, var_a, var_b, cov;
};

inline PairStats window_pair_stats(const float* a, const float* b, int h, int w) {
    const int ph = h + kPadBefore + kPadAfter;
    const int pw = w + kPadBefore + kPadAfter;
    std::vector<double> pa = pad_replicate(a, h, w);
    std::vector<double> pb = pad_replicate(b, h, w);
    std::vector<double> paa(pa.size()), pbb(pa.size()), pab(pa.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
        paa[i] = pa[i] * pa[i];
        pbb[i] = pb[i] * pb[i];
        pab[i] = pa[i] * pb[i];
    }
    const Sat sa(pa, ph, pw), sb(pb, ph, pw), saa(paa, ph, pw), sbb(pbb, ph, pw), sab(pab, ph, pw);

    PairStats st;
    const std::size_t n = static_cast<std::size_t>(h) * w;
    st.mean_a.resize(n);
    st.mean_b.resize(n);
    st.var_a.resize(n);
    st.var_b.resize(n);
    st.cov.resize(n);
    const double inv = 1.0 / (kWindow * kWindow);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            const double ma = sa.rect(y, x, y + kWindow, x + kWindow) * inv;
            const double mb = sb.rect(y, x, y + kWindow, x + kWindow) * inv;
            st.mean_a[i] = ma;
            st.mean_b[i] = mb;
            st.var_a[i] = std::max(0.0, saa.rect(y, x, y + kWindow, x + kWindow) * inv - ma * ma);
            st.var_b[i] = std::max(0.0, sbb.rect(y, x, y + kWindow, x + kWindow) * inv - mb * mb);
            st.cov[i] = sab.rect(y, x, y + kWindow, x + kWindow) * inv - ma * mb;
        }
    }
    return st;
}

constexpr double kSsimC1 = 1e-4; // (0.01 * L)^2, L = 1
constexpr double kSsimC2 = 9e-4; // (0.03 * L)^2

} // namespace qdr::detail

#endif
