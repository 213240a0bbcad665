// SPDX-License-Identifier: Apache-2.0
#include "qdr/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "qdr/errors.hpp"

namespace qdr {

Image luma(const Image& img) {
    Image out(img.height, img.width, 1);
    const float inv = 1.0f / static_cast<float>(img.channels);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            float s = 0.0f;
            for (int c = 0; c < img.channels; ++c) s += img.at(y, x, c);
            out.at(y, x, 0) = s * inv;
        }
    }
    return out;
}

bool all_finite(const Image& img) {
    for (float v : img.data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void clip(Image& img, float lo, float hi) {
    for (float& v : img.data) v = std::clamp(v, lo, hi);
}

double mean_abs_diff(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw InvalidInput("mean_abs_diff: shape mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        s += std::abs(static_cast<double>(a.data[i]) - b.data[i]);
    return a.data.empty() ? 0.0 : s / static_cast<double>(a.data.size());
}

Image crop(const Image& img, int y0, int x0, int h, int w) {
    if (y0 < 0 || x0 < 0 || h <= 0 || w <= 0 || y0 + h > img.height || x0 + w > img.width)
        throw InvalidInput("crop: bounds outside image");
    Image out(h, w, img.channels);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < img.channels; ++c)
                out.at(y, x, c) = img.at(y0 + y, x0 + x, c);
    return out;
}

Image resize_area(const Image& img, int out_h, int out_w) {
    if (out_h <= 0 || out_w <= 0 || img.height == 0 || img.width == 0)
        throw InvalidInput("resize_area: empty input or output");
    Image out(out_h, out_w, img.channels);
    const double sy = static_cast<double>(img.height) / out_h;
    const double sx = static_cast<double>(img.width) / out_w;
    for (int oy = 0; oy < out_h; ++oy) {
        const double y_lo = oy * sy, y_hi = (oy + 1) * sy;
        const int iy0 = static_cast<int>(std::floor(y_lo));
        const int iy1 = std::min(img.height, static_cast<int>(std::ceil(y_hi)));
        for (int ox = 0; ox < out_w; ++ox) {
            const double x_lo = ox * sx, x_hi = (ox + 1) * sx;
            const int ix0 = static_cast<int>(std::floor(x_lo));
            const int ix1 = std::min(img.width, static_cast<int>(std::ceil(x_hi)));
            for (int c = 0; c < img.channels; ++c) {
                double acc = 0.0, wsum = 0.0;
                for (int iy = iy0; iy < iy1; ++iy) {
                    const double wy =
                        std::min<double>(iy + 1, y_hi) - std::max<double>(iy, y_lo);
                    for (int ix = ix0; ix < ix1; ++ix) {
                        const double wx =
                            std::min<double>(ix + 1, x_hi) - std::max<double>(ix, x_lo);
                        acc += wy * wx * img.at(iy, ix, c);
                        wsum += wy * wx;
                    }
                }
                out.at(oy, ox, c) = static_cast<float>(acc / wsum);
            }
        }
    }
    return out;
}

} // namespace qdr
