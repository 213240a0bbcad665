// SPDX-License-Identifier: Apache-2.0
#ifndef QDR_IMAGE_HPP
#define QDR_IMAGE_HPP

#include <cstddef>
#include <vector>

namespace qdr {

/// Interleaved float raster, values nominally in [0,1], row-major (y, x, c).
struct Image {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<float> data;

    Image() = default;
    Image(int h, int w, int c, float fill = 0.0f)
        : height(h), width(w), channels(c),
          data(static_cast<std::size_t>(h) * w * c, fill) {}

    float& at(int y, int x, int c) {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    float at(int y, int x, int c) const {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }

    std::size_t size() const { return data.size(); }
    bool same_shape(const Image& o) const {
        return height == o.height && width == o.width && channels == o.channels;
    }

    bool operator==(const Image& o) const {
        return height == o.height && width == o.width && channels == o.channels &&
               data == o.data;
    }
};

/// Mean of channels; the luma proxy used by the scorers.
Image luma(const Image& img);

/// All values finite?
bool all_finite(const Image& img);

/// Clip in place to [lo, hi].
void clip(Image& img, float lo, float hi);

/// Per-pixel mean absolute difference (images must share a shape).
double mean_abs_diff(const Image& a, const Image& b);

/// Crop a rectangle; bounds must lie inside the image.
Image crop(const Image& img, int y0, int x0, int h, int w);

/// Exact area-average resize (box filter with fractional overlap weights).
Image resize_area(const Image& img, int out_h, int out_w);

} // namespace qdr

#endif
