// SPDX-License-Identifier: Apache-2.0
#include "qdr/qualmap.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "qdr/errors.hpp"
#include "window_stats.hpp"

static_assert(std::endian::native == std::endian::little,
              "AQMP serialization assumes a little-endian host");

namespace qdr {

namespace {

// No-reference proxy constants. The term weights, the contrast reference std
// and the darkness floor follow the scorer definition; the gradient-energy
// normalization (baseline/scale) is calibrated against the synthetic
// degradation generator so that streaked regions score below clean ones.
constexpr double kContrastRefStd = 0.25;
constexpr double kDarknessFloor = 0.35;
constexpr double kGradBaseline = 0.02;
constexpr double kGradScale = 0.03;
constexpr double kWeightHaze = 0.5;
constexpr double kWeightStreak = 0.3;
constexpr double kWeightDark = 0.2;

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

} // namespace

std::pair<double, double> mask_mean_split(const QualityMap& map, const Image& mask) {
    if (mask.height != map.height || mask.width != map.width)
        throw InvalidInput("mask_mean_split: mask/map shape mismatch");
    double in_sum = 0.0, out_sum = 0.0;
    std::size_t in_n = 0, out_n = 0;
    for (int y = 0; y < map.height; ++y) {
        for (int x = 0; x < map.width; ++x) {
            if (mask.at(y, x, 0) > 0.0f) {
                in_sum += map.at(y, x);
                ++in_n;
            } else {
                out_sum += map.at(y, x);
                ++out_n;
            }
        }
    }
    return {in_n ? in_sum / in_n : std::nan(""), out_n ? out_sum / out_n : std::nan("")};
}

QualityMap score_no_reference(const Image& image) {
    if (image.height <= 0 || image.width <= 0)
        throw InvalidInput("score_no_reference: empty image");
    if (!all_finite(image)) throw InvalidInput("score_no_reference: non-finite pixels");

    const int h = image.height, w = image.width;
    const Image lum = luma(image);

    const std::vector<double> mean =
        detail::window_mean(lum.data.data(), h, w, [](double v) { return v; });
    const std::vector<double> mean_sq =
        detail::window_mean(lum.data.data(), h, w, [](double v) { return v * v; });

    // Directional high-frequency energy: max of forward differences, then
    // window-averaged. Replication makes the last row/column diffs zero.
    std::vector<float> grad(static_cast<std::size_t>(h) * w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const float v = lum.at(y, x, 0);
            const float dx = (x + 1 < w) ? std::abs(lum.at(y, x + 1, 0) - v) : 0.0f;
            const float dy = (y + 1 < h) ? std::abs(lum.at(y + 1, x, 0) - v) : 0.0f;
            grad[static_cast<std::size_t>(y) * w + x] = std::max(dx, dy);
        }
    }
    const std::vector<double> grad_mean =
        detail::window_mean(grad.data(), h, w, [](double v) { return v; });

    QualityMap map(h, w);
    map.scorer_id = "noref-proxy-v1";
    for (std::size_t i = 0; i < map.values.size(); ++i) {
        const double var = std::max(0.0, mean_sq[i] - mean[i] * mean[i]);
        const double haze = clamp01(1.0 - std::sqrt(var) / kContrastRefStd);
        const double streak = clamp01((grad_mean[i] - kGradBaseline) / kGradScale);
        const double dark = std::max(0.0, kDarknessFloor - mean[i]) / kDarknessFloor;
        const double degr = clamp01(kWeightHaze * haze + kWeightStreak * streak + kWeightDark * dark);
        map.values[i] = std::clamp(static_cast<float>(5.0 - 4.0 * degr), kQualityMin, kQualityMax);
    }
    return map;
}

QualityMap score_full_reference(const Image& degraded, const Image& reference) {
    if (!degraded.same_shape(reference))
        throw InvalidInput("score_full_reference: shape mismatch");
    if (degraded.height <= 0 || degraded.width <= 0)
        throw InvalidInput("score_full_reference: empty image");
    if (!all_finite(degraded) || !all_finite(reference))
        throw InvalidInput("score_full_reference: non-finite pixels");

    const int h = degraded.height, w = degraded.width, nc = degraded.channels;
    const std::size_t n = static_cast<std::size_t>(h) * w;
    std::vector<double> ssim_acc(n, 0.0);

    std::vector<float> a(n), b(n);
    for (int c = 0; c < nc; ++c) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                a[static_cast<std::size_t>(y) * w + x] = degraded.at(y, x, c);
                b[static_cast<std::size_t>(y) * w + x] = reference.at(y, x, c);
            }
        }
        const detail::PairStats st = detail::window_pair_stats(a.data(), b.data(), h, w);
        for (std::size_t i = 0; i < n; ++i) {
            const double num = (2.0 * st.mean_a[i] * st.mean_b[i] + detail::kSsimC1) *
                               (2.0 * st.cov[i] + detail::kSsimC2);
            const double den = (st.mean_a[i] * st.mean_a[i] + st.mean_b[i] * st.mean_b[i] +
                                detail::kSsimC1) *
                               (st.var_a[i] + st.var_b[i] + detail::kSsimC2);
            ssim_acc[i] += num / den;
        }
    }

    QualityMap map(h, w);
    map.scorer_id = "fullref-oracle-v1";
    for (std::size_t i = 0; i < n; ++i) {
        const double s = clamp01(ssim_acc[i] / nc);
        map.values[i] = std::clamp(static_cast<float>(1.0 + 4.0 * s), kQualityMin, kQualityMax);
    }
    return map;
}

std::vector<QualityMap> QualityScorer::score_many(const std::vector<BatchItem>& items) const {
    std::vector<QualityMap> out;
    out.reserve(items.size());
    for (const auto& it : items) out.push_back(score_one(it.key, *it.image));
    return out;
}

QualityMap NoReferenceProxyScorer::score_one(const std::string& key, const Image& image) const {
    QualityMap m = score_no_reference(image);
    m.image_key = key;
    return m;
}

QualityMap FullReferenceOracleScorer::score_one(const std::string& key, const Image& image) const {
    QualityMap m = score_full_reference(image, lookup_(key));
    m.image_key = key;
    return m;
}

QualityCache::QualityCache(std::size_t capacity) : capacity_(capacity == 0 ? 1 : capacity) {}

void QualityCache::insert_locked(const std::string& key, QualityMap map) {
    recency_.push_front(key);
    entries_[key] = Entry{std::move(map), recency_.begin()};
    while (entries_.size() > capacity_) {
        entries_.erase(recency_.back());
        recency_.pop_back();
    }
}

QualityMap QualityCache::get_or_score(const std::string& image_key, const Image& image,
                                      const QualityScorer& scorer) {
    {
        std::lock_guard lock(mutex_);
        auto it = entries_.find(image_key);
        if (it != entries_.end()) {
            ++hits_;
            recency_.splice(recency_.begin(), recency_, it->second.pos);
            return it->second.map;
        }
    }
    // Score outside the lock; failed scores propagate and cache nothing.
    QualityMap map = scorer.score_one(image_key, image);
    std::lock_guard lock(mutex_);
    ++misses_;
    auto it = entries_.find(image_key);
    if (it == entries_.end()) insert_locked(image_key, map);
    return map;
}

std::vector<QualityMap> QualityCache::score_batch(
    const std::vector<QualityScorer::BatchItem>& items, const QualityScorer& scorer) {
    {
        std::unordered_map<std::string, int> seen;
        for (const auto& it : items) {
            if (++seen[it.key] > 1)
                throw InvalidInput("score_batch: duplicate key '" + it.key + "'");
        }
    }

    std::vector<QualityMap> out(items.size());
    std::vector<QualityScorer::BatchItem> missing;
    std::vector<std::size_t> missing_pos;
    {
        std::lock_guard lock(mutex_);
        for (std::size_t i = 0; i < items.size(); ++i) {
            auto it = entries_.find(items[i].key);
            if (it != entries_.end()) {
                ++hits_;
                recency_.splice(recency_.begin(), recency_, it->second.pos);
                out[i] = it->second.map;
            } else {
                missing.push_back(items[i]);
                missing_pos.push_back(i);
            }
        }
    }
    if (missing.empty()) return out;

    std::vector<QualityMap> scored = scorer.score_many(missing);
    std::lock_guard lock(mutex_);
    for (std::size_t m = 0; m < missing.size(); ++m) {
        ++misses_;
        out[missing_pos[m]] = scored[m];
        if (entries_.find(missing[m].key) == entries_.end())
            insert_locked(missing[m].key, std::move(scored[m]));
    }
    return out;
}

std::uint64_t QualityCache::hit_count() const {
    std::lock_guard lock(mutex_);
    return hits_;
}

std::uint64_t QualityCache::miss_count() const {
    std::lock_guard lock(mutex_);
    return misses_;
}

std::size_t QualityCache::size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
}

void QualityCache::reset(std::size_t capacity) {
    std::lock_guard lock(mutex_);
    capacity_ = capacity == 0 ? 1 : capacity;
    hits_ = 0;
    misses_ = 0;
    recency_.clear();
    entries_.clear();
}

namespace {
constexpr char kAqmpMagic[4] = {'A', 'Q', 'M', 'P'};
constexpr std::uint32_t kAqmpVersion = 1;
} // namespace

void write_quality_map(const std::string& path, const QualityMap& map) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("write_quality_map: cannot open " + path);
    f.write(kAqmpMagic, 4);
    const std::uint32_t ver = kAqmpVersion;
    const std::uint32_t h = static_cast<std::uint32_t>(map.height);
    const std::uint32_t w = static_cast<std::uint32_t>(map.width);
    f.write(reinterpret_cast<const char*>(&ver), 4);
    f.write(reinterpret_cast<const char*>(&h), 4);
    f.write(reinterpret_cast<const char*>(&w), 4);
    f.write(reinterpret_cast<const char*>(map.values.data()),
            static_cast<std::streamsize>(map.values.size() * sizeof(float)));
    if (!f) throw FormatError("write_quality_map: short write to " + path);
}

QualityMap read_quality_map(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("read_quality_map: cannot open " + path);

    char magic[4];
    if (!f.read(magic, 4)) throw FormatError("read_quality_map: truncated magic at offset 0");
    if (std::memcmp(magic, kAqmpMagic, 4) != 0)
        throw FormatError("read_quality_map: bad magic at offset 0");

    std::uint32_t ver = 0, h = 0, w = 0;
    if (!f.read(reinterpret_cast<char*>(&ver), 4))
        throw FormatError("read_quality_map: truncated version at offset 4");
    if (ver != kAqmpVersion)
        throw FormatError("read_quality_map: unsupported version at offset 4");
    if (!f.read(reinterpret_cast<char*>(&h), 4))
        throw FormatError("read_quality_map: truncated height at offset 8");
    if (!f.read(reinterpret_cast<char*>(&w), 4))
        throw FormatError("read_quality_map: truncated width at offset 12");

    QualityMap map(static_cast<int>(h), static_cast<int>(w));
    const std::size_t bytes = map.values.size() * sizeof(float);
    if (!f.read(reinterpret_cast<char*>(map.values.data()), static_cast<std::streamsize>(bytes)))
        throw FormatError("read_quality_map: payload shorter than header dims at offset 16");
    char extra;
    if (f.read(&extra, 1))
        throw FormatError("read_quality_map: payload longer than header dims at offset " +
                          std::to_string(16 + bytes));
    return map;
}

} // namespace qdr
