// SPDX-License-Identifier: Apache-2.0
#ifndef QDR_QUALMAP_HPP
#define QDR_QUALMAP_HPP

#include <cstdint>
#include <functional>
#include <list>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "qdr/image.hpp"

namespace qdr {

/// Per-pixel perceptual quality raster on [1,5]; 1 = severely degraded,
/// 5 = pristine. scorer_id / image_key are provenance annotations and are
/// not part of the serialized payload.
struct QualityMap {
    int height = 0;
    int width = 0;
    std::vector<float> values; // row-major
    std::string scorer_id;
    std::string image_key;

    QualityMap() = default;
    QualityMap(int h, int w, float fill = 5.0f)
        : height(h), width(w), values(static_cast<std::size_t>(h) * w, fill) {}

    float& at(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }
    float at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }

    /// Payload equality (dims + values); provenance excluded.
    bool operator==(const QualityMap& o) const {
        return height == o.height && width == o.width && values == o.values;
    }
};

constexpr float kQualityMin = 1.0f;
constexpr float kQualityMax = 5.0f;

/// Mean quality inside / outside a binary mask (mask value > 0 means inside).
std::pair<double, double> mask_mean_split(const QualityMap& map, const Image& mask);

/// No-reference proxy: scores degradation evidence from windowed statistics
/// (contrast deficit, directional high-frequency energy, darkness). Cheap,
/// deterministic, and separates synthetically degraded regions from clean
/// ones; not a perceptual model.
QualityMap score_no_reference(const Image& image);

/// Full-reference oracle: q = 1 + 4*s with s a windowed structural-similarity
/// statistic clamped to [0,1]. Identical inputs score exactly 5 everywhere.
QualityMap score_full_reference(const Image& degraded, const Image& reference);

/// Scorer contract: deterministic map from image(s) to a QualityMap.
class QualityScorer {
public:
    enum class Mode { kNoReference, kFullReference };

    struct BatchItem {
        std::string key;
        const Image* image = nullptr;
    };

    virtual ~QualityScorer() = default;
    virtual std::string scorer_id() const = 0;
    virtual Mode mode() const = 0;
    virtual QualityMap score_one(const std::string& key, const Image& image) const = 0;

    /// One invocation scoring all items; result order matches input order.
    virtual std::vector<QualityMap> score_many(const std::vector<BatchItem>& items) const;
};

class NoReferenceProxyScorer final : public QualityScorer {
public:
    std::string scorer_id() const override { return "noref-proxy-v1"; }
    Mode mode() const override { return Mode::kNoReference; }
    QualityMap score_one(const std::string& key, const Image& image) const override;
};

/// Resolves the clean reference for a given image key.
using ReferenceLookup = std::function<Image(const std::string& key)>;

class FullReferenceOracleScorer final : public QualityScorer {
public:
    explicit FullReferenceOracleScorer(ReferenceLookup lookup) : lookup_(std::move(lookup)) {}
    std::string scorer_id() const override { return "fullref-oracle-v1"; }
    Mode mode() const override { return Mode::kFullReference; }
    QualityMap score_one(const std::string& key, const Image& image) const override;

private:
    ReferenceLookup lookup_;
};

/// LRU-memoized quality maps keyed by caller-supplied image identifiers.
/// Concurrent use is linearizable (coarse lock); failed scores are not cached.
class QualityCache {
public:
    explicit QualityCache(std::size_t capacity = 4096);

    QualityMap get_or_score(const std::string& image_key, const Image& image,
                            const QualityScorer& scorer);

    /// Keys must be unique within the batch; cache misses are scored in a
    /// single scorer invocation. Result order matches input order.
    std::vector<QualityMap> score_batch(const std::vector<QualityScorer::BatchItem>& items,
                                        const QualityScorer& scorer);

    std::uint64_t hit_count() const;
    std::uint64_t miss_count() const;
    std::size_t size() const;
    std::size_t capacity() const { return capacity_; }

    /// Drop all entries and counters and set a new capacity.
    void reset(std::size_t capacity);

private:
    void insert_locked(const std::string& key, QualityMap map);

    std::size_t capacity_;
    std::uint64_t hits_ = 0;
    std::uint64_t misses_ = 0;
    std::list<std::string> recency_; // front = most recently used
    struct Entry {
        QualityMap map;
        std::list<std::string>::iterator pos;
    };
    std::unordered_map<std::string, Entry> entries_;
    mutable std::mutex mutex_;
};

/// AQMP container: "AQMP", u32 LE version (=1), u32 height, u32 width,
/// height*width float32 LE values row-major.
void write_quality_map(const std::string& path, const QualityMap& map);
QualityMap read_quality_map(const std::string& path);

} // namespace qdr

#endif
