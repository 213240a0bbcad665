// SPDX-License-Identifier: Apache-2.0
#ifndef QDR_DEGRADE_HPP
#define QDR_DEGRADE_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "qdr/image.hpp"
#include "qdr/rng.hpp"

namespace qdr {

enum class DegradationKind { kLowLight, kHaze, kRain, kSnow };

const char* kind_name(DegradationKind kind);
DegradationKind kind_from_name(const std::string& name);

struct DegradationComponent {
    DegradationKind kind;
    float severity = 0.0f; // in [0,1]
    Image mask;            // single-channel binary raster
};

struct DegradationSpec {
    std::vector<DegradationComponent> components; // at least one
    std::uint64_t seed = 0;
};

struct DegradedSample {
    Image clean;
    Image degraded;
    DegradationSpec spec;
    std::string sample_id;
};

/// Procedural clean image: bilinear corner-color field, low-frequency color
/// waves, soft-edged shapes, faint texture noise. Deterministic per seed.
Image gen_clean(std::uint64_t seed, int size);

/// Composes degradations in the fixed order lowlight -> haze -> rain -> snow.
/// Haze follows I*t + A*(1-t) with t = 1 - 0.8*severity and A = 1; lowlight
/// is gamma 1 + 2*severity; rain/snow are additive masked fields. Pixels
/// outside the union of masks are bit-identical to the clean image.
DegradedSample apply_degradations(const Image& clean, const DegradationSpec& spec);

/// Random smooth blob mask covering roughly [coverage_lo, coverage_hi] of
/// the image (exact quantile threshold on a Gaussian bump field).
Image random_blob_mask(int height, int width, Rng& rng, double coverage_lo = 0.3,
                       double coverage_hi = 0.6);

/// The eleven single/composite degradation categories.
const std::vector<std::string>& category_names();
std::vector<DegradationKind> category_kinds(const std::string& category);

struct CategoryMix {
    /// category name -> non-negative weight; empty means uniform.
    std::vector<std::pair<std::string, double>> weights;
};

struct DatasetParams {
    int count = 0;
    int size = 64;
    std::uint64_t seed = 0;
    CategoryMix mix;
};

/// Layout: root/{sample_id}/clean.png, degraded.png, spec.json,
/// masks/{kind}.png. Returns sample ids in creation order.
std::vector<std::string> make_dataset(const std::string& root, const DatasetParams& params);

/// Generate one sample in memory (same construction as make_dataset).
DegradedSample make_sample(std::uint64_t master_seed, int index, int size,
                           const std::string& category);

struct DatasetIndex {
    std::string root;
    std::vector<std::string> sample_ids;
};

DatasetIndex open_dataset(const std::string& root);
DegradedSample load_sample(const std::string& root, const std::string& sample_id);

} // namespace qdr

#endif
