// SPDX-License-Identifier: Apache-2.0
#ifndef QDR_INSPECT_HPP
#define QDR_INSPECT_HPP

#include <string>

#include "qdr/image.hpp"
#include "qdr/qualmap.hpp"
#include "qdr/trainer.hpp"

namespace qdr {

/// False-color rendering of a quality map (embedded viridis LUT; byte-stable).
Image quality_heatmap(const QualityMap& map);

struct InspectArtifacts {
    std::string qmap_path;
    std::string heatmap_path;
    std::string partition_path;
    std::string regions_path;
};

/// Writes the AQMP map, heatmap PNG, partition JSON and the per-region
/// {region_id, q_r, C_p, source_pool, candidate_ids} JSON under out_dir.
/// `state` provides the pool and parameters (a default-config state works
/// when no checkpoint is available).
InspectArtifacts inspect_image(const Image& image, TrainState& state, const std::string& out_dir,
                               const std::string& stem);

} // namespace qdr

#endif
