// SPDX-License-Identifier: Apache-2.0
#ifndef QDR_PARTITION_HPP
#define QDR_PARTITION_HPP

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "qdr/qualmap.hpp"

namespace qdr {

/// Axis-aligned rectangle of quality-homogeneous pixels.
struct Region {
    int x0 = 0;
    int y0 = 0;
    int height = 0;
    int width = 0;
    float mean_quality = 0.0f;
    float quality_std = 0.0f;
    int region_id = 0;
};

struct PartitionParams {
    int min_side = 8;
    float split_std_threshold = 0.5f;
};

/// Exact disjoint tiling of the image; region_ids follow depth-first
/// NW, NE, SW, SE emission order.
struct RegionPartition {
    std::vector<Region> regions;
    int image_height = 0;
    int image_width = 0;
    PartitionParams params;
};

/// Population mean and std of the map over a rectangle.
std::pair<double, double> region_quality_stats(const QualityMap& map, int y0, int x0, int h,
                                               int w);

/// Quadtree refinement: split while quality_std exceeds the threshold and
/// both sides exceed min_side; odd sides split ceil-first (NW gets the
/// larger half).
RegionPartition adaptive_region_partition(const QualityMap& map, const PartitionParams& params);

/// Per-pixel region_id raster (row-major, one id per pixel).
std::vector<std::uint32_t> region_pixel_index(const RegionPartition& partition);

/// JSON round trip: params plus one record per region.
std::string partition_to_json(const RegionPartition& partition);
RegionPartition partition_from_json(const std::string& json_text);

} // namespace qdr

#endif
