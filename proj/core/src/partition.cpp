// SPDX-License-Identifier: Apache-2.0
#include "qdr/partition.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "qdr/errors.hpp"
#include "window_stats.hpp"

namespace qdr {

namespace {

struct StatTables {
    detail::Sat sum;
    detail::Sat sum_sq;
    int h, w;

    explicit StatTables(const QualityMap& map)
        : sum(to_double(map, false), map.height, map.width),
          sum_sq(to_double(map, true), map.height, map.width),
          h(map.height),
          w(map.width) {}

    static std::vector<double> to_double(const QualityMap& map, bool squared) {
        std::vector<double> v(map.values.size());
        for (std::size_t i = 0; i < v.size(); ++i) {
            const double x = map.values[i];
            v[i] = squared ? x * x : x;
        }
        return v;
    }

    std::pair<double, double> mean_std(int y0, int x0, int rh, int rw) const {
        const double n = static_cast<double>(rh) * rw;
        const double s = sum.rect(y0, x0, y0 + rh, x0 + rw);
        const double ss = sum_sq.rect(y0, x0, y0 + rh, x0 + rw);
        const double mean = s / n;
        const double var = std::max(0.0, ss / n - mean * mean);
        return {mean, std::sqrt(var)};
    }
};

void split_recursive(const StatTables& tables, const PartitionParams& p, int y0, int x0, int h,
                     int w, std::vector<Region>& out) {
    const auto [mean, sd] = tables.mean_std(y0, x0, h, w);
    if (sd > p.split_std_threshold && h > p.min_side && w > p.min_side) {
        const int h_hi = (h + 1) / 2; // NW/NE take the ceil half
        const int w_hi = (w + 1) / 2;
        split_recursive(tables, p, y0, x0, h_hi, w_hi, out);                     // NW
        split_recursive(tables, p, y0, x0 + w_hi, h_hi, w - w_hi, out);          // NE
        split_recursive(tables, p, y0 + h_hi, x0, h - h_hi, w_hi, out);          // SW
        split_recursive(tables, p, y0 + h_hi, x0 + w_hi, h - h_hi, w - w_hi, out); // SE
        return;
    }
    Region r;
    r.x0 = x0;
    r.y0 = y0;
    r.height = h;
    r.width = w;
    r.mean_quality = static_cast<float>(mean);
    r.quality_std = static_cast<float>(sd);
    r.region_id = static_cast<int>(out.size());
    out.push_back(r);
}

} // namespace

std::pair<double, double> region_quality_stats(const QualityMap& map, int y0, int x0, int h,
                                               int w) {
    if (h <= 0 || w <= 0) throw InvalidInput("region_quality_stats: empty rectangle");
    if (y0 < 0 || x0 < 0 || y0 + h > map.height || x0 + w > map.width)
        throw InvalidInput("region_quality_stats: bounds outside map");
    double s = 0.0, ss = 0.0;
    for (int y = y0; y < y0 + h; ++y) {
        for (int x = x0; x < x0 + w; ++x) {
            const double v = map.at(y, x);
            s += v;
            ss += v * v;
        }
    }
    const double n = static_cast<double>(h) * w;
    const double mean = s / n;
    return {mean, std::sqrt(std::max(0.0, ss / n - mean * mean))};
}

RegionPartition adaptive_region_partition(const QualityMap& map, const PartitionParams& params) {
    if (map.height <= 0 || map.width <= 0)
        throw InvalidInput("adaptive_region_partition: empty map");
    if (params.min_side < 1 || params.split_std_threshold < 0.0f)
        throw InvalidInput("adaptive_region_partition: bad params");

    RegionPartition part;
    part.image_height = map.height;
    part.image_width = map.width;
    part.params = params;
    const StatTables tables(map);
    split_recursive(tables, params, 0, 0, map.height, map.width, part.regions);
    return part;
}

std::vector<std::uint32_t> region_pixel_index(const RegionPartition& partition) {
    std::vector<std::uint32_t> raster(
        static_cast<std::size_t>(partition.image_height) * partition.image_width, 0);
    for (const Region& r : partition.regions) {
        for (int y = r.y0; y < r.y0 + r.height; ++y)
            for (int x = r.x0; x < r.x0 + r.width; ++x)
                raster[static_cast<std::size_t>(y) * partition.image_width + x] =
                    static_cast<std::uint32_t>(r.region_id);
    }
    return raster;
}

std::string partition_to_json(const RegionPartition& partition) {
    nlohmann::json j;
    j["params"] = {{"min_side", partition.params.min_side},
                   {"split_std_threshold", partition.params.split_std_threshold}};
    j["image_height"] = partition.image_height;
    j["image_width"] = partition.image_width;
    j["regions"] = nlohmann::json::array();
    for (const Region& r : partition.regions) {
        j["regions"].push_back({{"region_id", r.region_id},
                                {"x0", r.x0},
                                {"y0", r.y0},
                                {"h", r.height},
                                {"w", r.width},
                                {"mean_quality", r.mean_quality},
                                {"quality_std", r.quality_std}});
    }
    return j.dump(2);
}

RegionPartition partition_from_json(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(std::string("partition_from_json: ") + e.what());
    }
    RegionPartition part;
    part.params.min_side = j.at("params").at("min_side").get<int>();
    part.params.split_std_threshold = j.at("params").at("split_std_threshold").get<float>();
    part.image_height = j.at("image_height").get<int>();
    part.image_width = j.at("image_width").get<int>();
    for (const auto& rj : j.at("regions")) {
        Region r;
        r.region_id = rj.at("region_id").get<int>();
        r.x0 = rj.at("x0").get<int>();
        r.y0 = rj.at("y0").get<int>();
        r.height = rj.at("h").get<int>();
        r.width = rj.at("w").get<int>();
        r.mean_quality = rj.at("mean_quality").get<float>();
        r.quality_std = rj.at("quality_std").get<float>();
        part.regions.push_back(r);
    }
    return part;
}

} // namespace qdr
