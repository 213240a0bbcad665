// SPDX-License-Identifier: Apache-2.0
#include "qdr/degrade.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "qdr/errors.hpp"
#include "qdr/png_io.hpp"

namespace fs = std::filesystem;

namespace qdr {

const char* kind_name(DegradationKind kind) {
    switch (kind) {
        case DegradationKind::kLowLight: return "low";
        case DegradationKind::kHaze: return "haze";
        case DegradationKind::kRain: return "rain";
        case DegradationKind::kSnow: return "snow";
    }
    return "?";
}

DegradationKind kind_from_name(const std::string& name) {
    if (name == "low") return DegradationKind::kLowLight;
    if (name == "haze") return DegradationKind::kHaze;
    if (name == "rain") return DegradationKind::kRain;
    if (name == "snow") return DegradationKind::kSnow;
    throw InvalidInput("unknown degradation kind: " + name);
}

namespace {

constexpr std::uint64_t kSaltClean = 0xC1EA;
constexpr std::uint64_t kSaltMask = 0x3A5C;
constexpr std::uint64_t kSaltField = 0xF1E1D;
constexpr std::uint64_t kSaltSeverity = 0x5E7;
constexpr std::uint64_t kSaltOrder = 0x0DA;

double smoothstep(double e0, double e1, double x) {
    const double t = std::clamp((x - e0) / (e1 - e0), 0.0, 1.0);
    return t * t * (3.0 - 2.0 * t);
}

/// Near-vertical bright streaks; field values are peaks (max-combined).
Image rain_field(int h, int w, float severity, Rng& rng) {
    Image field(h, w, 1, 0.0f);
    const int n = static_cast<int>(std::lround(h * static_cast<double>(w) / 48.0 *
                                               (0.5 + 1.5 * severity)));
    for (int i = 0; i < n; ++i) {
        const double cx = rng.uniform(-4.0, w + 4.0);
        const double cy = rng.uniform(-4.0, h + 4.0);
        const double len = rng.uniform(5.0, 12.0);
        const double ang = (90.0 + rng.uniform(-14.0, 14.0)) * M_PI / 180.0;
        const double amp = severity * (0.22 + 0.18 * rng.uniform());
        const double dx = std::cos(ang), dy = std::sin(ang);
        for (double s = 0.0; s < len; s += 0.5) {
            const int px = static_cast<int>(std::lround(cx + s * dx));
            const int py = static_cast<int>(std::lround(cy + s * dy));
            if (px < 0 || px >= w || py < 0 || py >= h) continue;
            float& v = field.at(py, px, 0);
            v = std::max(v, static_cast<float>(amp));
        }
    }
    return field;
}

/// Soft bright dots; field values are peaks (max-combined).
Image snow_field(int h, int w, float severity, Rng& rng) {
    Image field(h, w, 1, 0.0f);
    const int n = static_cast<int>(std::lround(h * static_cast<double>(w) / 90.0 *
                                               (0.5 + 1.5 * severity)));
    for (int i = 0; i < n; ++i) {
        const double cx = rng.uniform(0.0, w);
        const double cy = rng.uniform(0.0, h);
        const double radius = rng.uniform(1.0, 2.6);
        const double amp = severity * (0.35 + 0.35 * rng.uniform());
        const double sigma = radius / 1.6;
        const int r = static_cast<int>(std::ceil(radius + 1.0));
        for (int py = std::max(0, static_cast<int>(cy) - r);
             py <= std::min(h - 1, static_cast<int>(cy) + r); ++py) {
            for (int px = std::max(0, static_cast<int>(cx) - r);
                 px <= std::min(w - 1, static_cast<int>(cx) + r); ++px) {
                const double d2 = (px - cx) * (px - cx) + (py - cy) * (py - cy);
                const double g = amp * std::exp(-d2 / (2.0 * sigma * sigma));
                float& v = field.at(py, px, 0);
                v = std::max(v, static_cast<float>(g));
            }
        }
    }
    return field;
}

int kind_rank(DegradationKind k) {
    switch (k) {
        case DegradationKind::kLowLight: return 0;
        case DegradationKind::kHaze: return 1;
        case DegradationKind::kRain: return 2;
        case DegradationKind::kSnow: return 3;
    }
    return 4;
}

} // namespace

Image gen_clean(std::uint64_t seed, int size) {
    if (size < 16) throw InvalidInput("gen_clean: size must be >= 16");
    Rng rng(mix_seed(seed, kSaltClean));
    Image img(size, size, 3);

    // Bilinear blend of four corner colors.
    float corners[4][3];
    for (auto& corner : corners)
        for (float& c : corner) c = static_cast<float>(rng.uniform(0.3, 0.9));
    for (int y = 0; y < size; ++y) {
        const double fy = static_cast<double>(y) / (size - 1);
        for (int x = 0; x < size; ++x) {
            const double fx = static_cast<double>(x) / (size - 1);
            for (int c = 0; c < 3; ++c) {
                const double top = corners[0][c] * (1 - fx) + corners[1][c] * fx;
                const double bot = corners[2][c] * (1 - fx) + corners[3][c] * fx;
                img.at(y, x, c) = static_cast<float>(top * (1 - fy) + bot * fy);
            }
        }
    }

    // Low-frequency color waves.
    for (int c = 0; c < 3; ++c) {
        const double fx = rng.uniform(0.5, 2.0), fy = rng.uniform(0.5, 2.0);
        const double phase = rng.uniform(0.0, 2.0 * M_PI);
        const double amp = rng.uniform(0.02, 0.06);
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x)
                img.at(y, x, c) += static_cast<float>(
                    amp * std::sin(2.0 * M_PI * (fx * x / size + fy * y / size) + phase));
    }

    // Soft-edged shapes.
    const int n_shapes = static_cast<int>(rng.uniform_int(3, 7));
    for (int i = 0; i < n_shapes; ++i) {
        float color[3];
        for (float& c : color) c = static_cast<float>(rng.uniform(0.3, 0.95));
        const double opacity = rng.uniform(0.7, 1.0);
        if (rng.uniform() < 0.5) {
            const double cx = rng.uniform(0.0, size), cy = rng.uniform(0.0, size);
            const double radius = rng.uniform(0.08, 0.25) * size;
            for (int y = 0; y < size; ++y) {
                for (int x = 0; x < size; ++x) {
                    const double d = std::sqrt((x - cx) * (x - cx) + (y - cy) * (y - cy));
                    const double cov = opacity * (1.0 - smoothstep(radius - 1.5, radius + 1.5, d));
                    if (cov <= 0.0) continue;
                    for (int c = 0; c < 3; ++c)
                        img.at(y, x, c) =
                            static_cast<float>(img.at(y, x, c) * (1 - cov) + color[c] * cov);
                }
            }
        } else {
            const double x0 = rng.uniform(0.0, size * 0.8), y0 = rng.uniform(0.0, size * 0.8);
            const double bw = rng.uniform(0.1, 0.4) * size, bh = rng.uniform(0.1, 0.4) * size;
            for (int y = 0; y < size; ++y) {
                for (int x = 0; x < size; ++x) {
                    const double dx = std::max({x0 - x, x - (x0 + bw), 0.0});
                    const double dy = std::max({y0 - y, y - (y0 + bh), 0.0});
                    const double d = std::sqrt(dx * dx + dy * dy);
                    const double inside =
                        (x >= x0 && x <= x0 + bw && y >= y0 && y <= y0 + bh) ? 0.0 : d;
                    const double cov = opacity * (1.0 - smoothstep(0.0, 1.5, inside));
                    if (cov <= 0.0) continue;
                    for (int c = 0; c < 3; ++c)
                        img.at(y, x, c) =
                            static_cast<float>(img.at(y, x, c) * (1 - cov) + color[c] * cov);
                }
            }
        }
    }

    // Texture noise.
    for (float& v : img.data) v += static_cast<float>(rng.uniform(-0.03, 0.03));
    clip(img, 0.0f, 1.0f);
    return img;
}

DegradedSample apply_degradations(const Image& clean, const DegradationSpec& spec) {
    if (spec.components.empty()) throw InvalidInput("apply_degradations: no components");
    for (const auto& comp : spec.components) {
        if (comp.mask.height != clean.height || comp.mask.width != clean.width)
            throw InvalidInput("apply_degradations: mask shape mismatch");
        if (comp.severity < 0.0f || comp.severity > 1.0f)
            throw InvalidInput("apply_degradations: severity outside [0,1]");
    }

    std::vector<const DegradationComponent*> order;
    for (const auto& comp : spec.components) order.push_back(&comp);
    std::sort(order.begin(), order.end(), [](const auto* a, const auto* b) {
        return kind_rank(a->kind) < kind_rank(b->kind);
    });

    DegradedSample sample;
    sample.clean = clean;
    sample.spec = spec;
    Image out = clean;

    for (const auto* comp : order) {
        const float s = comp->severity;
        switch (comp->kind) {
            case DegradationKind::kLowLight: {
                const double gamma = 1.0 + 2.0 * s;
                for (int y = 0; y < out.height; ++y)
                    for (int x = 0; x < out.width; ++x) {
                        if (comp->mask.at(y, x, 0) <= 0.0f) continue;
                        for (int c = 0; c < 3; ++c)
                            out.at(y, x, c) = static_cast<float>(
                                std::pow(std::max(0.0f, out.at(y, x, c)), gamma));
                    }
                break;
            }
            case DegradationKind::kHaze: {
                const double trans = 1.0 - 0.8 * s;
                for (int y = 0; y < out.height; ++y)
                    for (int x = 0; x < out.width; ++x) {
                        if (comp->mask.at(y, x, 0) <= 0.0f) continue;
                        for (int c = 0; c < 3; ++c)
                            out.at(y, x, c) =
                                static_cast<float>(out.at(y, x, c) * trans + (1.0 - trans));
                    }
                break;
            }
            case DegradationKind::kRain:
            case DegradationKind::kSnow: {
                Rng rng(mix_seed(spec.seed, kSaltField + static_cast<std::uint64_t>(comp->kind)));
                const Image field = comp->kind == DegradationKind::kRain
                                        ? rain_field(out.height, out.width, s, rng)
                                        : snow_field(out.height, out.width, s, rng);
                for (int y = 0; y < out.height; ++y)
                    for (int x = 0; x < out.width; ++x) {
                        if (comp->mask.at(y, x, 0) <= 0.0f) continue;
                        const float add = field.at(y, x, 0);
                        if (add == 0.0f) continue;
                        for (int c = 0; c < 3; ++c) out.at(y, x, c) += add;
                    }
                break;
            }
        }
    }
    clip(out, 0.0f, 1.0f);
    sample.degraded = std::move(out);
    return sample;
}

Image random_blob_mask(int height, int width, Rng& rng, double coverage_lo, double coverage_hi) {
    const int n_bumps = static_cast<int>(rng.uniform_int(2, 4));
    std::vector<double> field(static_cast<std::size_t>(height) * width, 0.0);
    for (int i = 0; i < n_bumps; ++i) {
        const double cx = rng.uniform(0.0, width), cy = rng.uniform(0.0, height);
        const double sigma = rng.uniform(0.15, 0.35) * std::max(height, width);
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x)
                field[static_cast<std::size_t>(y) * width + x] +=
                    std::exp(-((x - cx) * (x - cx) + (y - cy) * (y - cy)) / (2 * sigma * sigma));
    }
    const double coverage = rng.uniform(coverage_lo, coverage_hi);
    std::vector<double> sorted = field;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t cut =
        std::min(sorted.size() - 1,
                 static_cast<std::size_t>((1.0 - coverage) * static_cast<double>(sorted.size())));
    const double threshold = sorted[cut];

    Image mask(height, width, 1, 0.0f);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            mask.at(y, x, 0) =
                field[static_cast<std::size_t>(y) * width + x] > threshold ? 1.0f : 0.0f;
    return mask;
}

const std::vector<std::string>& category_names() {
    static const std::vector<std::string> names = {
        "low",      "haze",      "rain",      "snow",          "low_haze",     "low_rain",
        "low_snow", "haze_rain", "haze_snow", "low_haze_rain", "low_haze_snow"};
    return names;
}

std::vector<DegradationKind> category_kinds(const std::string& category) {
    std::vector<DegradationKind> kinds;
    std::size_t pos = 0;
    while (pos < category.size()) {
        const std::size_t next = category.find('_', pos);
        const std::string part = category.substr(pos, next == std::string::npos ? next : next - pos);
        kinds.push_back(kind_from_name(part));
        if (next == std::string::npos) break;
        pos = next + 1;
    }
    if (kinds.empty()) throw InvalidInput("category_kinds: empty category");
    return kinds;
}

DegradedSample make_sample(std::uint64_t master_seed, int index, int size,
                           const std::string& category) {
    const std::uint64_t sample_seed = mix_seed(master_seed, static_cast<std::uint64_t>(index) + 1);
    const Image clean = gen_clean(sample_seed, size);

    DegradationSpec spec;
    spec.seed = sample_seed;
    Rng rng(mix_seed(sample_seed, kSaltSeverity));
    for (DegradationKind kind : category_kinds(category)) {
        DegradationComponent comp;
        comp.kind = kind;
        comp.severity = static_cast<float>(rng.uniform(0.4, 0.9));
        Rng mask_rng(mix_seed(sample_seed, kSaltMask + static_cast<std::uint64_t>(kind)));
        comp.mask = random_blob_mask(size, size, mask_rng);
        spec.components.push_back(std::move(comp));
    }

    DegradedSample sample = apply_degradations(clean, spec);
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%06d", index);
    sample.sample_id = std::string(buf) + "_" + category;
    return sample;
}

std::vector<std::string> make_dataset(const std::string& root, const DatasetParams& params) {
    if (params.count < 1) throw InvalidInput("make_dataset: count must be >= 1");

    // Resolve category counts by largest remainder, then shuffle the order.
    std::vector<std::pair<std::string, double>> mix = params.mix.weights;
    if (mix.empty())
        for (const auto& name : category_names()) mix.emplace_back(name, 1.0);
    double total_weight = 0.0;
    for (auto& [name, wgt] : mix) {
        if (wgt < 0.0) throw InvalidInput("make_dataset: negative mix weight");
        total_weight += wgt;
    }
    if (total_weight <= 0.0) throw InvalidInput("make_dataset: zero mix weight");

    std::vector<int> counts(mix.size(), 0);
    std::vector<std::pair<double, std::size_t>> remainders;
    int assigned = 0;
    for (std::size_t i = 0; i < mix.size(); ++i) {
        const double exact = params.count * mix[i].second / total_weight;
        counts[i] = static_cast<int>(std::floor(exact));
        assigned += counts[i];
        remainders.emplace_back(exact - counts[i], i);
    }
    std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (int i = 0; assigned < params.count; ++i, ++assigned) counts[remainders[i % remainders.size()].second]++;

    std::vector<std::string> categories;
    for (std::size_t i = 0; i < mix.size(); ++i)
        for (int c = 0; c < counts[i]; ++c) categories.push_back(mix[i].first);
    Rng order_rng(mix_seed(params.seed, kSaltOrder));
    for (std::size_t i = categories.size(); i > 1; --i)
        std::swap(categories[i - 1], categories[order_rng.uniform_int(0, static_cast<std::int64_t>(i) - 1)]);

    fs::create_directories(root);
    std::vector<std::string> ids;
    for (int i = 0; i < params.count; ++i) {
        DegradedSample sample = make_sample(params.seed, i, params.size, categories[i]);
        const fs::path dir = fs::path(root) / sample.sample_id;
        fs::create_directories(dir / "masks");
        write_png((dir / "clean.png").string(), sample.clean);
        write_png((dir / "degraded.png").string(), sample.degraded);

        nlohmann::json j;
        j["category"] = categories[i];
        j["seed"] = sample.spec.seed;
        j["size"] = params.size;
        j["kinds"] = nlohmann::json::array();
        j["severities"] = nlohmann::json::object();
        for (const auto& comp : sample.spec.components) {
            j["kinds"].push_back(kind_name(comp.kind));
            j["severities"][kind_name(comp.kind)] = comp.severity;
            write_png((dir / "masks" / (std::string(kind_name(comp.kind)) + ".png")).string(),
                      comp.mask);
        }
        std::ofstream sf(dir / "spec.json");
        if (!sf) throw FormatError("make_dataset: cannot write spec.json for " + sample.sample_id);
        sf << j.dump(2) << '\n';
        ids.push_back(sample.sample_id);
    }
    return ids;
}

DatasetIndex open_dataset(const std::string& root) {
    DatasetIndex index;
    index.root = root;
    if (!fs::is_directory(root)) throw InvalidInput("open_dataset: not a directory: " + root);
    for (const auto& entry : fs::directory_iterator(root)) {
        if (entry.is_directory() && fs::exists(entry.path() / "spec.json"))
            index.sample_ids.push_back(entry.path().filename().string());
    }
    std::sort(index.sample_ids.begin(), index.sample_ids.end());
    return index;
}

DegradedSample load_sample(const std::string& root, const std::string& sample_id) {
    const fs::path dir = fs::path(root) / sample_id;
    DegradedSample sample;
    sample.sample_id = sample_id;
    sample.clean = read_png((dir / "clean.png").string());
    sample.degraded = read_png((dir / "degraded.png").string());

    std::ifstream sf(dir / "spec.json");
    if (!sf) throw FormatError("load_sample: missing spec.json for " + sample_id);
    nlohmann::json j;
    try {
        sf >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError("load_sample: bad spec.json for " + sample_id + ": " + e.what());
    }
    sample.spec.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& kj : j.at("kinds")) {
        DegradationComponent comp;
        comp.kind = kind_from_name(kj.get<std::string>());
        comp.severity = j.at("severities").at(kj.get<std::string>()).get<float>();
        comp.mask = read_png((dir / "masks" / (kj.get<std::string>() + ".png")).string());
        sample.spec.components.push_back(std::move(comp));
    }
    return sample;
}

} // namespace qdr
