// SPDX-License-Identifier: Apache-2.0
#include "qdr/prompts.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "qdr/errors.hpp"

namespace qdr {

int complexity(double q, const ComplexityParams& params) {
    const double qc = std::clamp(q, static_cast<double>(params.q_min),
                                 static_cast<double>(params.q_max));
    const double frac = 1.0 - (qc - params.q_min) / (params.q_max - params.q_min);
    const double c = params.c_min + (params.c_max - params.c_min) * frac;
    return static_cast<int>(std::floor(c + 0.5));
}

PromptPool::PromptPool(nn::ParamStore& store, const PoolConfig& config, Rng& rng)
    : config_(config) {
    if (config.global_len < 1 || config.candidates < 2 || config.candidates % 2 != 0 ||
        config.max_tokens < 1 || config.dim < 1)
        throw InvalidInput("PromptPool: bad config");
    const int half = config.candidates / 2;
    const std::size_t d = static_cast<std::size_t>(config.dim);
    global_off_ = store.add("pool.global", static_cast<std::size_t>(config.global_len) * d);
    low_keys_off_ = store.add("pool.low.keys", static_cast<std::size_t>(half) * d);
    low_tok_off_ =
        store.add("pool.low.tokens", static_cast<std::size_t>(half) * config.max_tokens * d);
    high_keys_off_ = store.add("pool.high.keys", static_cast<std::size_t>(half) * d);
    high_tok_off_ =
        store.add("pool.high.tokens", static_cast<std::size_t>(half) * config.max_tokens * d);

    store.init_gaussian(global_off_, static_cast<std::size_t>(config.global_len) * d, rng, 0.02);
    store.init_gaussian(low_keys_off_, static_cast<std::size_t>(half) * d, rng, 0.02);
    store.init_gaussian(low_tok_off_, static_cast<std::size_t>(half) * config.max_tokens * d, rng,
                        0.02);
    store.init_gaussian(high_keys_off_, static_cast<std::size_t>(half) * d, rng, 0.02);
    store.init_gaussian(high_tok_off_, static_cast<std::size_t>(half) * config.max_tokens * d, rng,
                        0.02);
    normalize_keys(store);
}

const float* PromptPool::global_tokens(const nn::ParamStore& store) const {
    return store.values(global_off_);
}

const float* PromptPool::keys(const nn::ParamStore& store, int pool) const {
    return store.values(keys_offset(pool));
}

const float* PromptPool::candidate_tokens(const nn::ParamStore& store, int pool,
                                          int candidate) const {
    return store.values(tokens_offset(pool) +
                        static_cast<std::size_t>(candidate) * config_.max_tokens * config_.dim);
}

void PromptPool::normalize_keys(nn::ParamStore& store) const {
    const int half = sub_pool_size();
    for (std::size_t base : {low_keys_off_, high_keys_off_}) {
        for (int cand = 0; cand < half; ++cand) {
            float* k = store.values(base + static_cast<std::size_t>(cand) * config_.dim);
            double norm = 0.0;
            for (int i = 0; i < config_.dim; ++i) norm += static_cast<double>(k[i]) * k[i];
            norm = std::sqrt(norm);
            if (norm < 1e-12) {
                k[0] = 1.0f; // degenerate key becomes a basis vector
                norm = 1.0;
            }
            for (int i = 0; i < config_.dim; ++i)
                k[i] = static_cast<float>(static_cast<double>(k[i]) / norm);
        }
    }
}

namespace {

constexpr std::uint64_t kFeatureSeed = 0x51f0e5u; // frozen extractor identity

/// Fixed conv weights for the region-feature projection, regenerated
/// deterministically per embedding width.
struct FeatureStack {
    nn::ParamStore store;
    nn::Conv conv1, conv2;

    explicit FeatureStack(int dim) {
        Rng rng(mix_seed(kFeatureSeed, static_cast<std::uint64_t>(dim)));
        conv1 = nn::Conv(store, "f1", nn::ConvSpec{3, 8, 3, 1}, rng);
        conv2 = nn::Conv(store, "f2", nn::ConvSpec{8, dim, 3, 1}, rng);
    }
};

const FeatureStack& feature_stack(int dim) {
    static FeatureStack stack64(64);
    if (dim == 64) return stack64;
    thread_local std::unique_ptr<FeatureStack> other;
    if (!other || other->conv2.spec.co != dim) other = std::make_unique<FeatureStack>(dim);
    return *other;
}

} // namespace

std::vector<double> region_feature(const Image& crop, int dim) {
    if (crop.height <= 0 || crop.width <= 0) throw InvalidInput("region_feature: empty crop");
    const Image small = resize_area(crop, 16, 16);

    nn::Tensor x(3, 16, 16);
    for (int y = 0; y < 16; ++y)
        for (int xx = 0; xx < 16; ++xx)
            for (int c = 0; c < 3; ++c)
                x.at(c, y, xx) = small.channels == 3 ? small.at(y, xx, c) : small.at(y, xx, 0);

    const FeatureStack& fs = feature_stack(dim);
    nn::Tensor h1(8, 16, 16);
    fs.conv1.forward(fs.store, x, h1);
    for (double& v : h1.v) v = std::tanh(v);
    nn::Tensor h2(dim, 16, 16);
    fs.conv2.forward(fs.store, h1, h2);

    std::vector<double> feat(dim, 0.0);
    const double inv = 1.0 / (16.0 * 16.0);
    for (int c = 0; c < dim; ++c) {
        const double* p = h2.plane(c);
        double s = 0.0;
        for (int i = 0; i < 256; ++i) s += p[i];
        feat[c] = s * inv;
    }
    double norm = 0.0;
    for (double v : feat) norm += v * v;
    norm = std::sqrt(norm);
    if (norm > 1e-12)
        for (double& v : feat) v /= norm;
    return feat;
}

RegionSelection select_region_prompts(const Region& region, const Image& crop,
                                      const PromptPool& pool, const nn::ParamStore& store,
                                      const ComplexityParams& params, float tau) {
    return select_region_prompts_with_feature(region, region_feature(crop, pool.config().dim),
                                              pool, store, params, tau);
}

RegionSelection select_region_prompts_with_feature(const Region& region,
                                                   const std::vector<double>& feat,
                                                   const PromptPool& pool,
                                                   const nn::ParamStore& store,
                                                   const ComplexityParams& params, float tau) {
    const PoolConfig& cfg = pool.config();
    if (params.c_min < 1 || params.c_min > params.c_max || params.c_max > cfg.max_tokens)
        throw InvalidInput("select_region_prompts: complexity bounds incompatible with pool");
    if (static_cast<int>(feat.size()) != cfg.dim)
        throw InvalidInput("select_region_prompts: feature dim mismatch");

    RegionSelection sel;
    sel.region_id = region.region_id;
    sel.source_pool = region.mean_quality > tau ? kPoolHigh : kPoolLow;
    sel.complexity = complexity(region.mean_quality, params);

    const float* keys = pool.keys(store, sel.source_pool);
    const int n_cand = pool.sub_pool_size();

    std::vector<double> sims(n_cand, 0.0);
    for (int cand = 0; cand < n_cand; ++cand) {
        const float* k = keys + static_cast<std::size_t>(cand) * cfg.dim;
        double dot = 0.0;
        for (int i = 0; i < cfg.dim; ++i) dot += static_cast<double>(k[i]) * feat[i];
        sims[cand] = dot;
    }

    std::vector<int> order(n_cand);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (sims[a] != sims[b]) return sims[a] > sims[b];
        return a < b;
    });

    const int n_sel = std::min(sel.complexity, n_cand);
    sel.candidate_ids.assign(order.begin(), order.begin() + n_sel);
    return sel;
}

std::vector<TokenRef> region_token_refs(const RegionSelection& sel) {
    std::vector<TokenRef> refs;
    refs.reserve(sel.complexity);
    const int n_sel = static_cast<int>(sel.candidate_ids.size());
    for (int k = 0; k < sel.complexity; ++k)
        refs.push_back(TokenRef{sel.source_pool, sel.candidate_ids[k % n_sel], k / n_sel});
    return refs;
}

bool Conditioning::allowed(int y, int x, int token) const {
    if (token >= global_span.begin && token < global_span.begin + global_span.count) return true;
    const std::uint32_t rid = pixel_region[static_cast<std::size_t>(y) * image_width + x];
    const nn::TokenSpan span = region_spans[rid];
    return token >= span.begin && token < span.begin + span.count;
}

nn::LevelMask Conditioning::level_mask(int h, int w) const {
    nn::LevelMask mask;
    mask.h = h;
    mask.w = w;
    mask.offsets.assign(static_cast<std::size_t>(h) * w + 1, 0);
    std::vector<std::uint32_t> ids;
    for (int y = 0; y < h; ++y) {
        const int y0 = y * image_height / h;
        const int y1 = std::max(y0 + 1, (y + 1) * image_height / h);
        for (int x = 0; x < w; ++x) {
            const int x0 = x * image_width / w;
            const int x1 = std::max(x0 + 1, (x + 1) * image_width / w);
            ids.clear();
            for (int yy = y0; yy < y1; ++yy) {
                for (int xx = x0; xx < x1; ++xx) {
                    const std::uint32_t rid =
                        pixel_region[static_cast<std::size_t>(yy) * image_width + xx];
                    if (std::find(ids.begin(), ids.end(), rid) == ids.end()) ids.push_back(rid);
                }
            }
            std::sort(ids.begin(), ids.end());
            mask.spans.push_back(global_span);
            for (std::uint32_t rid : ids) {
                if (region_spans[rid].count > 0) mask.spans.push_back(region_spans[rid]);
            }
            mask.offsets[static_cast<std::size_t>(y) * w + x + 1] =
                static_cast<int>(mask.spans.size());
        }
    }
    return mask;
}

Conditioning assemble_conditioning(const RegionPartition& partition,
                                   const std::vector<RegionSelection>& selections,
                                   const PromptPool& pool, const nn::ParamStore& store) {
    if (selections.size() != partition.regions.size())
        throw InvalidInput("assemble_conditioning: selection/partition mismatch");
    for (std::size_t i = 0; i < selections.size(); ++i) {
        if (selections[i].region_id != partition.regions[i].region_id)
            throw InvalidInput("assemble_conditioning: selection/partition region_id mismatch");
    }

    const PoolConfig& cfg = pool.config();
    Conditioning cond;
    cond.dim = cfg.dim;
    cond.image_height = partition.image_height;
    cond.image_width = partition.image_width;
    cond.pixel_region = region_pixel_index(partition);

    int total = cfg.global_len;
    for (const auto& sel : selections) total += sel.complexity;
    cond.n_tokens = total;
    cond.tokens.resize(static_cast<std::size_t>(total) * cfg.dim);
    cond.sources.resize(total);

    int row = 0;
    const float* g = pool.global_tokens(store);
    cond.global_span = nn::TokenSpan{0, cfg.global_len};
    for (int i = 0; i < cfg.global_len; ++i, ++row) {
        for (int d = 0; d < cfg.dim; ++d)
            cond.tokens[static_cast<std::size_t>(row) * cfg.dim + d] =
                g[static_cast<std::size_t>(i) * cfg.dim + d];
        cond.sources[row] = TokenRef{kPoolGlobal, 0, i};
    }

    cond.region_spans.resize(selections.size());
    for (const auto& sel : selections) {
        cond.region_spans[sel.region_id] = nn::TokenSpan{row, sel.complexity};
        for (const TokenRef& ref : region_token_refs(sel)) {
            const float* tok = pool.candidate_tokens(store, ref.pool, ref.candidate) +
                               static_cast<std::size_t>(ref.row) * cfg.dim;
            for (int d = 0; d < cfg.dim; ++d)
                cond.tokens[static_cast<std::size_t>(row) * cfg.dim + d] = tok[d];
            cond.sources[row] = ref;
            ++row;
        }
    }
    return cond;
}

void scatter_token_grads(const PromptPool& pool, nn::ParamStore& store, const Conditioning& cond,
                         const std::vector<double>& d_tokens) {
    const PoolConfig& cfg = pool.config();
    for (int n = 0; n < cond.n_tokens; ++n) {
        const TokenRef& ref = cond.sources[n];
        std::size_t off;
        if (ref.pool == kPoolGlobal) {
            off = pool.global_offset() + static_cast<std::size_t>(ref.row) * cfg.dim;
        } else {
            off = pool.tokens_offset(ref.pool) +
                  (static_cast<std::size_t>(ref.candidate) * cfg.max_tokens + ref.row) * cfg.dim;
        }
        double* dst = store.grads(off);
        const double* src = d_tokens.data() + static_cast<std::size_t>(n) * cfg.dim;
        for (int d = 0; d < cfg.dim; ++d) dst[d] += src[d];
    }
}

} // namespace qdr
