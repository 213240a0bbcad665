// SPDX-License-Identifier: Apache-2.0
#ifndef QDR_PROMPTS_HPP
#define QDR_PROMPTS_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "qdr/image.hpp"
#include "qdr/nn.hpp"
#include "qdr/partition.hpp"

namespace qdr {

/// Prompt-complexity bounds: worst-quality regions receive c_max tokens,
/// pristine regions c_min.
struct ComplexityParams {
    int c_min = 4;
    int c_max = 32;
    float q_min = 1.0f;
    float q_max = 5.0f;
};

/// C(q) = round_half_up(c_min + (c_max - c_min) * (1 - (q - q_min)/(q_max - q_min))).
/// q outside [q_min, q_max] is clipped first.
int complexity(double q, const ComplexityParams& params);

struct PoolConfig {
    int global_len = 8;  // L_g
    int candidates = 32; // split evenly into low-/high-quality sub-pools
    int max_tokens = 32; // tokens per candidate
    int dim = 64;        // embedding width
};

/// Learnable embedding pools: one fixed-length global sequence plus two
/// sub-pools of local candidates (each a key vector and a token matrix).
/// Parameters live in a ParamStore; keys are unit-norm after construction
/// and must be re-normalized after updates.
class PromptPool {
public:
    PromptPool() = default;
    PromptPool(nn::ParamStore& store, const PoolConfig& config, Rng& rng);

    const PoolConfig& config() const { return config_; }
    int sub_pool_size() const { return config_.candidates / 2; }

    const float* global_tokens(const nn::ParamStore& store) const;
    /// pool: 1 = low, 2 = high.
    const float* keys(const nn::ParamStore& store, int pool) const;
    const float* candidate_tokens(const nn::ParamStore& store, int pool, int candidate) const;

    void normalize_keys(nn::ParamStore& store) const;

    std::size_t global_offset() const { return global_off_; }
    std::size_t keys_offset(int pool) const { return pool == 1 ? low_keys_off_ : high_keys_off_; }
    std::size_t tokens_offset(int pool) const { return pool == 1 ? low_tok_off_ : high_tok_off_; }

private:
    PoolConfig config_;
    std::size_t global_off_ = 0;
    std::size_t low_keys_off_ = 0, low_tok_off_ = 0;
    std::size_t high_keys_off_ = 0, high_tok_off_ = 0;
};

constexpr int kPoolGlobal = 0;
constexpr int kPoolLow = 1;
constexpr int kPoolHigh = 2;

/// Deterministic content descriptor: area-resize to 16x16, a fixed seeded
/// two-layer conv projection, global mean pool, L2 normalization.
std::vector<double> region_feature(const Image& crop, int dim);

/// One region's prompt selection.
struct RegionSelection {
    int region_id = 0;
    int complexity = 0;             // token count C_p
    int source_pool = kPoolLow;     // kPoolLow or kPoolHigh
    std::vector<int> candidate_ids; // descending similarity, ties by ascending index
};

/// Pool routing by threshold tau, complexity from the region's mean quality,
/// candidates ranked by key-feature dot product. When C_p exceeds the
/// sub-pool size the token refs wrap to later rows of the selected
/// candidates, so selection never fails.
RegionSelection select_region_prompts(const Region& region, const Image& crop,
                                      const PromptPool& pool, const nn::ParamStore& store,
                                      const ComplexityParams& params, float tau);

/// Selection against a caller-supplied feature vector (the public entry
/// derives the feature from the crop and delegates here).
RegionSelection select_region_prompts_with_feature(const Region& region,
                                                   const std::vector<double>& feature,
                                                   const PromptPool& pool,
                                                   const nn::ParamStore& store,
                                                   const ComplexityParams& params, float tau);

/// Provenance of one conditioning token within the pool.
struct TokenRef {
    int pool = kPoolGlobal;
    int candidate = 0;
    int row = 0;
};

/// Token refs realizing a selection: token k comes from candidate k % n_sel,
/// row k / n_sel.
std::vector<TokenRef> region_token_refs(const RegionSelection& sel);

/// Assembled conditioning: global tokens followed by each region's tokens,
/// with a block-structured pixel-to-token visibility mask.
struct Conditioning {
    int n_tokens = 0;
    int dim = 0;
    std::vector<double> tokens; // n_tokens x dim
    nn::TokenSpan global_span;
    std::vector<nn::TokenSpan> region_spans; // by region_id
    std::vector<TokenRef> sources;           // per token row
    std::vector<std::uint32_t> pixel_region; // full-res region_id raster
    int image_height = 0;
    int image_width = 0;

    bool allowed(int y, int x, int token) const;
    /// Visibility mask at a reduced resolution: a cell may attend to the
    /// global span plus the spans of every region its footprint overlaps.
    nn::LevelMask level_mask(int h, int w) const;
};

Conditioning assemble_conditioning(const RegionPartition& partition,
                                   const std::vector<RegionSelection>& selections,
                                   const PromptPool& pool, const nn::ParamStore& store);

/// Scatter per-token gradients back into the pool's parameter gradients.
void scatter_token_grads(const PromptPool& pool, nn::ParamStore& store, const Conditioning& cond,
                         const std::vector<double>& d_tokens);

} // namespace qdr

#endif
