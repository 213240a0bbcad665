// SPDX-License-Identifier: Apache-2.0
#ifndef QDR_DENOISER_HPP
#define QDR_DENOISER_HPP

#include <cstdint>
#include <vector>

#include "qdr/diffusion.hpp"
#include "qdr/nn.hpp"

namespace qdr {

struct DenoiserConfig {
    int width = 16;     // base channel count; stages run width, 2w, 4w
    int token_dim = 64; // conditioning embedding width (must match the pool)
    int attn_dim = 32;  // cross-attention inner dim
    int emb_dim = 32;   // sinusoidal timestep embedding dim
    bool attn_full = true;
    bool attn_half = true;
    bool attn_quarter = true;
    std::uint64_t seed = 17;
};

/// Tiny U-shaped noise predictor: concat(x_t, y) input, two downsampling
/// stages of gated conv blocks, per-stage timestep biases, masked
/// cross-attention to the conditioning tokens, zero-initialized head.
/// Parameters register into the caller's ParamStore under "denoiser.*".
class ReferenceDenoiser final : public Denoiser {
public:
    ReferenceDenoiser(nn::ParamStore& store, const DenoiserConfig& config);

    nn::Tensor predict_noise(const DenoiserInput& input) const override;

    /// Forward pass retaining every intermediate needed by backward().
    struct Trace {
        std::vector<double> emb;
        nn::Tensor x_cat;
        nn::Tensor a0_in, e0;
        nn::Tensor a1_in, e1;
        nn::Tensor m_in, m1, m2;
        nn::Tensor u1_up, u1, b1_in, d1, d1a;
        nn::Tensor u0_up, u0, b0_in, d0, d0a;
        nn::GatedBlock::Cache g_enc0, g_enc1, g_mid, g_dec1, g_dec0;
        nn::CrossAttention::Cache a_quarter, a_half, a_full;
        nn::LevelMask mask_full, mask_half, mask_quarter;
    };

    nn::Tensor forward_train(const DenoiserInput& input, Trace& trace) const;

    /// Accumulates parameter grads into the store and token grads into
    /// d_tokens (n_tokens x token_dim, caller-zeroed).
    void backward(const DenoiserInput& input, const Trace& trace, const nn::Tensor& d_eps,
                  std::vector<double>& d_tokens) const;

    const DenoiserConfig& config() const { return config_; }
    /// Total parameter count of the denoiser segments.
    std::size_t param_count() const { return param_count_; }

private:
    nn::Tensor run(const DenoiserInput& input, Trace* trace) const;

    nn::ParamStore* store_;
    DenoiserConfig config_;
    std::size_t param_count_ = 0;

    nn::Conv stem_, down1_, down2_, up1_, up0_, head_;
    nn::GatedBlock enc0_, enc1_, mid_, dec1_, dec0_;
    nn::TimestepBias temb0_, temb1_, temb2_, temb3_, temb4_;
    nn::CrossAttention attn_full_, attn_half_, attn_quarter_;
};

} // namespace qdr

#endif
