// SPDX-License-Identifier: Apache-2.0
#include "qdr/denoiser.hpp"

#include "qdr/errors.hpp"

namespace qdr {

using nn::ConvSpec;
using nn::Tensor;

ReferenceDenoiser::ReferenceDenoiser(nn::ParamStore& store, const DenoiserConfig& config)
    : store_(&store), config_(config) {
    const std::size_t before = store.size();
    Rng rng(config.seed);
    const int w = config.width;
    const int c0 = w, c1 = 2 * w, c2 = 4 * w;

    stem_ = nn::Conv(store, "denoiser.stem", ConvSpec{6, c0, 3, 1}, rng);
    temb0_ = nn::TimestepBias(store, "denoiser.temb0", config.emb_dim, c0, rng);
    enc0_ = nn::GatedBlock(store, "denoiser.enc0", c0, rng);
    down1_ = nn::Conv(store, "denoiser.down1", ConvSpec{c0, c1, 3, 2}, rng);
    temb1_ = nn::TimestepBias(store, "denoiser.temb1", config.emb_dim, c1, rng);
    enc1_ = nn::GatedBlock(store, "denoiser.enc1", c1, rng);
    down2_ = nn::Conv(store, "denoiser.down2", ConvSpec{c1, c2, 3, 2}, rng);
    temb2_ = nn::TimestepBias(store, "denoiser.temb2", config.emb_dim, c2, rng);
    mid_ = nn::GatedBlock(store, "denoiser.mid", c2, rng);
    if (config.attn_quarter)
        attn_quarter_ = nn::CrossAttention(store, "denoiser.attn2", c2, config.attn_dim,
                                           config.token_dim, rng);
    up1_ = nn::Conv(store, "denoiser.up1", ConvSpec{c2, c1, 3, 1}, rng);
    temb3_ = nn::TimestepBias(store, "denoiser.temb3", config.emb_dim, c1, rng);
    dec1_ = nn::GatedBlock(store, "denoiser.dec1", c1, rng);
    if (config.attn_half)
        attn_half_ =
            nn::CrossAttention(store, "denoiser.attn1", c1, config.attn_dim, config.token_dim, rng);
    up0_ = nn::Conv(store, "denoiser.up0", ConvSpec{c1, c0, 3, 1}, rng);
    temb4_ = nn::TimestepBias(store, "denoiser.temb4", config.emb_dim, c0, rng);
    dec0_ = nn::GatedBlock(store, "denoiser.dec0", c0, rng);
    if (config.attn_full)
        attn_full_ =
            nn::CrossAttention(store, "denoiser.attn0", c0, config.attn_dim, config.token_dim, rng);
    head_ = nn::Conv(store, "denoiser.head", ConvSpec{c0, 3, 1, 1}, rng, -1.0, /*zero_init=*/true);

    param_count_ = store.size() - before;
}

nn::Tensor ReferenceDenoiser::predict_noise(const DenoiserInput& input) const {
    return run(input, nullptr);
}

nn::Tensor ReferenceDenoiser::forward_train(const DenoiserInput& input, Trace& trace) const {
    return run(input, &trace);
}

nn::Tensor ReferenceDenoiser::run(const DenoiserInput& input, Trace* tr) const {
    const Tensor& x_t = *input.x_t;
    const Tensor& y = *input.y;
    if (!x_t.same_shape(y) || x_t.c != 3)
        throw InvalidInput("denoiser: x_t and y must be (3,h,w) and match");
    if (input.conditioning == nullptr) throw InvalidInput("denoiser: missing conditioning");
    if (input.conditioning->dim != config_.token_dim)
        throw InvalidInput("denoiser: conditioning dim mismatch");

    const nn::ParamStore& store = *store_;
    const Conditioning& cond = *input.conditioning;
    const int H = x_t.h, W = x_t.w;
    const int c0 = config_.width, c1 = 2 * c0, c2 = 4 * c0;

    Trace local;
    Trace& t = tr ? *tr : local;

    t.emb = nn::sinusoidal_embedding(input.t, config_.emb_dim);

    t.x_cat = Tensor(6, H, W);
    std::copy(x_t.v.begin(), x_t.v.end(), t.x_cat.v.begin());
    std::copy(y.v.begin(), y.v.end(), t.x_cat.v.begin() + x_t.v.size());

    // Encoder, full resolution.
    t.a0_in = Tensor(c0, H, W);
    stem_.forward(store, t.x_cat, t.a0_in);
    temb0_.forward(store, t.emb, t.a0_in);
    enc0_.forward(store, t.a0_in, t.e0, tr ? &t.g_enc0 : nullptr);

    // Half resolution.
    const int H2 = nn::conv_out_dim(H, 3, 2), W2 = nn::conv_out_dim(W, 3, 2);
    t.a1_in = Tensor(c1, H2, W2);
    down1_.forward(store, t.e0, t.a1_in);
    temb1_.forward(store, t.emb, t.a1_in);
    enc1_.forward(store, t.a1_in, t.e1, tr ? &t.g_enc1 : nullptr);

    // Quarter resolution.
    const int H4 = nn::conv_out_dim(H2, 3, 2), W4 = nn::conv_out_dim(W2, 3, 2);
    t.m_in = Tensor(c2, H4, W4);
    down2_.forward(store, t.e1, t.m_in);
    temb2_.forward(store, t.emb, t.m_in);
    mid_.forward(store, t.m_in, t.m1, tr ? &t.g_mid : nullptr);
    if (config_.attn_quarter) {
        t.mask_quarter = cond.level_mask(H4, W4);
        attn_quarter_.forward(store, t.m1, cond.tokens, cond.n_tokens, t.mask_quarter, t.m2,
                              tr ? &t.a_quarter : nullptr);
    } else {
        t.m2 = t.m1;
    }

    // Decoder, half resolution.
    t.u1_up = Tensor(c2, H2, W2);
    nn::upsample_nearest2(t.m2, t.u1_up);
    t.u1 = Tensor(c1, H2, W2);
    up1_.forward(store, t.u1_up, t.u1);
    for (std::size_t i = 0; i < t.u1.v.size(); ++i) t.u1.v[i] += t.e1.v[i];
    t.b1_in = t.u1;
    temb3_.forward(store, t.emb, t.b1_in);
    dec1_.forward(store, t.b1_in, t.d1, tr ? &t.g_dec1 : nullptr);
    if (config_.attn_half) {
        t.mask_half = cond.level_mask(H2, W2);
        attn_half_.forward(store, t.d1, cond.tokens, cond.n_tokens, t.mask_half, t.d1a,
                           tr ? &t.a_half : nullptr);
    } else {
        t.d1a = t.d1;
    }

    // Decoder, full resolution.
    t.u0_up = Tensor(c1, H, W);
    nn::upsample_nearest2(t.d1a, t.u0_up);
    t.u0 = Tensor(c0, H, W);
    up0_.forward(store, t.u0_up, t.u0);
    for (std::size_t i = 0; i < t.u0.v.size(); ++i) t.u0.v[i] += t.e0.v[i];
    t.b0_in = t.u0;
    temb4_.forward(store, t.emb, t.b0_in);
    dec0_.forward(store, t.b0_in, t.d0, tr ? &t.g_dec0 : nullptr);
    if (config_.attn_full) {
        t.mask_full = cond.level_mask(H, W);
        attn_full_.forward(store, t.d0, cond.tokens, cond.n_tokens, t.mask_full, t.d0a,
                           tr ? &t.a_full : nullptr);
    } else {
        t.d0a = t.d0;
    }

    Tensor eps(3, H, W);
    head_.forward(store, t.d0a, eps);
    return eps;
}

void ReferenceDenoiser::backward(const DenoiserInput& input, const Trace& t, const Tensor& d_eps,
                                 std::vector<double>& d_tokens) const {
    nn::ParamStore& store = *store_;
    const Conditioning& cond = *input.conditioning;
    const int H = input.x_t->h, W = input.x_t->w;
    const int c0 = config_.width, c1 = 2 * c0, c2 = 4 * c0;
    const int H2 = t.a1_in.h, W2 = t.a1_in.w;
    const int H4 = t.m_in.h, W4 = t.m_in.w;

    Tensor d_d0a(c0, H, W);
    head_.backward(store, t.d0a, d_eps, &d_d0a);

    Tensor d_d0(c0, H, W);
    if (config_.attn_full) {
        attn_full_.backward(store, t.d0, cond.tokens, cond.n_tokens, t.mask_full, t.a_full, d_d0a,
                            d_d0, d_tokens);
    } else {
        d_d0 = d_d0a;
    }

    Tensor d_b0_in(c0, H, W);
    dec0_.backward(store, t.b0_in, t.g_dec0, d_d0, d_b0_in);
    temb4_.backward(store, t.emb, d_b0_in);

    // u0 = up0(u0_up) + e0 skip.
    Tensor d_u0_up(c1, H, W);
    up0_.backward(store, t.u0_up, d_b0_in, &d_u0_up);
    Tensor d_d1a(c1, H2, W2);
    nn::upsample_nearest2_backward(d_u0_up, d_d1a);

    Tensor d_d1(c1, H2, W2);
    if (config_.attn_half) {
        attn_half_.backward(store, t.d1, cond.tokens, cond.n_tokens, t.mask_half, t.a_half, d_d1a,
                            d_d1, d_tokens);
    } else {
        d_d1 = d_d1a;
    }

    Tensor d_b1_in(c1, H2, W2);
    dec1_.backward(store, t.b1_in, t.g_dec1, d_d1, d_b1_in);
    temb3_.backward(store, t.emb, d_b1_in);

    Tensor d_u1_up(c2, H2, W2);
    up1_.backward(store, t.u1_up, d_b1_in, &d_u1_up);
    Tensor d_m2(c2, H4, W4);
    nn::upsample_nearest2_backward(d_u1_up, d_m2);

    Tensor d_m1(c2, H4, W4);
    if (config_.attn_quarter) {
        attn_quarter_.backward(store, t.m1, cond.tokens, cond.n_tokens, t.mask_quarter,
                               t.a_quarter, d_m2, d_m1, d_tokens);
    } else {
        d_m1 = d_m2;
    }

    Tensor d_m_in(c2, H4, W4);
    mid_.backward(store, t.m_in, t.g_mid, d_m1, d_m_in);
    temb2_.backward(store, t.emb, d_m_in);

    Tensor d_e1(c1, H2, W2);
    down2_.backward(store, t.e1, d_m_in, &d_e1);
    // Skip connection into u1.
    for (std::size_t i = 0; i < d_e1.v.size(); ++i) d_e1.v[i] += d_b1_in.v[i];

    Tensor d_a1_in(c1, H2, W2);
    enc1_.backward(store, t.a1_in, t.g_enc1, d_e1, d_a1_in);
    temb1_.backward(store, t.emb, d_a1_in);

    Tensor d_e0(c0, H, W);
    down1_.backward(store, t.e0, d_a1_in, &d_e0);
    for (std::size_t i = 0; i < d_e0.v.size(); ++i) d_e0.v[i] += d_b0_in.v[i];

    Tensor d_a0_in(c0, H, W);
    enc0_.backward(store, t.a0_in, t.g_enc0, d_e0, d_a0_in);
    temb0_.backward(store, t.emb, d_a0_in);

    stem_.backward(store, t.x_cat, d_a0_in, nullptr);
}

} // namespace qdr
