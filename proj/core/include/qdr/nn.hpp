// SPDX-License-Identifier: Apache-2.0
//
// Minimal planar-tensor layers with explicit backward passes. Activations
// and gradients are double precision; parameters are float32 so checkpoint
// serialization is lossless.
#ifndef QDR_NN_HPP
#define QDR_NN_HPP

#include <cstddef>
#include <string>
#include <vector>

#include "qdr/rng.hpp"

namespace qdr::nn {

/// Planar (channel, row, col) activation tensor.
struct Tensor {
    int c = 0, h = 0, w = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(int c_, int h_, int w_) : c(c_), h(h_), w(w_), v(static_cast<std::size_t>(c_) * h_ * w_, 0.0) {}

    double& at(int ci, int y, int x) { return v[plane_offset(ci) + static_cast<std::size_t>(y) * w + x]; }
    double at(int ci, int y, int x) const { return v[plane_offset(ci) + static_cast<std::size_t>(y) * w + x]; }
    double* plane(int ci) { return v.data() + plane_offset(ci); }
    const double* plane(int ci) const { return v.data() + plane_offset(ci); }
    std::size_t plane_offset(int ci) const { return static_cast<std::size_t>(ci) * h * w; }
    std::size_t size() const { return v.size(); }
    void zero() { std::fill(v.begin(), v.end(), 0.0); }
    bool same_shape(const Tensor& o) const { return c == o.c && h == o.h && w == o.w; }
};

/// Flat float32 parameter vector with named segments and a parallel double
/// gradient buffer. Segment names become checkpoint blob names.
class ParamStore {
public:
    struct Segment {
        std::string name;
        std::size_t offset = 0;
        std::size_t count = 0;
    };

    std::size_t add(const std::string& name, std::size_t count) {
        const std::size_t off = values_.size();
        segments_.push_back({name, off, count});
        values_.resize(off + count, 0.0f);
        grads_.resize(off + count, 0.0);
        return off;
    }

    float* values(std::size_t offset) { return values_.data() + offset; }
    const float* values(std::size_t offset) const { return values_.data() + offset; }
    double* grads(std::size_t offset) { return grads_.data() + offset; }

    std::vector<float>& values_vec() { return values_; }
    const std::vector<float>& values_vec() const { return values_; }
    std::vector<double>& grads_vec() { return grads_; }
    const std::vector<Segment>& segments() const { return segments_; }
    const Segment* find_segment(const std::string& name) const {
        for (const auto& s : segments_)
            if (s.name == name) return &s;
        return nullptr;
    }

    std::size_t size() const { return values_.size(); }
    void zero_grads() { std::fill(grads_.begin(), grads_.end(), 0.0); }

    void init_gaussian(std::size_t offset, std::size_t count, Rng& rng, double std_dev) {
        for (std::size_t i = 0; i < count; ++i)
            values_[offset + i] = static_cast<float>(rng.normal() * std_dev);
    }

private:
    std::vector<float> values_;
    std::vector<double> grads_;
    std::vector<Segment> segments_;
};

/// Transformer-style sinusoidal embedding of an integer timestep.
std::vector<double> sinusoidal_embedding(int t, int dim);

// ---------------------------------------------------------------------------
// Convolution primitives. k in {1, 3}; padding k/2; stride in {1, 2}.

struct ConvSpec {
    int ci = 0, co = 0, k = 3, stride = 1;
};

int conv_out_dim(int in_dim, int k, int stride);

void conv_forward(const ConvSpec& spec, const float* weights, const float* bias, const Tensor& in,
                  Tensor& out);
/// Accumulates into d_in.
void conv_backward_input(const ConvSpec& spec, const float* weights, const Tensor& d_out,
                         Tensor& d_in);
/// Accumulates into d_weights / d_bias.
void conv_backward_params(const ConvSpec& spec, const Tensor& in, const Tensor& d_out,
                          double* d_weights, double* d_bias);

/// Nearest-neighbor 2x upsample into a pre-shaped output (extra row/col
/// beyond 2*in is not produced; out dims must be 2*in or 2*in - 1).
void upsample_nearest2(const Tensor& in, Tensor& out);
void upsample_nearest2_backward(const Tensor& d_out, Tensor& d_in);

// ---------------------------------------------------------------------------
// Parameterized layers bound to ParamStore segments.

class Conv {
public:
    Conv() = default;
    /// init_std < 0 selects 1/sqrt(fan_in); zero_init forces all-zero weights.
    Conv(ParamStore& store, const std::string& name, ConvSpec spec, Rng& rng,
         double init_std = -1.0, bool zero_init = false);

    void forward(const ParamStore& store, const Tensor& in, Tensor& out) const;
    /// Accumulates parameter gradients; if d_in is non-null accumulates input gradient.
    void backward(ParamStore& store, const Tensor& in, const Tensor& d_out, Tensor* d_in) const;

    ConvSpec spec;
    std::size_t w_off = 0, b_off = 0;
};

/// x + conv1x1(glu(conv3x3(x))) with a sigmoid gate on the second half of
/// the expanded channels.
class GatedBlock {
public:
    GatedBlock() = default;
    GatedBlock(ParamStore& store, const std::string& name, int channels, Rng& rng);

    struct Cache {
        Tensor u; // expanded pre-gate activations (2c)
        Tensor g; // gated activations (c)
    };

    void forward(const ParamStore& store, const Tensor& x, Tensor& out, Cache* cache) const;
    void backward(ParamStore& store, const Tensor& x, const Cache& cache, const Tensor& d_out,
                  Tensor& d_x) const;

    int channels = 0;
    Conv conv_in;  // c -> 2c, k3
    Conv conv_out; // c -> c, k1
};

/// Adds a learned per-channel bias derived from the timestep embedding.
class TimestepBias {
public:
    TimestepBias() = default;
    TimestepBias(ParamStore& store, const std::string& name, int emb_dim, int channels, Rng& rng);

    void forward(const ParamStore& store, const std::vector<double>& emb, Tensor& x) const;
    /// Gradient w.r.t. x is the identity; only parameter grads accumulate here.
    void backward(ParamStore& store, const std::vector<double>& emb, const Tensor& d_out) const;

    int emb_dim = 0, channels = 0;
    std::size_t w_off = 0, b_off = 0;
};

/// Block-structured pixel-to-token attention mask at one resolution:
/// for each pixel, the list of permitted token spans.
struct TokenSpan {
    int begin = 0;
    int count = 0;
};

struct LevelMask {
    int h = 0, w = 0;
    std::vector<int> offsets;     // h*w + 1 entries into `spans`
    std::vector<TokenSpan> spans; // concatenated per-pixel span lists
};

/// Single-head cross-attention from pixel features to conditioning tokens,
/// evaluated only over each pixel's permitted spans (exact masking).
class CrossAttention {
public:
    CrossAttention() = default;
    CrossAttention(ParamStore& store, const std::string& name, int channels, int inner_dim,
                   int token_dim, Rng& rng);

    struct Cache {
        Tensor q;               // (d, h, w)
        std::vector<double> keys;   // n_tokens * d
        std::vector<double> vals;   // n_tokens * d
        std::vector<double> attn;   // flattened per-pixel weights
        std::vector<int> attn_off;  // h*w + 1
        Tensor ctx;             // (d, h, w)
    };

    void forward(const ParamStore& store, const Tensor& x, const std::vector<double>& tokens,
                 int n_tokens, const LevelMask& mask, Tensor& out, Cache* cache) const;
    void backward(ParamStore& store, const Tensor& x, const std::vector<double>& tokens,
                  int n_tokens, const LevelMask& mask, const Cache& cache, const Tensor& d_out,
                  Tensor& d_x, std::vector<double>& d_tokens) const;

    int channels = 0, inner_dim = 0, token_dim = 0;
    Conv to_q;   // 1x1 c -> d
    Conv to_out; // 1x1 d -> c
    std::size_t wk_off = 0, bk_off = 0, wv_off = 0, bv_off = 0;
};

} // namespace qdr::nn

#endif
