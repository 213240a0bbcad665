// SPDX-License-Identifier: Apache-2.0
#include "qdr/nn.hpp"

#include <algorithm>
#include <cmath>

#include "qdr/errors.hpp"

namespace qdr::nn {

std::vector<double> sinusoidal_embedding(int t, int dim) {
    std::vector<double> emb(dim, 0.0);
    const int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * i / std::max(1, half - 1));
        emb[i] = std::sin(t * freq);
        emb[half + i] = std::cos(t * freq);
    }
    return emb;
}

int conv_out_dim(int in_dim, int k, int stride) {
    const int pad = k / 2;
    return (in_dim + 2 * pad - k) / stride + 1;
}

// Weight layout: [co][ci][ky][kx]; bias [co].
void conv_forward(const ConvSpec& spec, const float* weights, const float* bias, const Tensor& in,
                  Tensor& out) {
    const int k = spec.k, s = spec.stride, pad = k / 2;
    const int oh = out.h, ow = out.w, iw = in.w, ih = in.h;
    for (int co = 0; co < spec.co; ++co) {
        double* op = out.plane(co);
        const double bv = bias ? static_cast<double>(bias[co]) : 0.0;
        std::fill(op, op + static_cast<std::size_t>(oh) * ow, bv);
        for (int ci = 0; ci < spec.ci; ++ci) {
            const double* ip = in.plane(ci);
            const float* wbase = weights + (static_cast<std::size_t>(co) * spec.ci + ci) * k * k;
            for (int ky = 0; ky < k; ++ky) {
                for (int kx = 0; kx < k; ++kx) {
                    const double wv = wbase[ky * k + kx];
                    if (wv == 0.0) continue;
                    for (int y = 0; y < oh; ++y) {
                        const int iy = y * s + ky - pad;
                        if (iy < 0 || iy >= ih) continue;
                        const double* irow = ip + static_cast<std::size_t>(iy) * iw;
                        double* orow = op + static_cast<std::size_t>(y) * ow;
                        if (s == 1) {
                            const int x0 = std::max(0, pad - kx);
                            const int x1 = std::min(ow, iw + pad - kx);
                            const double* ir = irow + (x0 + kx - pad);
                            for (int x = x0; x < x1; ++x) orow[x] += wv * ir[x - x0];
                        } else {
                            for (int x = 0; x < ow; ++x) {
                                const int ix = x * s + kx - pad;
                                if (ix < 0 || ix >= iw) continue;
                                orow[x] += wv * irow[ix];
                            }
                        }
                    }
                }
            }
        }
    }
}

void conv_backward_input(const ConvSpec& spec, const float* weights, const Tensor& d_out,
                         Tensor& d_in) {
    const int k = spec.k, s = spec.stride, pad = k / 2;
    const int oh = d_out.h, ow = d_out.w, iw = d_in.w, ih = d_in.h;
    for (int co = 0; co < spec.co; ++co) {
        const double* dop = d_out.plane(co);
        for (int ci = 0; ci < spec.ci; ++ci) {
            double* dip = d_in.plane(ci);
            const float* wbase = weights + (static_cast<std::size_t>(co) * spec.ci + ci) * k * k;
            for (int ky = 0; ky < k; ++ky) {
                for (int kx = 0; kx < k; ++kx) {
                    const double wv = wbase[ky * k + kx];
                    if (wv == 0.0) continue;
                    for (int y = 0; y < oh; ++y) {
                        const int iy = y * s + ky - pad;
                        if (iy < 0 || iy >= ih) continue;
                        double* drow = dip + static_cast<std::size_t>(iy) * iw;
                        const double* dorow = dop + static_cast<std::size_t>(y) * ow;
                        if (s == 1) {
                            const int x0 = std::max(0, pad - kx);
                            const int x1 = std::min(ow, iw + pad - kx);
                            double* dr = drow + (x0 + kx - pad);
                            for (int x = x0; x < x1; ++x) dr[x - x0] += wv * dorow[x];
                        } else {
                            for (int x = 0; x < ow; ++x) {
                                const int ix = x * s + kx - pad;
                                if (ix < 0 || ix >= iw) continue;
                                drow[ix] += wv * dorow[x];
                            }
                        }
                    }
                }
            }
        }
    }
}

void conv_backward_params(const ConvSpec& spec, const Tensor& in, const Tensor& d_out,
                          double* d_weights, double* d_bias) {
    const int k = spec.k, s = spec.stride, pad = k / 2;
    const int oh = d_out.h, ow = d_out.w, iw = in.w, ih = in.h;
    for (int co = 0; co < spec.co; ++co) {
        const double* dop = d_out.plane(co);
        if (d_bias) {
            double acc = 0.0;
            for (std::size_t i = 0; i < static_cast<std::size_t>(oh) * ow; ++i) acc += dop[i];
            d_bias[co] += acc;
        }
        for (int ci = 0; ci < spec.ci; ++ci) {
            const double* ip = in.plane(ci);
            double* dwbase = d_weights + (static_cast<std::size_t>(co) * spec.ci + ci) * k * k;
            for (int ky = 0; ky < k; ++ky) {
                for (int kx = 0; kx < k; ++kx) {
                    double acc = 0.0;
                    for (int y = 0; y < oh; ++y) {
                        const int iy = y * s + ky - pad;
                        if (iy < 0 || iy >= ih) continue;
                        const double* irow = ip + static_cast<std::size_t>(iy) * iw;
                        const double* dorow = dop + static_cast<std::size_t>(y) * ow;
                        if (s == 1) {
                            const int x0 = std::max(0, pad - kx);
                            const int x1 = std::min(ow, iw + pad - kx);
                            const double* ir = irow + (x0 + kx - pad);
                            for (int x = x0; x < x1; ++x) acc += ir[x - x0] * dorow[x];
                        } else {
                            for (int x = 0; x < ow; ++x) {
                                const int ix = x * s + kx - pad;
                                if (ix < 0 || ix >= iw) continue;
                                acc += irow[ix] * dorow[x];
                            }
                        }
                    }
                    dwbase[ky * k + kx] += acc;
                }
            }
        }
    }
}

void upsample_nearest2(const Tensor& in, Tensor& out) {
    for (int c = 0; c < in.c; ++c) {
        const double* ip = in.plane(c);
        double* op = out.plane(c);
        for (int y = 0; y < out.h; ++y) {
            const double* irow = ip + static_cast<std::size_t>(std::min(y / 2, in.h - 1)) * in.w;
            double* orow = op + static_cast<std::size_t>(y) * out.w;
            for (int x = 0; x < out.w; ++x) orow[x] = irow[std::min(x / 2, in.w - 1)];
        }
    }
}

void upsample_nearest2_backward(const Tensor& d_out, Tensor& d_in) {
    for (int c = 0; c < d_in.c; ++c) {
        const double* dop = d_out.plane(c);
        double* dip = d_in.plane(c);
        for (int y = 0; y < d_out.h; ++y) {
            double* drow = dip + static_cast<std::size_t>(std::min(y / 2, d_in.h - 1)) * d_in.w;
            const double* dorow = dop + static_cast<std::size_t>(y) * d_out.w;
            for (int x = 0; x < d_out.w; ++x) drow[std::min(x / 2, d_in.w - 1)] += dorow[x];
        }
    }
}

Conv::Conv(ParamStore& store, const std::string& name, ConvSpec spec_, Rng& rng, double init_std,
           bool zero_init)
    : spec(spec_) {
    const std::size_t n_w = static_cast<std::size_t>(spec.co) * spec.ci * spec.k * spec.k;
    w_off = store.add(name + ".w", n_w);
    b_off = store.add(name + ".b", spec.co);
    if (!zero_init) {
        const double sd = init_std > 0.0 ? init_std : 1.0 / std::sqrt(static_cast<double>(spec.ci) * spec.k * spec.k);
        store.init_gaussian(w_off, n_w, rng, sd);
    }
}

void Conv::forward(const ParamStore& store, const Tensor& in, Tensor& out) const {
    conv_forward(spec, store.values(w_off), store.values(b_off), in, out);
}

void Conv::backward(ParamStore& store, const Tensor& in, const Tensor& d_out, Tensor* d_in) const {
    conv_backward_params(spec, in, d_out, store.grads(w_off), store.grads(b_off));
    if (d_in) conv_backward_input(spec, store.values(w_off), d_out, *d_in);
}

GatedBlock::GatedBlock(ParamStore& store, const std::string& name, int channels_, Rng& rng)
    : channels(channels_),
      conv_in(store, name + ".in", ConvSpec{channels_, 2 * channels_, 3, 1}, rng),
      conv_out(store, name + ".out", ConvSpec{channels_, channels_, 1, 1}, rng) {}

void GatedBlock::forward(const ParamStore& store, const Tensor& x, Tensor& out, Cache* cache) const {
    Tensor u(2 * channels, x.h, x.w);
    conv_in.forward(store, x, u);
    Tensor g(channels, x.h, x.w);
    const std::size_t plane = static_cast<std::size_t>(x.h) * x.w;
    for (int c = 0; c < channels; ++c) {
        const double* a = u.plane(c);
        const double* b = u.plane(channels + c);
        double* gp = g.plane(c);
        for (std::size_t i = 0; i < plane; ++i) gp[i] = a[i] / (1.0 + std::exp(-b[i]));
    }
    out = Tensor(channels, x.h, x.w);
    conv_out.forward(store, g, out);
    for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] += x.v[i];
    if (cache) {
        cache->u = std::move(u);
        cache->g = std::move(g);
    }
}

void GatedBlock::backward(ParamStore& store, const Tensor& x, const Cache& cache,
                          const Tensor& d_out, Tensor& d_x) const {
    // Residual branch.
    for (std::size_t i = 0; i < d_out.v.size(); ++i) d_x.v[i] += d_out.v[i];

    Tensor d_g(channels, x.h, x.w);
    conv_out.backward(store, cache.g, d_out, &d_g);

    Tensor d_u(2 * channels, x.h, x.w);
    const std::size_t plane = static_cast<std::size_t>(x.h) * x.w;
    for (int c = 0; c < channels; ++c) {
        const double* a = cache.u.plane(c);
        const double* b = cache.u.plane(channels + c);
        const double* dg = d_g.plane(c);
        double* da = d_u.plane(c);
        double* db = d_u.plane(channels + c);
        for (std::size_t i = 0; i < plane; ++i) {
            const double sig = 1.0 / (1.0 + std::exp(-b[i]));
            da[i] = dg[i] * sig;
            db[i] = dg[i] * a[i] * sig * (1.0 - sig);
        }
    }
    conv_in.backward(store, x, d_u, &d_x);
}

TimestepBias::TimestepBias(ParamStore& store, const std::string& name, int emb_dim_, int channels_,
                           Rng& rng)
    : emb_dim(emb_dim_), channels(channels_) {
    w_off = store.add(name + ".w", static_cast<std::size_t>(channels_) * emb_dim_);
    b_off = store.add(name + ".b", channels_);
    store.init_gaussian(w_off, static_cast<std::size_t>(channels_) * emb_dim_, rng, 0.02);
}

void TimestepBias::forward(const ParamStore& store, const std::vector<double>& emb,
                           Tensor& x) const {
    const float* w = store.values(w_off);
    const float* b = store.values(b_off);
    const std::size_t plane = static_cast<std::size_t>(x.h) * x.w;
    for (int c = 0; c < channels; ++c) {
        double delta = b[c];
        for (int e = 0; e < emb_dim; ++e) delta += static_cast<double>(w[c * emb_dim + e]) * emb[e];
        double* p = x.plane(c);
        for (std::size_t i = 0; i < plane; ++i) p[i] += delta;
    }
}

void TimestepBias::backward(ParamStore& store, const std::vector<double>& emb,
                            const Tensor& d_out) const {
    double* dw = store.grads(w_off);
    double* db = store.grads(b_off);
    const std::size_t plane = static_cast<std::size_t>(d_out.h) * d_out.w;
    for (int c = 0; c < channels; ++c) {
        const double* p = d_out.plane(c);
        double s = 0.0;
        for (std::size_t i = 0; i < plane; ++i) s += p[i];
        db[c] += s;
        for (int e = 0; e < emb_dim; ++e) dw[c * emb_dim + e] += s * emb[e];
    }
}

CrossAttention::CrossAttention(ParamStore& store, const std::string& name, int channels_,
                               int inner_dim_, int token_dim_, Rng& rng)
    : channels(channels_),
      inner_dim(inner_dim_),
      token_dim(token_dim_),
      to_q(store, name + ".q", ConvSpec{channels_, inner_dim_, 1, 1}, rng),
      to_out(store, name + ".o", ConvSpec{inner_dim_, channels_, 1, 1}, rng) {
    const std::size_t n = static_cast<std::size_t>(inner_dim_) * token_dim_;
    wk_off = store.add(name + ".k.w", n);
    bk_off = store.add(name + ".k.b", inner_dim_);
    wv_off = store.add(name + ".v.w", n);
    bv_off = store.add(name + ".v.b", inner_dim_);
    const double sd = 1.0 / std::sqrt(static_cast<double>(token_dim_));
    store.init_gaussian(wk_off, n, rng, sd);
    store.init_gaussian(wv_off, n, rng, sd);
}

void CrossAttention::forward(const ParamStore& store, const Tensor& x,
                             const std::vector<double>& tokens, int n_tokens,
                             const LevelMask& mask, Tensor& out, Cache* cache) const {
    if (mask.h != x.h || mask.w != x.w) throw InvalidInput("CrossAttention: mask/feature shape mismatch");
    const int d = inner_dim;
    Tensor q(d, x.h, x.w);
    to_q.forward(store, x, q);

    // Project tokens to keys/values.
    std::vector<double> keys(static_cast<std::size_t>(n_tokens) * d);
    std::vector<double> vals(static_cast<std::size_t>(n_tokens) * d);
    const float* wk = store.values(wk_off);
    const float* bk = store.values(bk_off);
    const float* wv = store.values(wv_off);
    const float* bv = store.values(bv_off);
    for (int n = 0; n < n_tokens; ++n) {
        const double* tok = tokens.data() + static_cast<std::size_t>(n) * token_dim;
        for (int j = 0; j < d; ++j) {
            double ka = bk[j], va = bv[j];
            const float* wkr = wk + static_cast<std::size_t>(j) * token_dim;
            const float* wvr = wv + static_cast<std::size_t>(j) * token_dim;
            for (int i = 0; i < token_dim; ++i) {
                ka += static_cast<double>(wkr[i]) * tok[i];
                va += static_cast<double>(wvr[i]) * tok[i];
            }
            keys[static_cast<std::size_t>(n) * d + j] = ka;
            vals[static_cast<std::size_t>(n) * d + j] = va;
        }
    }

    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    const std::size_t n_pix = static_cast<std::size_t>(x.h) * x.w;
    Tensor ctx(d, x.h, x.w);
    std::vector<double> attn;
    std::vector<int> attn_off(n_pix + 1, 0);
    std::vector<double> logits;
    std::vector<double> qp(d);

    for (std::size_t p = 0; p < n_pix; ++p) {
        const int y = static_cast<int>(p) / x.w;
        const int xx = static_cast<int>(p) % x.w;
        for (int j = 0; j < d; ++j) qp[j] = q.at(j, y, xx);

        logits.clear();
        double max_logit = -1e300;
        for (int si = mask.offsets[p]; si < mask.offsets[p + 1]; ++si) {
            const TokenSpan span = mask.spans[si];
            for (int n = span.begin; n < span.begin + span.count; ++n) {
                const double* kn = keys.data() + static_cast<std::size_t>(n) * d;
                double dot = 0.0;
                for (int j = 0; j < d; ++j) dot += qp[j] * kn[j];
                const double l = dot * scale;
                logits.push_back(l);
                max_logit = std::max(max_logit, l);
            }
        }
        double denom = 0.0;
        for (double& l : logits) {
            l = std::exp(l - max_logit);
            denom += l;
        }
        const double inv = denom > 0.0 ? 1.0 / denom : 0.0;
        int e = 0;
        for (int si = mask.offsets[p]; si < mask.offsets[p + 1]; ++si) {
            const TokenSpan span = mask.spans[si];
            for (int n = span.begin; n < span.begin + span.count; ++n, ++e) {
                const double a = logits[e] * inv;
                attn.push_back(a);
                const double* vn = vals.data() + static_cast<std::size_t>(n) * d;
                for (int j = 0; j < d; ++j) ctx.at(j, y, xx) += a * vn[j];
            }
        }
        attn_off[p + 1] = static_cast<int>(attn.size());
    }

    out = Tensor(channels, x.h, x.w);
    to_out.forward(store, ctx, out);
    for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] += x.v[i];

    if (cache) {
        cache->q = std::move(q);
        cache->keys = std::move(keys);
        cache->vals = std::move(vals);
        cache->attn = std::move(attn);
        cache->attn_off = std::move(attn_off);
        cache->ctx = std::move(ctx);
    }
}

void CrossAttention::backward(ParamStore& store, const Tensor& x, const std::vector<double>& tokens,
                              int n_tokens, const LevelMask& mask, const Cache& cache,
                              const Tensor& d_out, Tensor& d_x,
                              std::vector<double>& d_tokens) const {
    const int d = inner_dim;
    // Residual branch.
    for (std::size_t i = 0; i < d_out.v.size(); ++i) d_x.v[i] += d_out.v[i];

    Tensor d_ctx(d, x.h, x.w);
    to_out.backward(store, cache.ctx, d_out, &d_ctx);

    std::vector<double> d_keys(static_cast<std::size_t>(n_tokens) * d, 0.0);
    std::vector<double> d_vals(static_cast<std::size_t>(n_tokens) * d, 0.0);
    Tensor d_q(d, x.h, x.w);

    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    const std::size_t n_pix = static_cast<std::size_t>(x.h) * x.w;
    std::vector<double> qp(d), dctxp(d), da;
    std::vector<int> idx;

    for (std::size_t p = 0; p < n_pix; ++p) {
        const int y = static_cast<int>(p) / x.w;
        const int xx = static_cast<int>(p) % x.w;
        for (int j = 0; j < d; ++j) {
            qp[j] = cache.q.at(j, y, xx);
            dctxp[j] = d_ctx.at(j, y, xx);
        }
        idx.clear();
        for (int si = mask.offsets[p]; si < mask.offsets[p + 1]; ++si) {
            const TokenSpan span = mask.spans[si];
            for (int n = span.begin; n < span.begin + span.count; ++n) idx.push_back(n);
        }
        const int ne = static_cast<int>(idx.size());
        const double* ap = cache.attn.data() + cache.attn_off[p];

        da.resize(ne);
        double common = 0.0;
        for (int e = 0; e < ne; ++e) {
            const double* vn = cache.vals.data() + static_cast<std::size_t>(idx[e]) * d;
            double dot = 0.0;
            for (int j = 0; j < d; ++j) dot += dctxp[j] * vn[j];
            da[e] = dot;
            common += ap[e] * dot;
        }
        for (int e = 0; e < ne; ++e) {
            const int n = idx[e];
            const double a = ap[e];
            const double dlogit = a * (da[e] - common) * scale;
            const double* kn = cache.keys.data() + static_cast<std::size_t>(n) * d;
            double* dkn = d_keys.data() + static_cast<std::size_t>(n) * d;
            double* dvn = d_vals.data() + static_cast<std::size_t>(n) * d;
            for (int j = 0; j < d; ++j) {
                d_q.at(j, y, xx) += dlogit * kn[j];
                dkn[j] += dlogit * qp[j];
                dvn[j] += a * dctxp[j];
            }
        }
    }

    // Token projections.
    const float* wk = store.values(wk_off);
    const float* wv = store.values(wv_off);
    double* dwk = store.grads(wk_off);
    double* dbk = store.grads(bk_off);
    double* dwv = store.grads(wv_off);
    double* dbv = store.grads(bv_off);
    for (int n = 0; n < n_tokens; ++n) {
        const double* tok = tokens.data() + static_cast<std::size_t>(n) * token_dim;
        const double* dkn = d_keys.data() + static_cast<std::size_t>(n) * d;
        const double* dvn = d_vals.data() + static_cast<std::size_t>(n) * d;
        double* dtok = d_tokens.data() + static_cast<std::size_t>(n) * token_dim;
        for (int j = 0; j < d; ++j) {
            dbk[j] += dkn[j];
            dbv[j] += dvn[j];
            const float* wkr = wk + static_cast<std::size_t>(j) * token_dim;
            const float* wvr = wv + static_cast<std::size_t>(j) * token_dim;
            double* dwkr = dwk + static_cast<std::size_t>(j) * token_dim;
            double* dwvr = dwv + static_cast<std::size_t>(j) * token_dim;
            for (int i = 0; i < token_dim; ++i) {
                dwkr[i] += dkn[j] * tok[i];
                dwvr[i] += dvn[j] * tok[i];
                dtok[i] += dkn[j] * static_cast<double>(wkr[i]) + dvn[j] * static_cast<double>(wvr[i]);
            }
        }
    }

    to_q.backward(store, x, d_q, &d_x);
}

} // namespace qdr::nn
