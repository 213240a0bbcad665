// SPDX-License-Identifier: Apache-2.0
#include "qdr/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "qdr/errors.hpp"

namespace qdr {

double loss_noise(const nn::Tensor& eps, const nn::Tensor& eps_hat) {
    if (!eps.same_shape(eps_hat)) throw InvalidInput("loss_noise: shape mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < eps.v.size(); ++i) {
        const double d = eps_hat.v[i] - eps.v[i];
        s += d * d;
    }
    return s / static_cast<double>(eps.v.size());
}

void loss_noise_grad(const nn::Tensor& eps, const nn::Tensor& eps_hat, double scale,
                     nn::Tensor& d_eps_hat) {
    const double c = 2.0 * scale / static_cast<double>(eps.v.size());
    for (std::size_t i = 0; i < eps.v.size(); ++i)
        d_eps_hat.v[i] += c * (eps_hat.v[i] - eps.v[i]);
}

double quality_weight(double q, const LossConfig& config) {
    return (config.q_max - q) / (config.q_max - config.q_min);
}

double loss_quality(const nn::Tensor& eps, const nn::Tensor& eps_hat, const QualityMap& qmap,
                    const LossConfig& config) {
    if (!eps.same_shape(eps_hat)) throw InvalidInput("loss_quality: shape mismatch");
    if (qmap.height != eps.h || qmap.width != eps.w)
        throw InvalidInput("loss_quality: quality map not aligned with noise tensors");
    const std::size_t plane = static_cast<std::size_t>(eps.h) * eps.w;
    double s = 0.0;
    for (int y = 0; y < eps.h; ++y) {
        for (int x = 0; x < eps.w; ++x) {
            double px = 0.0;
            for (int c = 0; c < eps.c; ++c) {
                const double d = eps_hat.at(c, y, x) - eps.at(c, y, x);
                px += d * d;
            }
            s += quality_weight(qmap.at(y, x), config) * px;
        }
    }
    return s / static_cast<double>(plane);
}

void loss_quality_grad(const nn::Tensor& eps, const nn::Tensor& eps_hat, const QualityMap& qmap,
                       const LossConfig& config, double scale, nn::Tensor& d_eps_hat) {
    const double c0 = 2.0 * scale / (static_cast<double>(eps.h) * eps.w);
    for (int y = 0; y < eps.h; ++y) {
        for (int x = 0; x < eps.w; ++x) {
            const double wq = quality_weight(qmap.at(y, x), config);
            for (int c = 0; c < eps.c; ++c)
                d_eps_hat.at(c, y, x) += c0 * wq * (eps_hat.at(c, y, x) - eps.at(c, y, x));
        }
    }
}

namespace {
constexpr std::uint64_t kPerceptualSeed = 0xFEA7BEEFULL;
} // namespace

PerceptualExtractor::PerceptualExtractor() {
    Rng rng(kPerceptualSeed);
    conv0_ = nn::Conv(store_, "p0", nn::ConvSpec{3, 16, 3, 1}, rng);
    conv1_ = nn::Conv(store_, "p1", nn::ConvSpec{16, 32, 3, 2}, rng);
    conv2_ = nn::Conv(store_, "p2", nn::ConvSpec{32, 64, 3, 2}, rng);
}

std::vector<nn::Tensor> PerceptualExtractor::features(const nn::Tensor& x) const {
    std::vector<nn::Tensor> out;
    nn::Tensor f0(16, x.h, x.w);
    conv0_.forward(store_, x, f0);
    for (double& v : f0.v) v = std::tanh(v);

    nn::Tensor f1(32, nn::conv_out_dim(x.h, 3, 2), nn::conv_out_dim(x.w, 3, 2));
    conv1_.forward(store_, f0, f1);
    for (double& v : f1.v) v = std::tanh(v);

    nn::Tensor f2(64, nn::conv_out_dim(f1.h, 3, 2), nn::conv_out_dim(f1.w, 3, 2));
    conv2_.forward(store_, f1, f2);
    for (double& v : f2.v) v = std::tanh(v);

    out.push_back(std::move(f0));
    out.push_back(std::move(f1));
    out.push_back(std::move(f2));
    return out;
}

double PerceptualExtractor::l1_feature_distance(const nn::Tensor& ref, const nn::Tensor& pred,
                                                nn::Tensor* d_pred) const {
    const std::vector<nn::Tensor> fr = features(ref);

    // Recompute the pred pyramid keeping pre-activation values for backward.
    nn::Tensor p0(16, pred.h, pred.w);
    conv0_.forward(store_, pred, p0);
    nn::Tensor a0 = p0;
    for (double& v : a0.v) v = std::tanh(v);

    nn::Tensor p1(32, nn::conv_out_dim(pred.h, 3, 2), nn::conv_out_dim(pred.w, 3, 2));
    conv1_.forward(store_, a0, p1);
    nn::Tensor a1 = p1;
    for (double& v : a1.v) v = std::tanh(v);

    nn::Tensor p2(64, nn::conv_out_dim(p1.h, 3, 2), nn::conv_out_dim(p1.w, 3, 2));
    conv2_.forward(store_, a1, p2);
    nn::Tensor a2 = p2;
    for (double& v : a2.v) v = std::tanh(v);

    const nn::Tensor* preds[3] = {&a0, &a1, &a2};
    double dist = 0.0;
    nn::Tensor d2(a2.c, a2.h, a2.w), d1(a1.c, a1.h, a1.w), d0(a0.c, a0.h, a0.w);
    nn::Tensor* dlevels[3] = {&d0, &d1, &d2};
    for (int l = 0; l < 3; ++l) {
        const nn::Tensor& r = fr[l];
        const nn::Tensor& p = *preds[l];
        const double inv = 1.0 / static_cast<double>(p.v.size());
        for (std::size_t i = 0; i < p.v.size(); ++i) {
            const double d = p.v[i] - r.v[i];
            dist += std::abs(d) * inv;
            if (d_pred) dlevels[l]->v[i] = (d > 0.0 ? inv : (d < 0.0 ? -inv : 0.0));
        }
    }
    if (!d_pred) return dist;

    // Backward through the pred branch only (parameters are frozen).
    // tanh' = 1 - tanh^2; a* hold the post-activation values.
    for (std::size_t i = 0; i < d2.v.size(); ++i) d2.v[i] *= 1.0 - a2.v[i] * a2.v[i];
    nn::Tensor g1(a1.c, a1.h, a1.w);
    nn::conv_backward_input(conv2_.spec, store_.values(conv2_.w_off), d2, g1);
    for (std::size_t i = 0; i < g1.v.size(); ++i)
        g1.v[i] = (g1.v[i] + d1.v[i]) * (1.0 - a1.v[i] * a1.v[i]);
    nn::Tensor g0(a0.c, a0.h, a0.w);
    nn::conv_backward_input(conv1_.spec, store_.values(conv1_.w_off), g1, g0);
    for (std::size_t i = 0; i < g0.v.size(); ++i)
        g0.v[i] = (g0.v[i] + d0.v[i]) * (1.0 - a0.v[i] * a0.v[i]);
    nn::conv_backward_input(conv0_.spec, store_.values(conv0_.w_off), g0, *d_pred);
    return dist;
}

const PerceptualExtractor& perceptual_extractor() {
    static PerceptualExtractor extractor;
    return extractor;
}

std::vector<nn::Tensor> perceptual_features(const Image& image) {
    nn::Tensor x(3, image.height, image.width);
    for (int y = 0; y < image.height; ++y)
        for (int xx = 0; xx < image.width; ++xx)
            for (int c = 0; c < 3; ++c)
                x.at(c, y, xx) = 2.0 * image.at(y, xx, image.channels == 3 ? c : 0) - 1.0;
    return perceptual_extractor().features(x);
}

nn::Tensor crop_tensor(const nn::Tensor& x, int y0, int x0, int h, int w) {
    nn::Tensor out(x.c, h, w);
    for (int c = 0; c < x.c; ++c)
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx) out.at(c, y, xx) = x.at(c, y0 + y, x0 + xx);
    return out;
}

double loss_percep(const nn::Tensor& x0, const nn::Tensor& x_pred, const QualityMap& qmap,
                   const RegionPartition& partition, const LossConfig& config,
                   nn::Tensor* d_x_pred) {
    if (!x0.same_shape(x_pred)) throw InvalidInput("loss_percep: shape mismatch");
    if (qmap.height != x0.h || qmap.width != x0.w ||
        partition.image_height != x0.h || partition.image_width != x0.w)
        throw InvalidInput("loss_percep: partition/map not aligned with images");

    const PerceptualExtractor& ex = perceptual_extractor();
    double total = 0.0;
    for (const Region& r : partition.regions) {
        if (!(r.mean_quality < config.tau_p)) continue;
        const nn::Tensor ref = crop_tensor(x0, r.y0, r.x0, r.height, r.width);
        const nn::Tensor pred = crop_tensor(x_pred, r.y0, r.x0, r.height, r.width);
        if (d_x_pred) {
            nn::Tensor d_crop(pred.c, pred.h, pred.w);
            total += ex.l1_feature_distance(ref, pred, &d_crop);
            for (int c = 0; c < d_crop.c; ++c)
                for (int y = 0; y < d_crop.h; ++y)
                    for (int xx = 0; xx < d_crop.w; ++xx)
                        d_x_pred->at(c, r.y0 + y, r.x0 + xx) += d_crop.at(c, y, xx);
        } else {
            total += ex.l1_feature_distance(ref, pred, nullptr);
        }
    }
    return total;
}

LossBreakdown loss_total(double noise, double quality, double perceptual,
                         const LossConfig& config) {
    if (!std::isfinite(noise)) throw std::runtime_error("loss_total: non-finite noise term");
    if (!std::isfinite(quality)) throw std::runtime_error("loss_total: non-finite quality term");
    if (!std::isfinite(perceptual))
        throw std::runtime_error("loss_total: non-finite perceptual term");
    LossBreakdown b;
    b.noise = noise;
    b.quality = quality;
    b.perceptual = perceptual;
    b.total = noise + config.lambda1 * quality + config.lambda2 * perceptual;
    if (!std::isfinite(b.total)) throw std::runtime_error("loss_total: non-finite total");
    return b;
}

} // namespace qdr
