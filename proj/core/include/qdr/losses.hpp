// SPDX-License-Identifier: Apache-2.0
#ifndef QDR_LOSSES_HPP
#define QDR_LOSSES_HPP

#include <vector>

#include "qdr/image.hpp"
#include "qdr/nn.hpp"
#include "qdr/partition.hpp"
#include "qdr/qualmap.hpp"

namespace qdr {

struct LossConfig {
    double lambda1 = 0.5; // quality term weight
    double lambda2 = 0.1; // perceptual term weight
    float tau_p = 2.5f;   // perceptual region threshold
    float q_min = 1.0f;
    float q_max = 5.0f;
};

struct LossBreakdown {
    double noise = 0.0;
    double quality = 0.0;
    double perceptual = 0.0;
    double total = 0.0;
};

/// Mean squared error over all elements.
double loss_noise(const nn::Tensor& eps, const nn::Tensor& eps_hat);
/// Accumulates scale * d(loss_noise)/d(eps_hat).
void loss_noise_grad(const nn::Tensor& eps, const nn::Tensor& eps_hat, double scale,
                     nn::Tensor& d_eps_hat);

/// w(q) = (q_max - q) / (q_max - q_min); 1 at worst quality, 0 at best.
double quality_weight(double q, const LossConfig& config);

/// Mean over pixels of w(q_ij) * channel-summed squared error.
double loss_quality(const nn::Tensor& eps, const nn::Tensor& eps_hat, const QualityMap& qmap,
                    const LossConfig& config);
void loss_quality_grad(const nn::Tensor& eps, const nn::Tensor& eps_hat, const QualityMap& qmap,
                       const LossConfig& config, double scale, nn::Tensor& d_eps_hat);

/// Frozen seeded 3-scale feature pyramid (16/32/64 channels, stride-2
/// between scales, tanh activations). A fixed stand-in for a pretrained
/// perceptual extractor; same features forever for the same input.
class PerceptualExtractor {
public:
    PerceptualExtractor();

    std::vector<nn::Tensor> features(const nn::Tensor& x) const;

    /// Sum over levels of mean absolute feature difference between ref and
    /// pred; optionally accumulates the gradient w.r.t. pred.
    double l1_feature_distance(const nn::Tensor& ref, const nn::Tensor& pred,
                               nn::Tensor* d_pred) const;

private:
    nn::ParamStore store_;
    nn::Conv conv0_, conv1_, conv2_;
};

const PerceptualExtractor& perceptual_extractor();

/// Spec surface: feature pyramid of an interleaved [0,1] image.
std::vector<nn::Tensor> perceptual_features(const Image& image);

/// Region-selective perceptual loss: sum over regions whose mean quality is
/// below tau_p of the per-crop feature distance between x0 and x_pred.
/// Gradients (if requested) accumulate into d_x_pred at the crop locations.
double loss_percep(const nn::Tensor& x0, const nn::Tensor& x_pred, const QualityMap& qmap,
                   const RegionPartition& partition, const LossConfig& config,
                   nn::Tensor* d_x_pred = nullptr);

/// total = noise + lambda1 * quality + lambda2 * perceptual, exactly.
/// Throws on non-finite parts, naming the term.
LossBreakdown loss_total(double noise, double quality, double perceptual,
                         const LossConfig& config);

nn::Tensor crop_tensor(const nn::Tensor& x, int y0, int x0, int h, int w);

} // namespace qdr

#endif
