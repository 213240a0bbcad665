// SPDX-License-Identifier: Apache-2.0
#ifndef QDR_DIFFUSION_HPP
#define QDR_DIFFUSION_HPP

#include <cstdint>
#include <vector>

#include "qdr/nn.hpp"
#include "qdr/prompts.hpp"
#include "qdr/rng.hpp"

namespace qdr {

/// Linear-beta noise schedule with cumulative retention products and the
/// inference step plan. Timesteps are 1-based; alpha_bar(0) == 1.
struct DiffusionSchedule {
    int total_steps = 0;               // T
    std::vector<double> alphas;        // alpha_t, index t-1
    std::vector<double> alpha_bars;    // prod_{s<=t} alpha_s, index t-1
    std::vector<int> sample_steps;     // descending, defaults {T, T/2}

    double alpha(int t) const { return alphas[t - 1]; }
    double alpha_bar(int t) const { return t == 0 ? 1.0 : alpha_bars[t - 1]; }
};

DiffusionSchedule make_schedule(int total_steps, double beta_start, double beta_end);

/// Images inside the diffusion core are planar (c,h,w) tensors in [-1,1].
nn::Tensor normalize_image(const Image& img);
Image denormalize_image(const nn::Tensor& x);

/// x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps.
nn::Tensor forward_diffuse(const nn::Tensor& x0, int t, const nn::Tensor& eps,
                           const DiffusionSchedule& schedule);

/// Deterministic DDIM-form update from t_from to t_to (eta = 0): reconstructs
/// x0_hat (clipped to [-1.5, 1.5]) and re-noises to t_to. eta > 0 adds the
/// DDIM stochastic term and requires `noise`.
nn::Tensor reverse_step(const nn::Tensor& x_t, int t_from, int t_to, const nn::Tensor& eps_hat,
                        const DiffusionSchedule& schedule, double eta = 0.0,
                        const nn::Tensor* noise = nullptr);

struct DenoiserInput {
    const nn::Tensor* x_t = nullptr;           // noisy image, (3,h,w) in [-1,1] scale
    int t = 0;                                 // 1..T
    const nn::Tensor* y = nullptr;             // degraded observation, same shape
    const Conditioning* conditioning = nullptr;
};

/// Noise-prediction network contract.
class Denoiser {
public:
    virtual ~Denoiser() = default;
    virtual nn::Tensor predict_noise(const DenoiserInput& input) const = 0;
};

struct SampleReport {
    int denoiser_calls = 0;
};

/// Start from seeded Gaussian x_T, run the deterministic step plan, return
/// the restored image in [0,1]. Throws on non-finite model output, naming
/// the step.
Image sample(const Image& degraded, const Denoiser& model, const Conditioning& conditioning,
             const DiffusionSchedule& schedule, std::uint64_t seed,
             SampleReport* report = nullptr);

} // namespace qdr

#endif
