// SPDX-License-Identifier: Apache-2.0
#include "qdr/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "qdr/errors.hpp"

namespace qdr {

DiffusionSchedule make_schedule(int total_steps, double beta_start, double beta_end) {
    if (total_steps < 2) throw InvalidInput("make_schedule: total_steps must be >= 2");
    if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0))
        throw InvalidInput("make_schedule: need 0 < beta_start <= beta_end < 1");

    DiffusionSchedule s;
    s.total_steps = total_steps;
    s.alphas.resize(total_steps);
    s.alpha_bars.resize(total_steps);
    double bar = 1.0;
    for (int t = 1; t <= total_steps; ++t) {
        const double beta =
            beta_start + (beta_end - beta_start) * static_cast<double>(t - 1) / (total_steps - 1);
        s.alphas[t - 1] = 1.0 - beta;
        bar *= s.alphas[t - 1];
        s.alpha_bars[t - 1] = bar;
    }
    s.sample_steps = {total_steps, total_steps / 2};
    return s;
}

nn::Tensor normalize_image(const Image& img) {
    nn::Tensor x(img.channels, img.height, img.width);
    for (int y = 0; y < img.height; ++y)
        for (int xx = 0; xx < img.width; ++xx)
            for (int c = 0; c < img.channels; ++c)
                x.at(c, y, xx) = 2.0 * img.at(y, xx, c) - 1.0;
    return x;
}

Image denormalize_image(const nn::Tensor& x) {
    Image img(x.h, x.w, x.c);
    for (int y = 0; y < x.h; ++y)
        for (int xx = 0; xx < x.w; ++xx)
            for (int c = 0; c < x.c; ++c)
                img.at(y, xx, c) =
                    static_cast<float>(std::clamp(0.5 * (x.at(c, y, xx) + 1.0), 0.0, 1.0));
    return img;
}

nn::Tensor forward_diffuse(const nn::Tensor& x0, int t, const nn::Tensor& eps,
                           const DiffusionSchedule& schedule) {
    if (!x0.same_shape(eps)) throw InvalidInput("forward_diffuse: shape mismatch");
    if (t < 1 || t > schedule.total_steps) throw InvalidInput("forward_diffuse: t out of range");
    const double ab = schedule.alpha_bar(t);
    const double ca = std::sqrt(ab);
    const double cb = std::sqrt(1.0 - ab);
    nn::Tensor out(x0.c, x0.h, x0.w);
    for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] = ca * x0.v[i] + cb * eps.v[i];
    return out;
}

nn::Tensor reverse_step(const nn::Tensor& x_t, int t_from, int t_to, const nn::Tensor& eps_hat,
                        const DiffusionSchedule& schedule, double eta, const nn::Tensor* noise) {
    if (!(t_from > t_to) || t_to < 0 || t_from > schedule.total_steps)
        throw InvalidInput("reverse_step: need total_steps >= t_from > t_to >= 0");
    if (!x_t.same_shape(eps_hat)) throw InvalidInput("reverse_step: shape mismatch");
    if (eta != 0.0 && noise == nullptr)
        throw InvalidInput("reverse_step: eta > 0 requires a noise tensor");

    const double ab_from = schedule.alpha_bar(t_from);
    const double ab_to = schedule.alpha_bar(t_to);
    const double inv_sqrt_ab = 1.0 / std::sqrt(ab_from);
    const double sqrt_one_minus = std::sqrt(1.0 - ab_from);

    double sigma = 0.0;
    if (eta != 0.0) {
        sigma = eta * std::sqrt((1.0 - ab_to) / (1.0 - ab_from)) *
                std::sqrt(1.0 - ab_from / ab_to);
    }
    const double dir_coeff = std::sqrt(std::max(0.0, 1.0 - ab_to - sigma * sigma));
    const double sqrt_ab_to = std::sqrt(ab_to);

    nn::Tensor out(x_t.c, x_t.h, x_t.w);
    for (std::size_t i = 0; i < out.v.size(); ++i) {
        double x0_hat = (x_t.v[i] - sqrt_one_minus * eps_hat.v[i]) * inv_sqrt_ab;
        x0_hat = std::clamp(x0_hat, -1.5, 1.5);
        double v = sqrt_ab_to * x0_hat + dir_coeff * eps_hat.v[i];
        if (sigma != 0.0) v += sigma * noise->v[i];
        out.v[i] = v;
    }
    return out;
}

Image sample(const Image& degraded, const Denoiser& model, const Conditioning& conditioning,
             const DiffusionSchedule& schedule, std::uint64_t seed, SampleReport* report) {
    const nn::Tensor y = normalize_image(degraded);
    Rng rng(seed);
    nn::Tensor x(y.c, y.h, y.w);
    for (double& v : x.v) v = rng.normal();

    std::vector<int> plan = schedule.sample_steps;
    plan.push_back(0);
    int calls = 0;
    for (std::size_t i = 0; i + 1 < plan.size(); ++i) {
        const int t_from = plan[i];
        const int t_to = plan[i + 1];
        DenoiserInput in;
        in.x_t = &x;
        in.t = t_from;
        in.y = &y;
        in.conditioning = &conditioning;
        nn::Tensor eps_hat = model.predict_noise(in);
        ++calls;
        for (double v : eps_hat.v) {
            if (!std::isfinite(v))
                throw std::runtime_error("sample: non-finite denoiser output at step t=" +
                                         std::to_string(t_from));
        }
        x = reverse_step(x, t_from, t_to, eps_hat, schedule, 0.0);
    }
    if (report) report->denoiser_calls = calls;
    return denormalize_image(x);
}

} // namespace qdr
