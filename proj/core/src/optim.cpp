// SPDX-License-Identifier: Apache-2.0
#include "qdr/optim.hpp"

#include <cmath>

#include "qdr/errors.hpp"

namespace qdr {

AdamOptimizer::AdamOptimizer(std::size_t n, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, 0.0f), v_(n, 0.0f) {}

void AdamOptimizer::step(std::span<float> params, std::span<const double> grads) {
    if (params.size() != m_.size() || grads.size() != m_.size())
        throw InvalidInput("AdamOptimizer::step: size mismatch");
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        const double m = beta1_ * m_[i] + (1.0 - beta1_) * g;
        const double v = beta2_ * v_[i] + (1.0 - beta2_) * g * g;
        m_[i] = static_cast<float>(m);
        v_[i] = static_cast<float>(v);
        const double m_hat = m / bc1;
        const double v_hat = v / bc2;
        params[i] = static_cast<float>(params[i] - lr_ * m_hat / (std::sqrt(v_hat) + eps_));
    }
}

} // namespace qdr
