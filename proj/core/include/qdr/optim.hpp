// SPDX-License-Identifier: Apache-2.0
#ifndef QDR_OPTIM_HPP
#define QDR_OPTIM_HPP

#include <cstdint>
#include <span>
#include <vector>

namespace qdr {

/// Adam with bias correction. Moments are stored as float32 so checkpoint
/// round trips are lossless; arithmetic runs in double.
class AdamOptimizer {
public:
    AdamOptimizer() = default;
    AdamOptimizer(std::size_t n, double lr, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8);

    void step(std::span<float> params, std::span<const double> grads);

    std::vector<float>& m() { return m_; }
    std::vector<float>& v() { return v_; }
    std::uint64_t t() const { return t_; }
    void set_t(std::uint64_t t) { t_ = t; }
    double learning_rate() const { return lr_; }

private:
    double lr_ = 2e-4, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
    std::uint64_t t_ = 0;
    std::vector<float> m_, v_;
};

} // namespace qdr

#endif
