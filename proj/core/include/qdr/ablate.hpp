// SPDX-License-Identifier: Apache-2.0
#ifndef QDR_ABLATE_HPP
#define QDR_ABLATE_HPP

#include <string>
#include <vector>

#include "qdr/degrade.hpp"
#include "qdr/report.hpp"
#include "qdr/trainer.hpp"

namespace qdr {

struct AblateRow {
    std::string mode;
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;
    double mean_token_budget = 0.0; // mean tokens per region
};

struct AblateOptions {
    std::uint64_t seed = 7;
    int limit = 0;           // 0 = all eval samples
    bool clean_input = false; // feed clean images through the pipeline
};

/// Fixed-complexity variants (one per entry of fixed_c) against the adaptive
/// mapping. Selection is conditioned on the full-reference oracle so the
/// comparison isolates the complexity policy.
std::vector<AblateRow> ablate_prompting(TrainState& state, const DatasetIndex& eval_set,
                                        const std::vector<int>& fixed_c,
                                        const AblateOptions& options);

/// One row per threshold; verifies that the per-region complexity histogram
/// is identical across thresholds (tau routes pools, never complexity).
std::vector<AblateRow> ablate_threshold(TrainState& state, const DatasetIndex& eval_set,
                                        const std::vector<float>& taus,
                                        const AblateOptions& options);

/// Trains short variants of the loss configuration (noise only, noise +
/// quality, full) from scratch and evaluates each.
std::vector<AblateRow> ablate_loss(const TrainConfig& base_config,
                                   const DatasetIndex& eval_set, int train_steps,
                                   const AblateOptions& options);

void write_ablate_csv(const std::vector<AblateRow>& rows, const std::string& path);

} // namespace qdr

#endif
