// SPDX-License-Identifier: Apache-2.0
#ifndef QDR_REPORT_HPP
#define QDR_REPORT_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "qdr/degrade.hpp"
#include "qdr/trainer.hpp"

namespace qdr {

struct EvalRow {
    std::string sample_id;
    double psnr_db = 0.0;
    double ssim_val = 0.0;
    double psnr_degraded_db = 0.0;
    double mean_q_before = 0.0;
    double mean_q_after = 0.0;
    int region_count = 0;
    int prompt_budget = 0;
};

struct Aggregate {
    double mean = 0.0;
    double stddev = 0.0;
};

struct EvalReport {
    std::vector<EvalRow> rows;
    Aggregate psnr;
    Aggregate ssim;
    Aggregate psnr_degraded;
    double mean_q_before = 0.0;
    double mean_q_after = 0.0;
    std::string config_json;
};

struct EvalOptions {
    std::uint64_t seed = 99;
    /// Condition selection on the full-reference oracle instead of the
    /// deployment no-reference scorer.
    bool fullref_conditioning = false;
    int limit = 0; // 0 = all samples
};

EvalReport evaluate(TrainState& state, const DatasetIndex& eval_set, const EvalOptions& options);

/// Aggregates are recomputed and verified on load; a mismatch is a
/// FormatError.
void write_report_csv(const EvalReport& report, const std::string& path);
void write_report_json(const EvalReport& report, const std::string& path);
EvalReport load_report_json(const std::string& path);

} // namespace qdr

#endif
