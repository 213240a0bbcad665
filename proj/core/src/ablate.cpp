// SPDX-License-Identifier: Apache-2.0
#include "qdr/ablate.hpp"

#include <fstream>
#include <map>
#include <stdexcept>

#include "qdr/errors.hpp"
#include "qdr/metrics.hpp"

namespace qdr {

namespace {

struct ModeResult {
    AblateRow row;
    std::map<int, int> complexity_histogram;
};

ModeResult run_mode(TrainState& state, const DatasetIndex& eval_set, const std::string& mode,
                    const RestoreOverrides& base_overrides, const AblateOptions& options) {
    ModeResult res;
    res.row.mode = mode;

    std::size_t count = eval_set.sample_ids.size();
    if (options.limit > 0) count = std::min<std::size_t>(count, options.limit);
    if (count == 0) throw InvalidInput("ablate: empty eval set");

    double psnr_sum = 0.0, ssim_sum = 0.0;
    std::uint64_t token_sum = 0, region_sum = 0;

    for (std::size_t i = 0; i < count; ++i) {
        const DegradedSample sample = load_sample(eval_set.root, eval_set.sample_ids[i]);
        const Image& input = options.clean_input ? sample.clean : sample.degraded;

        FullReferenceOracleScorer fullref([&sample](const std::string&) { return sample.clean; });
        RestoreOverrides ov = base_overrides;
        ov.scorer = &fullref;

        RestoreReport rr;
        const std::string key =
            (options.clean_input ? "clean/" : "") + sample.sample_id + "#" + mode;
        const Image restored =
            restore_with_overrides(state, input, key, mix_seed(options.seed, i), ov, &rr);

        psnr_sum += psnr(restored, sample.clean);
        ssim_sum += ssim(restored, sample.clean);
        token_sum += static_cast<std::uint64_t>(rr.prompt_budget);
        region_sum += static_cast<std::uint64_t>(rr.region_count);

        // Recover the per-region complexity histogram from the same
        // selection path the restoration used.
        const QualityMap qmap = fullref.score_one(key, input);
        const RegionPartition partition =
            adaptive_region_partition(qmap, state.config.partition);
        const ComplexityParams& cp =
            ov.complexity ? *ov.complexity : state.config.complexity;
        for (const Region& r : partition.regions)
            res.complexity_histogram[complexity(r.mean_quality, cp)]++;
    }

    res.row.mean_psnr = psnr_sum / static_cast<double>(count);
    res.row.mean_ssim = ssim_sum / static_cast<double>(count);
    res.row.mean_token_budget =
        static_cast<double>(token_sum) / static_cast<double>(region_sum);
    return res;
}

} // namespace

std::vector<AblateRow> ablate_prompting(TrainState& state, const DatasetIndex& eval_set,
                                        const std::vector<int>& fixed_c,
                                        const AblateOptions& options) {
    std::vector<AblateRow> rows;
    for (int c : fixed_c) {
        ComplexityParams fixed = state.config.complexity;
        fixed.c_min = c;
        fixed.c_max = c;
        RestoreOverrides ov;
        ov.complexity = &fixed;
        rows.push_back(
            run_mode(state, eval_set, "fixed_c" + std::to_string(c), ov, options).row);
    }
    rows.push_back(run_mode(state, eval_set, "adaptive", RestoreOverrides{}, options).row);
    return rows;
}

std::vector<AblateRow> ablate_threshold(TrainState& state, const DatasetIndex& eval_set,
                                        const std::vector<float>& taus,
                                        const AblateOptions& options) {
    std::vector<AblateRow> rows;
    std::map<int, int> reference_hist;
    bool first = true;
    for (float tau : taus) {
        RestoreOverrides ov;
        ov.has_tau = true;
        ov.tau = tau;
        ModeResult res = run_mode(state, eval_set, "tau_" + std::to_string(tau), ov, options);
        if (first) {
            reference_hist = res.complexity_histogram;
            first = false;
        } else if (res.complexity_histogram != reference_hist) {
            throw std::runtime_error(
                "ablate_threshold: complexity histogram changed with tau; "
                "tau must only flip pool routing");
        }
        rows.push_back(res.row);
    }
    return rows;
}

std::vector<AblateRow> ablate_loss(const TrainConfig& base_config, const DatasetIndex& eval_set,
                                   int train_steps, const AblateOptions& options) {
    struct Variant {
        std::string name;
        double lambda1, lambda2;
    };
    const std::vector<Variant> variants = {
        {"noise_only", 0.0, 0.0},
        {"noise+quality", base_config.loss.lambda1, 0.0},
        {"full", base_config.loss.lambda1, base_config.loss.lambda2},
    };

    std::vector<AblateRow> rows;
    for (const Variant& v : variants) {
        TrainConfig config = base_config;
        config.steps = train_steps;
        config.checkpoint_interval = 0;
        config.loss.lambda1 = v.lambda1;
        config.loss.lambda2 = v.lambda2;
        auto state = init_train_state(config);
        attach_dataset(*state);
        while (state->step < static_cast<std::uint64_t>(config.steps)) train_step(*state);

        EvalOptions eo;
        eo.seed = options.seed;
        eo.limit = options.limit;
        const EvalReport report = evaluate(*state, eval_set, eo);
        AblateRow row;
        row.mode = v.name;
        row.mean_psnr = report.psnr.mean;
        row.mean_ssim = report.ssim.mean;
        double budget = 0.0;
        std::uint64_t regions = 0;
        for (const auto& r : report.rows) {
            budget += r.prompt_budget;
            regions += static_cast<std::uint64_t>(r.region_count);
        }
        row.mean_token_budget = regions ? budget / static_cast<double>(regions) : 0.0;
        rows.push_back(row);
    }
    return rows;
}

void write_ablate_csv(const std::vector<AblateRow>& rows, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw FormatError("write_ablate_csv: cannot open " + path);
    f << "mode,mean_psnr,mean_ssim,mean_token_budget\n";
    for (const auto& r : rows)
        f << r.mode << ',' << r.mean_psnr << ',' << r.mean_ssim << ',' << r.mean_token_budget
          << '\n';
}

} // namespace qdr
