// SPDX-License-Identifier: Apache-2.0
#include "qdr/report.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "qdr/errors.hpp"
#include "qdr/metrics.hpp"

namespace qdr {

namespace {

Aggregate aggregate_of(const std::vector<double>& xs) {
    Aggregate a;
    if (xs.empty()) return a;
    for (double x : xs) a.mean += x;
    a.mean /= static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - a.mean) * (x - a.mean);
    a.stddev = std::sqrt(var / static_cast<double>(xs.size()));
    return a;
}

void recompute_aggregates(EvalReport& report) {
    std::vector<double> ps, ss, pd, qb, qa;
    for (const auto& r : report.rows) {
        ps.push_back(r.psnr_db);
        ss.push_back(r.ssim_val);
        pd.push_back(r.psnr_degraded_db);
        qb.push_back(r.mean_q_before);
        qa.push_back(r.mean_q_after);
    }
    report.psnr = aggregate_of(ps);
    report.ssim = aggregate_of(ss);
    report.psnr_degraded = aggregate_of(pd);
    report.mean_q_before = aggregate_of(qb).mean;
    report.mean_q_after = aggregate_of(qa).mean;
}

nlohmann::json num_or_inf(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
}

double parse_num_or_inf(const nlohmann::json& j) {
    if (j.is_string()) {
        const std::string s = j.get<std::string>();
        if (s == "inf") return std::numeric_limits<double>::infinity();
        if (s == "-inf") return -std::numeric_limits<double>::infinity();
        throw FormatError("report: unparseable numeric field '" + s + "'");
    }
    return j.get<double>();
}

bool close(double a, double b) {
    if (std::isinf(a) || std::isinf(b)) return a == b;
    return std::abs(a - b) <= 1e-9 * std::max({1.0, std::abs(a), std::abs(b)});
}

} // namespace

EvalReport evaluate(TrainState& state, const DatasetIndex& eval_set, const EvalOptions& options) {
    EvalReport report;
    report.config_json = train_config_to_json(state.config);

    std::size_t count = eval_set.sample_ids.size();
    if (options.limit > 0) count = std::min<std::size_t>(count, options.limit);

    for (std::size_t i = 0; i < count; ++i) {
        const DegradedSample sample = load_sample(eval_set.root, eval_set.sample_ids[i]);

        RestoreOverrides ov;
        FullReferenceOracleScorer fullref(
            [&sample](const std::string&) { return sample.clean; });
        if (options.fullref_conditioning) ov.scorer = &fullref;

        RestoreReport rr;
        const Image restored =
            restore_with_overrides(state, sample.degraded, sample.sample_id,
                                   mix_seed(options.seed, i), ov, &rr);
        EvalRow row;
        row.sample_id = sample.sample_id;
        row.psnr_db = psnr(restored, sample.clean);
        row.ssim_val = ssim(restored, sample.clean);
        row.psnr_degraded_db = psnr(sample.degraded, sample.clean);
        row.mean_q_before = rr.mean_q_before;
        row.mean_q_after = rr.mean_q_after;
        row.region_count = rr.region_count;
        row.prompt_budget = rr.prompt_budget;
        report.rows.push_back(row);
    }
    recompute_aggregates(report);
    return report;
}

void write_report_csv(const EvalReport& report, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw FormatError("write_report_csv: cannot open " + path);
    f << "sample_id,psnr_db,ssim,psnr_degraded_db,mean_q_before,mean_q_after,region_count,"
         "prompt_budget\n";
    for (const auto& r : report.rows) {
        f << r.sample_id << ',' << r.psnr_db << ',' << r.ssim_val << ',' << r.psnr_degraded_db
          << ',' << r.mean_q_before << ',' << r.mean_q_after << ',' << r.region_count << ','
          << r.prompt_budget << '\n';
    }
    f << "# aggregate psnr mean=" << report.psnr.mean << " std=" << report.psnr.stddev
      << " ssim mean=" << report.ssim.mean << " std=" << report.ssim.stddev << '\n';
}

void write_report_json(const EvalReport& report, const std::string& path) {
    nlohmann::json j;
    j["rows"] = nlohmann::json::array();
    for (const auto& r : report.rows) {
        j["rows"].push_back({{"sample_id", r.sample_id},
                             {"psnr_db", num_or_inf(r.psnr_db)},
                             {"ssim", r.ssim_val},
                             {"psnr_degraded_db", num_or_inf(r.psnr_degraded_db)},
                             {"mean_q_before", r.mean_q_before},
                             {"mean_q_after", r.mean_q_after},
                             {"region_count", r.region_count},
                             {"prompt_budget", r.prompt_budget}});
    }
    j["aggregate"] = {{"psnr_mean", num_or_inf(report.psnr.mean)},
                      {"psnr_std", num_or_inf(report.psnr.stddev)},
                      {"ssim_mean", report.ssim.mean},
                      {"ssim_std", report.ssim.stddev},
                      {"psnr_degraded_mean", num_or_inf(report.psnr_degraded.mean)},
                      {"psnr_degraded_std", num_or_inf(report.psnr_degraded.stddev)},
                      {"mean_q_before", report.mean_q_before},
                      {"mean_q_after", report.mean_q_after}};
    j["config"] = nlohmann::json::parse(report.config_json);
    std::ofstream f(path);
    if (!f) throw FormatError("write_report_json: cannot open " + path);
    f << j.dump(2) << '\n';
}

EvalReport load_report_json(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw FormatError("load_report_json: cannot open " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(std::string("load_report_json: ") + e.what());
    }

    EvalReport report;
    for (const auto& rj : j.at("rows")) {
        EvalRow r;
        r.sample_id = rj.at("sample_id").get<std::string>();
        r.psnr_db = parse_num_or_inf(rj.at("psnr_db"));
        r.ssim_val = rj.at("ssim").get<double>();
        r.psnr_degraded_db = parse_num_or_inf(rj.at("psnr_degraded_db"));
        r.mean_q_before = rj.at("mean_q_before").get<double>();
        r.mean_q_after = rj.at("mean_q_after").get<double>();
        r.region_count = rj.at("region_count").get<int>();
        r.prompt_budget = rj.at("prompt_budget").get<int>();
        report.rows.push_back(r);
    }
    report.config_json = j.at("config").dump(2);

    EvalReport check = report;
    recompute_aggregates(check);
    const auto& agg = j.at("aggregate");
    if (!close(parse_num_or_inf(agg.at("psnr_mean")), check.psnr.mean) ||
        !close(parse_num_or_inf(agg.at("psnr_std")), check.psnr.stddev) ||
        !close(agg.at("ssim_mean").get<double>(), check.ssim.mean) ||
        !close(agg.at("ssim_std").get<double>(), check.ssim.stddev))
        throw FormatError("load_report_json: stored aggregates do not match rows");
    return check;
}

} // namespace qdr
