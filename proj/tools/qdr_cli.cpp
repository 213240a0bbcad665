// SPDX-License-Identifier: Apache-2.0
//
// qdr command line: dataset generation, training, restoration, evaluation,
// inspection and the ablation drivers. Exit codes: 0 success, 2 invalid
// input or config, 3 runtime failure.
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qdr/ablate.hpp"
#include "qdr/degrade.hpp"
#include "qdr/errors.hpp"
#include "qdr/inspect.hpp"
#include "qdr/metrics.hpp"
#include "qdr/png_io.hpp"
#include "qdr/report.hpp"
#include "qdr/trainer.hpp"

namespace fs = std::filesystem;

namespace {

qdr::TrainConfig load_config(const std::string& path) {
    if (path.empty()) return qdr::TrainConfig{};
    std::ifstream f(path);
    if (!f) throw qdr::InvalidInput("cannot open config file: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return qdr::train_config_from_json(ss.str());
}

qdr::CategoryMix parse_mix(const std::string& text) {
    qdr::CategoryMix mix;
    if (text.empty()) return mix;
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ',')) {
        const auto eq = part.find('=');
        if (eq == std::string::npos)
            throw qdr::InvalidInput("bad --mix entry (expected name=weight): " + part);
        mix.weights.emplace_back(part.substr(0, eq), std::stod(part.substr(eq + 1)));
    }
    return mix;
}

void print_ablate_table(const std::vector<qdr::AblateRow>& rows) {
    std::printf("%-14s %10s %8s %14s\n", "mode", "psnr", "ssim", "tokens/region");
    for (const auto& r : rows)
        std::printf("%-14s %10.3f %8.4f %14.3f\n", r.mode.c_str(), r.mean_psnr, r.mean_ssim,
                    r.mean_token_budget);
}

std::unique_ptr<qdr::TrainState> state_from_checkpoint_or_default(const std::string& checkpoint,
                                                                  const std::string& config_path) {
    if (!checkpoint.empty()) return qdr::load_checkpoint(checkpoint);
    auto state = qdr::init_train_state(load_config(config_path));
    return state;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"quality-guided diffusion restoration"};
    app.require_subcommand(1);

    std::string config_path, out_dir = ".", checkpoint_path, dataset_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
    app.add_option("--config", config_path, "JSON config file")->capture_default_str();
    app.add_option("--out", out_dir, "output directory")->capture_default_str();
    auto* seed_opt = app.add_option("--seed", seed, "RNG seed override");

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic paired dataset");
    int gen_count = 64, gen_size = 64;
    std::string gen_mix;
    gen->add_option("--count", gen_count, "sample count")->capture_default_str();
    gen->add_option("--size", gen_size, "image side length")->capture_default_str();
    gen->add_option("--mix", gen_mix, "category mix, e.g. haze=2,rain=1 (default uniform)");

    // train
    auto* train = app.add_subcommand("train", "train the restoration model");
    std::string resume_path;
    train->add_option("--resume", resume_path, "checkpoint to resume from");
    train->add_option("--dataset", dataset_path, "dataset root (overrides config)");

    // restore
    auto* restore = app.add_subcommand("restore", "restore degraded images");
    std::vector<std::string> restore_inputs;
    restore->add_option("--checkpoint", checkpoint_path, "trained checkpoint")->required();
    restore->add_option("images", restore_inputs, "input PNG files")->required();

    // eval
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    int eval_limit = 0;
    bool eval_fullref = false;
    eval->add_option("--checkpoint", checkpoint_path, "trained checkpoint")->required();
    eval->add_option("--dataset", dataset_path, "evaluation dataset root")->required();
    eval->add_option("--limit", eval_limit, "max samples (0 = all)");
    eval->add_flag("--fullref-conditioning", eval_fullref,
                   "condition selection on the full-reference oracle");

    // inspect
    auto* inspect = app.add_subcommand("inspect", "emit quality map, heatmap and partition");
    std::string inspect_input;
    inspect->add_option("image", inspect_input, "input PNG")->required();
    inspect->add_option("--checkpoint", checkpoint_path, "checkpoint (optional; default pool)");

    // ablate-prompting
    auto* abl_prompt = app.add_subcommand("ablate-prompting", "fixed vs adaptive prompt length");
    std::vector<int> fixed_c = {4, 10, 32};
    int abl_limit = 0;
    bool abl_clean = false;
    abl_prompt->add_option("--checkpoint", checkpoint_path, "trained checkpoint")->required();
    abl_prompt->add_option("--dataset", dataset_path, "evaluation dataset root")->required();
    abl_prompt->add_option("--fixed", fixed_c, "fixed complexity values")->capture_default_str();
    abl_prompt->add_option("--limit", abl_limit, "max samples (0 = all)");
    abl_prompt->add_flag("--clean-input", abl_clean, "feed clean images through the pipeline");

    // ablate-threshold
    auto* abl_tau = app.add_subcommand("ablate-threshold", "quality threshold sweep");
    std::vector<float> taus = {1.5f, 3.0f, 4.5f};
    abl_tau->add_option("--checkpoint", checkpoint_path, "trained checkpoint")->required();
    abl_tau->add_option("--dataset", dataset_path, "evaluation dataset root")->required();
    abl_tau->add_option("--taus", taus, "thresholds")->capture_default_str();
    abl_tau->add_option("--limit", abl_limit, "max samples (0 = all)");

    // ablate-loss
    auto* abl_loss = app.add_subcommand("ablate-loss", "loss component ablation (trains variants)");
    int abl_steps = 300;
    abl_loss->add_option("--train-dataset", dataset_path, "training dataset root")->required();
    std::string abl_eval_dataset;
    abl_loss->add_option("--eval-dataset", abl_eval_dataset, "evaluation dataset root")->required();
    abl_loss->add_option("--steps", abl_steps, "training steps per variant")->capture_default_str();
    abl_loss->add_option("--limit", abl_limit, "max samples (0 = all)");

    try {
        app.parse(argc, argv);
        seed_set = seed_opt->count() > 0;

        if (gen->parsed()) {
            qdr::DatasetParams params;
            params.count = gen_count;
            params.size = gen_size;
            params.seed = seed_set ? seed : 42;
            params.mix = parse_mix(gen_mix);
            const auto ids = qdr::make_dataset(out_dir, params);
            std::cout << "wrote " << ids.size() << " samples under " << out_dir << "\n";
        } else if (train->parsed()) {
            std::unique_ptr<qdr::TrainState> state;
            if (!resume_path.empty()) {
                state = qdr::load_checkpoint(resume_path);
            } else {
                qdr::TrainConfig config = load_config(config_path);
                if (!dataset_path.empty()) config.dataset_path = dataset_path;
                if (seed_set) config.seed = seed;
                state = qdr::init_train_state(config);
            }
            qdr::attach_dataset(*state);
            qdr::run_training(*state, out_dir);
            std::cout << "trained to step " << state->step << "; checkpoints under " << out_dir
                      << "\n";
        } else if (restore->parsed()) {
            auto state = qdr::load_checkpoint(checkpoint_path);
            fs::create_directories(out_dir);
            for (std::size_t i = 0; i < restore_inputs.size(); ++i) {
                const qdr::Image degraded = qdr::read_png(restore_inputs[i]);
                qdr::RestoreReport rr;
                const qdr::Image restored = qdr::restore_image(
                    *state, degraded, restore_inputs[i], qdr::mix_seed(seed_set ? seed : 7, i),
                    &rr);
                const fs::path out =
                    fs::path(out_dir) / (fs::path(restore_inputs[i]).stem().string() +
                                         "_restored.png");
                qdr::write_png(out.string(), restored);
                std::cout << restore_inputs[i] << " -> " << out.string()
                          << "  q_before=" << rr.mean_q_before << " q_after=" << rr.mean_q_after
                          << " regions=" << rr.region_count << " tokens=" << rr.prompt_budget
                          << " wall_ms=" << rr.wall_ms << "\n";
            }
        } else if (eval->parsed()) {
            auto state = qdr::load_checkpoint(checkpoint_path);
            const qdr::DatasetIndex index = qdr::open_dataset(dataset_path);
            qdr::EvalOptions options;
            options.seed = seed_set ? seed : 99;
            options.limit = eval_limit;
            options.fullref_conditioning = eval_fullref;
            const qdr::EvalReport report = qdr::evaluate(*state, index, options);
            fs::create_directories(out_dir);
            qdr::write_report_csv(report, (fs::path(out_dir) / "eval_report.csv").string());
            qdr::write_report_json(report, (fs::path(out_dir) / "eval_report.json").string());
            std::cout << "samples=" << report.rows.size() << "  psnr=" << report.psnr.mean
                      << " (degraded " << report.psnr_degraded.mean << ")  ssim="
                      << report.ssim.mean << "\n";
        } else if (inspect->parsed()) {
            auto state = state_from_checkpoint_or_default(checkpoint_path, config_path);
            const qdr::Image img = qdr::read_png(inspect_input);
            const auto art = qdr::inspect_image(img, *state, out_dir,
                                                fs::path(inspect_input).stem().string());
            std::cout << art.qmap_path << "\n"
                      << art.heatmap_path << "\n"
                      << art.partition_path << "\n"
                      << art.regions_path << "\n";
        } else if (abl_prompt->parsed()) {
            auto state = qdr::load_checkpoint(checkpoint_path);
            const qdr::DatasetIndex index = qdr::open_dataset(dataset_path);
            qdr::AblateOptions options;
            options.seed = seed_set ? seed : 7;
            options.limit = abl_limit;
            options.clean_input = abl_clean;
            const auto rows = qdr::ablate_prompting(*state, index, fixed_c, options);
            print_ablate_table(rows);
            fs::create_directories(out_dir);
            qdr::write_ablate_csv(rows, (fs::path(out_dir) / "ablate_prompting.csv").string());
        } else if (abl_tau->parsed()) {
            auto state = qdr::load_checkpoint(checkpoint_path);
            const qdr::DatasetIndex index = qdr::open_dataset(dataset_path);
            qdr::AblateOptions options;
            options.seed = seed_set ? seed : 7;
            options.limit = abl_limit;
            const auto rows = qdr::ablate_threshold(*state, index, taus, options);
            print_ablate_table(rows);
            fs::create_directories(out_dir);
            qdr::write_ablate_csv(rows, (fs::path(out_dir) / "ablate_threshold.csv").string());
        } else if (abl_loss->parsed()) {
            qdr::TrainConfig config = load_config(config_path);
            config.dataset_path = dataset_path;
            if (seed_set) config.seed = seed;
            const qdr::DatasetIndex index = qdr::open_dataset(abl_eval_dataset);
            qdr::AblateOptions options;
            options.seed = seed_set ? seed : 7;
            options.limit = abl_limit;
            const auto rows = qdr::ablate_loss(config, index, abl_steps, options);
            print_ablate_table(rows);
            fs::create_directories(out_dir);
            qdr::write_ablate_csv(rows, (fs::path(out_dir) / "ablate_loss.csv").string());
        }
        return 0;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const qdr::InvalidInput& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return 2;
    } catch (const qdr::FormatError& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
