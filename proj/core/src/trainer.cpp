// SPDX-License-Identifier: Apache-2.0
#include "qdr/trainer.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "qdr/errors.hpp"

namespace fs = std::filesystem;

namespace qdr {

namespace {
constexpr std::uint64_t kSaltEpoch = 0xE90C;

// Cache keys are qualified by scorer so mixed-scorer flows never collide.
std::string cache_key(const QualityScorer& scorer, const std::string& key) {
    return scorer.scorer_id() + ":" + key;
}
} // namespace

std::string train_config_to_json(const TrainConfig& c) {
    nlohmann::json j;
    j["dataset_path"] = c.dataset_path;
    j["image_size"] = c.image_size;
    j["batch_size"] = c.batch_size;
    j["steps"] = c.steps;
    j["learning_rate"] = c.learning_rate;
    j["schedule"] = {{"total_steps", c.schedule.total_steps},
                     {"beta_start", c.schedule.beta_start},
                     {"beta_end", c.schedule.beta_end}};
    j["complexity"] = {{"c_min", c.complexity.c_min},
                       {"c_max", c.complexity.c_max},
                       {"q_min", c.complexity.q_min},
                       {"q_max", c.complexity.q_max}};
    j["partition"] = {{"min_side", c.partition.min_side},
                      {"split_std_threshold", c.partition.split_std_threshold}};
    j["loss"] = {{"lambda1", c.loss.lambda1},
                 {"lambda2", c.loss.lambda2},
                 {"tau_p", c.loss.tau_p},
                 {"q_min", c.loss.q_min},
                 {"q_max", c.loss.q_max}};
    j["tau"] = c.tau;
    j["seed"] = c.seed;
    j["checkpoint_interval"] = c.checkpoint_interval;
    j["denoiser"] = {{"width", c.denoiser.width},
                     {"token_dim", c.denoiser.token_dim},
                     {"attn_dim", c.denoiser.attn_dim},
                     {"emb_dim", c.denoiser.emb_dim},
                     {"attn_full", c.denoiser.attn_full},
                     {"attn_half", c.denoiser.attn_half},
                     {"attn_quarter", c.denoiser.attn_quarter},
                     {"seed", c.denoiser.seed}};
    j["pool"] = {{"global_len", c.pool.global_len},
                 {"candidates", c.pool.candidates},
                 {"max_tokens", c.pool.max_tokens},
                 {"dim", c.pool.dim}};
    j["cache_capacity"] = c.cache_capacity;
    return j.dump(2);
}

TrainConfig train_config_from_json(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(std::string("train config: ") + e.what());
    }
    TrainConfig c;
    const auto get = [&](const char* key, auto& dst) {
        if (j.contains(key)) dst = j.at(key).get<std::remove_reference_t<decltype(dst)>>();
    };
    get("dataset_path", c.dataset_path);
    get("image_size", c.image_size);
    get("batch_size", c.batch_size);
    get("steps", c.steps);
    get("learning_rate", c.learning_rate);
    if (j.contains("schedule")) {
        const auto& s = j.at("schedule");
        c.schedule.total_steps = s.value("total_steps", c.schedule.total_steps);
        c.schedule.beta_start = s.value("beta_start", c.schedule.beta_start);
        c.schedule.beta_end = s.value("beta_end", c.schedule.beta_end);
    }
    if (j.contains("complexity")) {
        const auto& s = j.at("complexity");
        c.complexity.c_min = s.value("c_min", c.complexity.c_min);
        c.complexity.c_max = s.value("c_max", c.complexity.c_max);
        c.complexity.q_min = s.value("q_min", c.complexity.q_min);
        c.complexity.q_max = s.value("q_max", c.complexity.q_max);
    }
    if (j.contains("partition")) {
        const auto& s = j.at("partition");
        c.partition.min_side = s.value("min_side", c.partition.min_side);
        c.partition.split_std_threshold =
            s.value("split_std_threshold", c.partition.split_std_threshold);
    }
    if (j.contains("loss")) {
        const auto& s = j.at("loss");
        c.loss.lambda1 = s.value("lambda1", c.loss.lambda1);
        c.loss.lambda2 = s.value("lambda2", c.loss.lambda2);
        c.loss.tau_p = s.value("tau_p", c.loss.tau_p);
        c.loss.q_min = s.value("q_min", c.loss.q_min);
        c.loss.q_max = s.value("q_max", c.loss.q_max);
    }
    get("tau", c.tau);
    get("seed", c.seed);
    get("checkpoint_interval", c.checkpoint_interval);
    if (j.contains("denoiser")) {
        const auto& s = j.at("denoiser");
        c.denoiser.width = s.value("width", c.denoiser.width);
        c.denoiser.token_dim = s.value("token_dim", c.denoiser.token_dim);
        c.denoiser.attn_dim = s.value("attn_dim", c.denoiser.attn_dim);
        c.denoiser.emb_dim = s.value("emb_dim", c.denoiser.emb_dim);
        c.denoiser.attn_full = s.value("attn_full", c.denoiser.attn_full);
        c.denoiser.attn_half = s.value("attn_half", c.denoiser.attn_half);
        c.denoiser.attn_quarter = s.value("attn_quarter", c.denoiser.attn_quarter);
        c.denoiser.seed = s.value("seed", c.denoiser.seed);
    }
    if (j.contains("pool")) {
        const auto& s = j.at("pool");
        c.pool.global_len = s.value("global_len", c.pool.global_len);
        c.pool.candidates = s.value("candidates", c.pool.candidates);
        c.pool.max_tokens = s.value("max_tokens", c.pool.max_tokens);
        c.pool.dim = s.value("dim", c.pool.dim);
    }
    get("cache_capacity", c.cache_capacity);
    return c;
}

std::unique_ptr<TrainState> init_train_state(const TrainConfig& config) {
    if (config.batch_size < 1 || config.steps < 0 || config.image_size < 16)
        throw InvalidInput("init_train_state: bad counts in config");
    if (!(config.tau > config.complexity.q_min && config.tau < config.complexity.q_max))
        throw InvalidInput("init_train_state: tau outside (q_min, q_max)");
    if (config.denoiser.token_dim != config.pool.dim)
        throw InvalidInput("init_train_state: denoiser token_dim must match pool dim");
    if (config.complexity.c_max > config.pool.max_tokens)
        throw InvalidInput("init_train_state: c_max exceeds pool max_tokens");

    auto state = std::make_unique<TrainState>();
    state->config = config;
    state->store = std::make_unique<nn::ParamStore>();
    Rng pool_rng(mix_seed(config.seed, 0x9001));
    state->pool = PromptPool(*state->store, config.pool, pool_rng);
    state->denoiser = std::make_unique<ReferenceDenoiser>(*state->store, config.denoiser);
    state->optim = AdamOptimizer(state->store->size(), config.learning_rate);
    state->rng = Rng(mix_seed(config.seed, 0x7241));
    state->schedule =
        make_schedule(config.schedule.total_steps, config.schedule.beta_start, config.schedule.beta_end);
    state->quality_cache.reset(config.cache_capacity);
    return state;
}

void attach_dataset(TrainState& state) {
    const DatasetIndex index = open_dataset(state.config.dataset_path);
    if (index.sample_ids.empty())
        throw InvalidInput("attach_dataset: no samples under " + state.config.dataset_path);
    state.samples.clear();
    for (const auto& id : index.sample_ids)
        state.samples.push_back(load_sample(index.root, id));
}

const SampleContext& sample_context(TrainState& state, const DegradedSample& sample) {
    auto it = state.contexts.find(sample.sample_id);
    if (it != state.contexts.end()) return it->second;

    const QualityMap qmap = state.quality_cache.get_or_score(
        cache_key(state.scorer, sample.sample_id), sample.degraded, state.scorer);
    SampleContext ctx;
    ctx.partition = adaptive_region_partition(qmap, state.config.partition);
    ctx.selections.reserve(ctx.partition.regions.size());
    for (const Region& r : ctx.partition.regions) {
        const Image region_crop = crop(sample.degraded, r.y0, r.x0, r.height, r.width);
        ctx.selections.push_back(select_region_prompts(r, region_crop, state.pool, *state.store,
                                                       state.config.complexity, state.config.tau));
    }
    return state.contexts.emplace(sample.sample_id, std::move(ctx)).first->second;
}

LossBreakdown train_step(TrainState& state) {
    if (state.samples.empty()) throw InvalidInput("train_step: dataset not attached");

    const int n = static_cast<int>(state.samples.size());
    const int batch = std::min(state.config.batch_size, n);
    const int steps_per_epoch = (n + batch - 1) / batch;
    const std::uint64_t epoch = state.step / steps_per_epoch;
    const int slot = static_cast<int>(state.step % steps_per_epoch);

    // Deterministic epoch permutation, independent of resume points.
    std::vector<int> perm(n);
    for (int i = 0; i < n; ++i) perm[i] = i;
    Rng perm_rng(mix_seed(state.config.seed, kSaltEpoch + epoch));
    for (int i = n; i > 1; --i)
        std::swap(perm[i - 1], perm[perm_rng.uniform_int(0, i - 1)]);

    const int begin = slot * batch;
    const int end = std::min(begin + batch, n);
    const int actual = end - begin;

    const DiffusionSchedule& sched = state.schedule;
    const int T = sched.total_steps;
    LossBreakdown agg;

    for (int bi = begin; bi < end; ++bi) {
        const DegradedSample& sample = state.samples[perm[bi]];
        const int t = static_cast<int>(state.rng.uniform_int(1, T));
        const nn::Tensor x0 = normalize_image(sample.clean);
        const nn::Tensor y = normalize_image(sample.degraded);
        nn::Tensor eps(x0.c, x0.h, x0.w);
        for (double& v : eps.v) v = state.rng.normal();

        const QualityMap qmap = state.quality_cache.get_or_score(
            cache_key(state.scorer, sample.sample_id), sample.degraded, state.scorer);
        const SampleContext& ctx = sample_context(state, sample);
        const Conditioning cond =
            assemble_conditioning(ctx.partition, ctx.selections, state.pool, *state.store);

        const nn::Tensor x_t = forward_diffuse(x0, t, eps, sched);
        DenoiserInput input;
        input.x_t = &x_t;
        input.t = t;
        input.y = &y;
        input.conditioning = &cond;

        ReferenceDenoiser::Trace trace;
        const nn::Tensor eps_hat = state.denoiser->forward_train(input, trace);

        // Predicted clean image for the perceptual term (same x0-estimate as
        // the sampler, clipped; clipping zeroes the chained gradient).
        const double ab = sched.alpha_bar(t);
        const double inv_sqrt_ab = 1.0 / std::sqrt(ab);
        const double chain = -std::sqrt(1.0 - ab) * inv_sqrt_ab;
        nn::Tensor x_pred(x0.c, x0.h, x0.w);
        std::vector<bool> unclipped(x_pred.v.size());
        for (std::size_t i = 0; i < x_pred.v.size(); ++i) {
            const double raw = (x_t.v[i] - std::sqrt(1.0 - ab) * eps_hat.v[i]) * inv_sqrt_ab;
            unclipped[i] = raw > -1.5 && raw < 1.5;
            x_pred.v[i] = std::clamp(raw, -1.5, 1.5);
        }

        const double l_noise = loss_noise(eps, eps_hat);
        const double l_quality = loss_quality(eps, eps_hat, qmap, state.config.loss);
        nn::Tensor d_x_pred(x0.c, x0.h, x0.w);
        const double l_percep =
            loss_percep(x0, x_pred, qmap, ctx.partition, state.config.loss, &d_x_pred);
        const LossBreakdown item = loss_total(l_noise, l_quality, l_percep, state.config.loss);

        nn::Tensor d_eps_hat(x0.c, x0.h, x0.w);
        loss_noise_grad(eps, eps_hat, 1.0, d_eps_hat);
        loss_quality_grad(eps, eps_hat, qmap, state.config.loss, state.config.loss.lambda1,
                          d_eps_hat);
        const double l2 = state.config.loss.lambda2;
        for (std::size_t i = 0; i < d_eps_hat.v.size(); ++i)
            if (unclipped[i]) d_eps_hat.v[i] += l2 * d_x_pred.v[i] * chain;

        std::vector<double> d_tokens(cond.tokens.size(), 0.0);
        state.denoiser->backward(input, trace, d_eps_hat, d_tokens);
        scatter_token_grads(state.pool, *state.store, cond, d_tokens);

        agg.noise += item.noise;
        agg.quality += item.quality;
        agg.perceptual += item.perceptual;
        agg.total += item.total;
    }

    agg.noise /= actual;
    agg.quality /= actual;
    agg.perceptual /= actual;
    agg.total /= actual;
    if (!std::isfinite(agg.total))
        throw std::runtime_error("train_step: non-finite loss at step " +
                                 std::to_string(state.step) + " (noise=" +
                                 std::to_string(agg.noise) + ", quality=" +
                                 std::to_string(agg.quality) + ", perceptual=" +
                                 std::to_string(agg.perceptual) + ")");

    // Average accumulated gradients over the batch and update.
    std::vector<double>& grads = state.store->grads_vec();
    const double inv_b = 1.0 / actual;
    for (double& g : grads) g *= inv_b;
    state.optim.step(state.store->values_vec(), grads);
    state.store->zero_grads();
    state.pool.normalize_keys(*state.store);
    ++state.step;
    return agg;
}

void run_training(TrainState& state, const std::string& out_dir) {
    fs::create_directories(out_dir);
    const fs::path log_path = fs::path(out_dir) / "train_log.csv";
    std::ofstream log(log_path, state.step == 0 ? std::ios::trunc : std::ios::app);
    if (!log) throw FormatError("run_training: cannot open " + log_path.string());
    if (state.step == 0) log << "step,noise,quality,perceptual,total\n";

    while (state.step < static_cast<std::uint64_t>(state.config.steps)) {
        const LossBreakdown b = train_step(state);
        log << state.step << ',' << b.noise << ',' << b.quality << ',' << b.perceptual << ','
            << b.total << '\n';
        if (state.config.checkpoint_interval > 0 &&
            state.step % static_cast<std::uint64_t>(state.config.checkpoint_interval) == 0) {
            save_checkpoint(state,
                            (fs::path(out_dir) / ("checkpoint_step" + std::to_string(state.step) +
                                                  ".qdck"))
                                .string());
            log.flush();
        }
    }
    save_checkpoint(state, (fs::path(out_dir) / "checkpoint_latest.qdck").string());
}

Image restore_image(TrainState& state, const Image& degraded, const std::string& key,
                    std::uint64_t seed, RestoreReport* report) {
    return restore_with_overrides(state, degraded, key, seed, RestoreOverrides{}, report);
}

Image restore_with_overrides(TrainState& state, const Image& degraded, const std::string& key,
                             std::uint64_t seed, const RestoreOverrides& overrides,
                             RestoreReport* report) {
    const auto start = std::chrono::steady_clock::now();

    const QualityScorer& scorer = overrides.scorer ? *overrides.scorer : state.scorer;
    const ComplexityParams& complexity_params =
        overrides.complexity ? *overrides.complexity : state.config.complexity;
    const float tau = overrides.has_tau ? overrides.tau : state.config.tau;

    const QualityMap qmap =
        state.quality_cache.get_or_score(cache_key(scorer, key), degraded, scorer);
    const RegionPartition partition = adaptive_region_partition(qmap, state.config.partition);
    std::vector<RegionSelection> selections;
    selections.reserve(partition.regions.size());
    for (const Region& r : partition.regions) {
        const Image region_crop = crop(degraded, r.y0, r.x0, r.height, r.width);
        selections.push_back(select_region_prompts(r, region_crop, state.pool, *state.store,
                                                   complexity_params, tau));
    }
    const Conditioning cond =
        assemble_conditioning(partition, selections, state.pool, *state.store);

    SampleReport sr;
    Image restored = sample(degraded, *state.denoiser, cond, state.schedule, seed, &sr);

    if (report) {
        report->sample_id = key;
        double q_sum = 0.0, q_min = kQualityMax;
        for (float v : qmap.values) {
            q_sum += v;
            q_min = std::min(q_min, static_cast<double>(v));
        }
        report->mean_q_before = q_sum / static_cast<double>(qmap.values.size());
        report->min_q_before = q_min;
        const QualityMap after = score_no_reference(restored);
        double a_sum = 0.0;
        for (float v : after.values) a_sum += v;
        report->mean_q_after = a_sum / static_cast<double>(after.values.size());
        report->region_count = static_cast<int>(partition.regions.size());
        report->prompt_budget = 0;
        for (const auto& sel : selections) report->prompt_budget += sel.complexity;
        report->denoiser_calls = sr.denoiser_calls;
        report->wall_ms = std::chrono::duration<double, std::milli>(
                              std::chrono::steady_clock::now() - start)
                              .count();
    }
    return restored;
}

} // namespace qdr
