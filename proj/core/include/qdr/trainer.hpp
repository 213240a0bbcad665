// SPDX-License-Identifier: Apache-2.0
#ifndef QDR_TRAINER_HPP
#define QDR_TRAINER_HPP

#include <cstdint>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "qdr/degrade.hpp"
#include "qdr/denoiser.hpp"
#include "qdr/diffusion.hpp"
#include "qdr/losses.hpp"
#include "qdr/optim.hpp"
#include "qdr/partition.hpp"
#include "qdr/prompts.hpp"
#include "qdr/qualmap.hpp"

namespace qdr {

struct ScheduleParams {
    int total_steps = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;
};

struct TrainConfig {
    std::string dataset_path;
    int image_size = 64;
    int batch_size = 4;
    int steps = 2000;
    double learning_rate = 2e-4;
    ScheduleParams schedule;
    ComplexityParams complexity;
    PartitionParams partition;
    LossConfig loss;
    float tau = 3.0f; // pool routing threshold
    std::uint64_t seed = 1234;
    int checkpoint_interval = 500;
    DenoiserConfig denoiser;
    PoolConfig pool;
    std::size_t cache_capacity = 4096;
};

std::string train_config_to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const std::string& json_text);

/// Partition and prompt selection are pure functions of the (cached) quality
/// map and the frozen pool keys, so they are memoized per sample for the
/// whole run. Token values are re-gathered from the pool every step.
struct SampleContext {
    RegionPartition partition;
    std::vector<RegionSelection> selections;
};

class TrainState {
public:
    TrainConfig config;
    std::unique_ptr<nn::ParamStore> store;
    PromptPool pool;
    std::unique_ptr<ReferenceDenoiser> denoiser;
    AdamOptimizer optim;
    Rng rng;
    std::uint64_t step = 0;
    DiffusionSchedule schedule;
    QualityCache quality_cache;
    NoReferenceProxyScorer scorer;

    std::vector<DegradedSample> samples; // training set, in-memory
    std::unordered_map<std::string, SampleContext> contexts;

    TrainState() : quality_cache(4096) {}
};

std::unique_ptr<TrainState> init_train_state(const TrainConfig& config);

/// Load every sample from config.dataset_path into memory.
void attach_dataset(TrainState& state);

const SampleContext& sample_context(TrainState& state, const DegradedSample& sample);

/// One optimizer update over the next deterministic batch.
LossBreakdown train_step(TrainState& state);

/// Full loop with CSV loss log and periodic checkpoints under out_dir.
void run_training(TrainState& state, const std::string& out_dir);

struct RestoreReport {
    std::string sample_id;
    double mean_q_before = 0.0;
    double mean_q_after = 0.0;
    double min_q_before = 0.0;
    int region_count = 0;
    int prompt_budget = 0; // sum of per-region complexities
    double wall_ms = 0.0;
    int denoiser_calls = 0;
};

struct RestoreOverrides {
    const QualityScorer* scorer = nullptr;       // conditioning scorer; defaults to no-reference
    const ComplexityParams* complexity = nullptr;
    bool has_tau = false;
    float tau = 0.0f;
};

/// Score -> partition -> select -> 2-step sample.
Image restore_image(TrainState& state, const Image& degraded, const std::string& key,
                    std::uint64_t seed, RestoreReport* report = nullptr);

Image restore_with_overrides(TrainState& state, const Image& degraded, const std::string& key,
                             std::uint64_t seed, const RestoreOverrides& overrides,
                             RestoreReport* report = nullptr);

void save_checkpoint(const TrainState& state, const std::string& path);
std::unique_ptr<TrainState> load_checkpoint(const std::string& path);

} // namespace qdr

#endif
