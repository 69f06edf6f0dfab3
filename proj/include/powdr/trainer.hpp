#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "powdr/checkpoint.hpp"
#include "powdr/dataset.hpp"
#include "powdr/denoiser.hpp"
#include "powdr/maskgen.hpp"
#include "powdr/schedule.hpp"

namespace powdr {

enum class ConditioningMode { fixed_pathology, random_connected };

/// Where random training masks may be placed relative to the case's real lesion.
enum class RandomMaskPlacement { unconstrained, outside_pathology };

std::string to_string(ConditioningMode m);
ConditioningMode parse_conditioning_mode(const std::string &s);

struct TrainConfig {
    std::size_t iterations = 2000;
    std::size_t batch_size = 4;
    double learning_rate = 1e-3;
    double weight_decay = 0.01;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    ConditioningMode conditioning_mode = ConditioningMode::fixed_pathology;
    std::uint64_t seed = 0;
    /// 0 disables intermediate checkpoints; the final one is always produced.
    std::size_t checkpoint_interval = 0;
    RandomMaskPlacement random_mask_placement = RandomMaskPlacement::unconstrained;

    void validate() const;
    bool operator==(const TrainConfig &) const = default;
};

/// Everything a `key = value` config file can set.
struct RunConfig {
    TrainConfig train;
    ScheduleParams schedule;
    DenoiserConfig network;
    bool operator==(const RunConfig &) const = default;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

RunConfig parse_run_config(const std::string &text);
RunConfig load_run_config(const std::filesystem::path &path);
std::string format_run_config(const RunConfig &cfg);
/// Names of keys whose values differ between two configs.
std::vector<std::string> differing_keys(const RunConfig &a, const RunConfig &b);

class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

SubbandTensor build_condition(const TrainingExample &ex, ConditioningMode mode, const VolumeDistribution *dist, Rng &rng,
                              RandomMaskPlacement placement = RandomMaskPlacement::unconstrained);

struct WaveletLoss {
    double value = 0.0;
    /// dL/dpred = (2/K) (pred - target)
    std::vector<double> grad;
};

/// Mean squared error over all K coefficients.
WaveletLoss loss_wavelet_mse(std::span<const double> pred, std::span<const float> target);
WaveletLoss loss_wavelet_mse(const SubbandTensor &pred, const SubbandTensor &target);

struct AdamWHyper {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

/// One decoupled-weight-decay Adam update; increments state.step first, so the first call uses k = 1.
void adamw_step(std::span<double> params, std::span<const double> grads, OptimizerState &state, const AdamWHyper &hp);

/// Uniform step in [1, T].
std::size_t sample_timestep(Rng &rng, std::size_t steps);

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<double> losses;
};

struct TrainHooks {
    std::function<void(std::size_t iteration, double loss)> on_loss;
    /// Case indices drawn for the batch, reported before the batch is evaluated.
    std::function<void(std::size_t iteration, std::span<const std::size_t> cases)> on_batch;
    std::function<void(const Checkpoint &)> on_checkpoint;
};

/// Conditional diffusion training: per example draw t and eps, noise dwt3(image), build the condition,
/// regress x0 and apply AdamW to the batch-mean loss. dist is required for random_connected mode.
TrainResult train(const std::vector<TrainingExample> &dataset, const RunConfig &cfg, const VolumeDistribution *dist,
                  const TrainHooks &hooks = {});

void write_loss_csv(std::span<const double> losses, const std::filesystem::path &path);

} // namespace powdr
