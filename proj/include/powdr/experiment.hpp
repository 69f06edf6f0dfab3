#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "powdr/checkpoint.hpp"
#include "powdr/dataset.hpp"
#include "powdr/metrics.hpp"
#include "powdr/trainer.hpp"

namespace powdr {

class ExperimentArgumentError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct ExperimentOptions {
    std::size_t repeats = 10;
    /// Overrides the training seed of both configs and seeds the sampling chains.
    std::uint64_t seed = 0;
    /// Skip training and sample from all-zero networks; forces hard compositing so samples are non-zero.
    bool stub = false;
    bool hard_composite = false;
};

struct StrategyOutcome {
    ConditioningMode mode = ConditioningMode::fixed_pathology;
    Checkpoint checkpoint;
    std::vector<double> losses;
    std::vector<Volume> samples;
    DiversityReport report;
    double train_seconds = 0.0;
    double sample_seconds = 0.0;
};

struct ExperimentResult {
    StrategyOutcome fixed;
    StrategyOutcome random;
    /// Index of the case held out of training and used as the sampling condition.
    std::size_t held_out_case = 0;
    /// random minus fixed; the paper's direction is delta_cosine < 0 and delta_kl > 0.
    double delta_cosine = 0.0;
    double delta_kl = 0.0;
    double runtime_seconds = 0.0;
};

/// Configs must differ in conditioning_mode and nothing else (seed aside, which the options override).
void check_experiment_configs(const RunConfig &a, const RunConfig &b);

/// Reference lesion sizes: the manifest list when present, else the training masks' voxel counts.
VolumeDistribution experiment_volume_distribution(const Dataset &ds, std::size_t train_cases, double jitter = 0.1);

using ExperimentLog = std::function<void(const std::string &)>;

/// Trains both strategies on every case but the last, then samples `repeats` volumes per strategy from the
/// held-out case's lesion and reports diversity for each.
ExperimentResult run_diversity_experiment(const Dataset &ds, const RunConfig &a, const RunConfig &b, const ExperimentOptions &opt,
                                          const ExperimentLog &log = {});

} // namespace powdr
