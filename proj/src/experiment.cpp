#include "powdr/experiment.hpp"

#include <chrono>

#include "powdr/sampler.hpp"

namespace powdr {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

} // namespace

void check_experiment_configs(const RunConfig &a, const RunConfig &b) {
    RunConfig a2 = a, b2 = b;
    a2.train.seed = b2.train.seed = 0;
    const auto diff = differing_keys(a2, b2);
    if (a.train.conditioning_mode == b.train.conditioning_mode)
        throw ExperimentArgumentError("experiment configs must differ in conditioning_mode");
    std::string extra;
    for (const auto &k : diff)
        if (k != "conditioning_mode") extra += (extra.empty() ? "" : ", ") + k;
    if (!extra.empty()) throw ExperimentArgumentError("experiment configs may differ only in conditioning_mode; also differ in: " + extra);
}

VolumeDistribution experiment_volume_distribution(const Dataset &ds, std::size_t train_cases, double jitter) {
    VolumeDistribution dist;
    dist.jitter_fraction = jitter;
    if (ds.lesion_volumes && ds.lesion_volumes->size() >= train_cases) {
        dist.samples.assign(ds.lesion_volumes->begin(), ds.lesion_volumes->begin() + static_cast<std::ptrdiff_t>(train_cases));
    } else {
        for (std::size_t i = 0; i < train_cases; ++i) dist.samples.push_back(ds.cases[i].pathology_mask.count());
    }
    return dist;
}

ExperimentResult run_diversity_experiment(const Dataset &ds, const RunConfig &a, const RunConfig &b, const ExperimentOptions &opt,
                                          const ExperimentLog &log) {
    check_experiment_configs(a, b);
    if (opt.repeats < 2) throw ExperimentArgumentError("diversity needs at least 2 repeats");
    validate_dataset(ds.cases);
    if (ds.cases.size() < 2) throw ExperimentArgumentError("experiment needs at least 2 cases: training cases plus one held out");
    const auto t_start = Clock::now();

    ExperimentResult res;
    res.held_out_case = ds.cases.size() - 1;
    const std::vector<TrainingExample> train_set(ds.cases.begin(), ds.cases.end() - 1);
    const VolumeDistribution dist = experiment_volume_distribution(ds, train_set.size());
    const TrainingExample &held = ds.cases.back();

    const auto run = [&](const RunConfig &base) {
        RunConfig cfg = base;
        cfg.train.seed = opt.seed;
        StrategyOutcome out;
        out.mode = cfg.train.conditioning_mode;
        const std::string name = to_string(out.mode);
        auto t0 = Clock::now();
        if (opt.stub) {
            out.checkpoint = Checkpoint{cfg.network, cfg.schedule, std::vector<double>(Denoiser(cfg.network).param_count(), 0.0), std::nullopt, 0};
        } else {
            if (log) log("training " + name);
            TrainResult tr = train(train_set, cfg, &dist);
            out.checkpoint = std::move(tr.checkpoint);
            out.losses = std::move(tr.losses);
        }
        out.train_seconds = seconds_since(t0);

        if (log) log("sampling " + name);
        t0 = Clock::now();
        SampleRequest req;
        req.condition_image = held.image;
        req.condition_mask = held.pathology_mask;
        req.steps = cfg.schedule.steps;
        req.seed = opt.seed;
        req.repeats = opt.repeats;
        req.hard_composite = opt.hard_composite || opt.stub;
        out.samples = sample(out.checkpoint, req);
        out.sample_seconds = seconds_since(t0);
        // A zero network leaves nothing outside the lesion, so the outside-region metrics are undefined there.
        out.report = diversity_report(out.samples, opt.stub ? nullptr : &held.pathology_mask);
        return out;
    };

    StrategyOutcome oa = run(a), ob = run(b);
    if (oa.mode == ConditioningMode::fixed_pathology) {
        res.fixed = std::move(oa);
        res.random = std::move(ob);
    } else {
        res.fixed = std::move(ob);
        res.random = std::move(oa);
    }
    res.delta_cosine = res.random.report.cosine.mean - res.fixed.report.cosine.mean;
    res.delta_kl = res.random.report.kl.mean - res.fixed.report.kl.mean;
    res.runtime_seconds = seconds_since(t_start);
    return res;
}

} // namespace powdr
