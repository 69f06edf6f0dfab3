#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "powdr/checkpoint.hpp"
#include "powdr/dataset.hpp"
#include "powdr/experiment.hpp"
#include "powdr/maskgen.hpp"
#include "powdr/metrics.hpp"
#include "powdr/phantom.hpp"
#include "powdr/sampler.hpp"
#include "powdr/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace powdr;

namespace {

// Bad flags or inputs that are rejected before any expensive work; exit code 2.
class UsageError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

void write_text(const fs::path &path, const std::string &text) {
    const std::vector<std::uint8_t> bytes(text.begin(), text.end());
    write_file_atomic(path, bytes);
}

fs::path with_suffix(const std::string &prefix, const std::string &suffix) { return fs::path(prefix + suffix); }

json mean_std_json(const MeanStd &m) { return {{"mean", m.mean}, {"std", m.std}}; }

json report_json(const DiversityReport &r) {
    json j{{"n_samples", r.n_samples}, {"pair_count", r.pair_count}, {"cosine", mean_std_json(r.cosine)}, {"kl", mean_std_json(r.kl)}};
    if (r.cosine_outside) j["cosine_outside"] = mean_std_json(*r.cosine_outside);
    if (r.kl_outside) j["kl_outside"] = mean_std_json(*r.kl_outside);
    double max_std = 0.0;
    for (float v : r.voxelwise_std.values()) max_std = std::max(max_std, static_cast<double>(v));
    j["max_voxel_std"] = max_std;
    return j;
}

std::string pairs_csv(const DiversityReport &r) {
    const bool outside = r.cosine_outside.has_value();
    std::string out = outside ? "i,j,cosine,kl,cosine_outside,kl_outside\n" : "i,j,cosine,kl\n";
    char buf[256];
    for (const auto &p : r.pairs) {
        if (outside)
            std::snprintf(buf, sizeof buf, "%zu,%zu,%.17g,%.17g,%.17g,%.17g\n", p.i, p.j, p.cosine, p.kl, *p.cosine_outside, *p.kl_outside);
        else
            std::snprintf(buf, sizeof buf, "%zu,%zu,%.17g,%.17g\n", p.i, p.j, p.cosine, p.kl);
        out += buf;
    }
    return out;
}

// ---- gen-phantoms

struct GenPhantomsArgs {
    std::size_t count = 32;
    std::size_t size = 16;
    std::uint64_t seed = 0;
    std::string out_dir;
    std::size_t lesion_min = 20;
    std::size_t lesion_max = 80;
    double texture = 0.1;
};

int cmd_gen_phantoms(const GenPhantomsArgs &a) {
    if (a.size % 2 != 0) throw UsageError("--size must be even (dims must be even for the wavelet transform), got " + std::to_string(a.size));
    PhantomSpec spec;
    spec.dims = {a.size, a.size, a.size};
    spec.n_cases = a.count;
    spec.lesion_volume_range = {a.lesion_min, a.lesion_max};
    spec.texture_amplitude = a.texture;
    spec.seed = a.seed;
    try {
        spec.validate();
    } catch (const std::exception &e) {
        throw UsageError(e.what());
    }
    write_phantom_set(spec, a.out_dir);
    std::cerr << "wrote " << a.count << " phantoms to " << a.out_dir << "\n";
    return 0;
}

// ---- train

struct TrainArgs {
    std::string config;
    std::string data_dir;
    std::string out;
    std::string volume_dist;
};

int cmd_train(const TrainArgs &a) {
    const RunConfig cfg = load_run_config(a.config);
    const Dataset ds = load_dataset(a.data_dir);
    std::optional<VolumeDistribution> dist;
    if (!a.volume_dist.empty()) {
        dist = load_volume_distribution(a.volume_dist);
    } else if (ds.lesion_volumes && !ds.lesion_volumes->empty()) {
        dist = VolumeDistribution{*ds.lesion_volumes, 0.1};
    }
    if (cfg.train.conditioning_mode == ConditioningMode::random_connected && !dist)
        throw UsageError("conditioning_mode = random_connected needs --volume-dist or a data-dir manifest with lesion_volumes");
    cfg.network.check_band_dims(ds.cases.front().image.dims().halved());

    const fs::path out(a.out);
    const auto t0 = std::chrono::steady_clock::now();
    const std::size_t report_every = std::max<std::size_t>(1, cfg.train.iterations / 20);
    TrainHooks hooks;
    hooks.on_loss = [&](std::size_t it, double loss) {
        if (it % report_every == 0 || it == 1) std::cerr << "iter " << it << "/" << cfg.train.iterations << " loss " << loss << "\n";
    };
    hooks.on_checkpoint = [&](const Checkpoint &ck) {
        if (ck.iteration == cfg.train.iterations) return;
        fs::path p = out;
        p.replace_filename(out.stem().string() + "_it" + std::to_string(ck.iteration) + out.extension().string());
        write_checkpoint(ck, p);
    };
    const TrainResult res = train(ds.cases, cfg, dist ? &*dist : nullptr, hooks);
    write_checkpoint(res.checkpoint, out);
    fs::path csv = out;
    csv.replace_filename(out.stem().string() + "_loss.csv");
    write_loss_csv(res.losses, csv);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cerr << "trained " << cfg.train.iterations << " iterations in " << secs << " s; checkpoint " << out.string() << "\n";
    return 0;
}

// ---- sample

struct SampleArgs {
    std::string checkpoint;
    std::string condition;
    std::string mask;
    std::size_t repeats = 1;
    std::uint64_t seed = 0;
    std::size_t steps = 0;
    bool hard_composite = false;
    bool clamp = false;
    std::string out_prefix;
};

int cmd_sample(const SampleArgs &a) {
    const auto ck_bytes = read_file_bytes(a.checkpoint);
    const Checkpoint ck = decode_checkpoint(ck_bytes);
    SampleRequest req;
    req.condition_image = read_volume(a.condition);
    req.condition_mask = read_mask(a.mask);
    req.repeats = a.repeats;
    req.seed = a.seed;
    req.steps = a.steps == 0 ? ck.schedule.steps : a.steps;
    req.hard_composite = a.hard_composite;
    std::vector<Volume> out = sample(ck, req);

    json files = json::array();
    for (std::size_t r = 0; r < out.size(); ++r) {
        if (a.clamp)
            for (auto &v : out[r].values()) v = std::clamp(v, 0.0f, 1.0f);
        const fs::path p = with_suffix(a.out_prefix, "_r" + std::to_string(r) + ".pvol");
        write_volume(out[r], p);
        files.push_back(p.filename().string());
    }
    json side{{"checkpoint", a.checkpoint},
              {"checkpoint_fnv1a64", hex64(fnv1a64(ck_bytes))},
              {"seed", a.seed},
              {"repeats", a.repeats},
              {"steps", req.steps},
              {"hard_composite", a.hard_composite},
              {"clamp", a.clamp},
              {"files", files}};
    write_text(with_suffix(a.out_prefix, ".json"), side.dump(2) + "\n");
    std::cerr << "wrote " << out.size() << " samples with prefix " << a.out_prefix << "\n";
    return 0;
}

// ---- metrics

struct MetricsArgs {
    std::vector<std::string> samples;
    std::string mask;
    std::string reference;
    std::size_t bins = kDefaultBins;
    std::string out_prefix;
};

int cmd_metrics(const MetricsArgs &a) {
    if (a.samples.size() < 2) throw UsageError("metrics needs at least 2 --samples");
    std::vector<Volume> vols;
    for (const auto &s : a.samples) vols.push_back(read_volume(s));
    std::optional<Mask> mask;
    if (!a.mask.empty()) mask = read_mask(a.mask);
    const DiversityReport r = diversity_report(vols, mask ? &*mask : nullptr, a.bins);

    const fs::path mean_path = with_suffix(a.out_prefix, "_mean.pvol");
    const fs::path std_path = with_suffix(a.out_prefix, "_std.pvol");
    write_volume(r.voxelwise_mean, mean_path);
    write_volume(r.voxelwise_std, std_path);
    json j = report_json(r);
    j["mean_map"] = mean_path.string();
    j["std_map"] = std_path.string();
    if (!a.reference.empty()) {
        const Volume ref = read_volume(a.reference);
        std::vector<double> all, inside, outside;
        for (const auto &v : vols) {
            all.push_back(ms_ssim(v, ref));
            if (mask) {
                inside.push_back(ms_ssim(v, ref, &*mask, Region::inside));
                outside.push_back(ms_ssim(v, ref, &*mask, Region::outside));
            }
        }
        j["ms_ssim_vs_reference"] = mean_std_json(mean_std(all));
        if (mask) {
            j["ms_ssim_inside_vs_reference"] = mean_std_json(mean_std(inside));
            j["ms_ssim_outside_vs_reference"] = mean_std_json(mean_std(outside));
        }
    }
    write_text(with_suffix(a.out_prefix, "_metrics.json"), j.dump(2) + "\n");
    write_text(with_suffix(a.out_prefix, "_pairs.csv"), pairs_csv(r));
    std::cout << j.dump(2) << "\n";
    return 0;
}

// ---- mask gen | check

struct MaskGenArgs {
    std::size_t size = 16;
    std::size_t voxels = 0;
    std::string volume_dist;
    double jitter = 0.1;
    std::size_t count = 1;
    std::uint64_t seed = 0;
    std::string out_prefix;
};

int cmd_mask_gen(const MaskGenArgs &a) {
    if ((a.voxels == 0) == a.volume_dist.empty()) throw UsageError("give exactly one of --voxels or --volume-dist");
    const Dims dims{a.size, a.size, a.size};
    if (a.voxels > dims.count()) throw UsageError("--voxels exceeds the grid size " + to_string(dims));
    std::optional<VolumeDistribution> dist;
    if (!a.volume_dist.empty()) dist = load_volume_distribution(a.volume_dist, a.jitter);
    Rng rng(a.seed);
    for (std::size_t i = 0; i < a.count; ++i) {
        const std::size_t target = dist ? std::min(sample_target_volume(*dist, rng), dims.count()) : a.voxels;
        const Mask m = grow_connected_mask(dims, target, rng);
        write_mask(m, with_suffix(a.out_prefix, "_" + std::to_string(i) + ".pvol"));
        std::cout << i << "," << m.count() << "\n";
    }
    return 0;
}

int cmd_mask_check(const std::string &path) {
    const Mask m = read_mask(path);
    const bool ok = check_6_connected(m);
    std::cout << json{{"voxels", m.count()}, {"connected_6", ok}}.dump() << "\n";
    return ok ? 0 : 1;
}

// ---- diversity-experiment

struct ExperimentArgs {
    std::string data_dir;
    std::string config_a;
    std::string config_b;
    std::size_t repeats = 10;
    std::uint64_t seed = 0;
    bool stub = false;
    bool hard_composite = false;
    std::string out;
};

json outcome_json(const StrategyOutcome &o) {
    return {{"conditioning_mode", to_string(o.mode)},
            {"report", report_json(o.report)},
            {"final_loss", o.losses.empty() ? json(nullptr) : json(o.losses.back())},
            {"train_seconds", o.train_seconds},
            {"sample_seconds", o.sample_seconds}};
}

int cmd_experiment(const ExperimentArgs &a) {
    const RunConfig ca = load_run_config(a.config_a);
    const RunConfig cb = load_run_config(a.config_b);
    check_experiment_configs(ca, cb);
    if (a.repeats < 2) throw UsageError("--repeats must be at least 2");
    const Dataset ds = load_dataset(a.data_dir);
    ca.network.check_band_dims(ds.cases.front().image.dims().halved());

    ExperimentOptions opt;
    opt.repeats = a.repeats;
    opt.seed = a.seed;
    opt.stub = a.stub;
    opt.hard_composite = a.hard_composite;
    const ExperimentResult res = run_diversity_experiment(ds, ca, cb, opt, [](const std::string &s) { std::cerr << s << "\n"; });

    const fs::path dir(a.out);
    fs::create_directories(dir);
    json j{{"held_out_case", res.held_out_case},
           {"repeats", a.repeats},
           {"seed", a.seed},
           {"stub", a.stub},
           {"fixed_pathology", outcome_json(res.fixed)},
           {"random_connected", outcome_json(res.random)},
           {"delta_cosine", res.delta_cosine},
           {"delta_kl", res.delta_kl},
           {"runtime_seconds", res.runtime_seconds}};
    for (const StrategyOutcome *o : {&res.fixed, &res.random}) {
        const std::string name = to_string(o->mode);
        write_volume(o->report.voxelwise_mean, dir / (name + "_mean.pvol"));
        write_volume(o->report.voxelwise_std, dir / (name + "_std.pvol"));
        write_text(dir / (name + "_pairs.csv"), pairs_csv(o->report));
        if (!o->losses.empty()) write_loss_csv(o->losses, dir / (name + "_loss.csv"));
    }
    write_text(dir / "experiment.json", j.dump(2) + "\n");
    std::cout << j.dump(2) << "\n";
    return 0;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"powdr: pathology-preserving 3D outpainting with conditioned wavelet diffusion"};
    app.require_subcommand(1);

    GenPhantomsArgs gp;
    auto *gen = app.add_subcommand("gen-phantoms", "write a procedural phantom dataset");
    gen->add_option("--count", gp.count, "number of cases")->check(CLI::PositiveNumber);
    gen->add_option("--size", gp.size, "cube edge length (even)")->check(CLI::PositiveNumber);
    gen->add_option("--seed", gp.seed);
    gen->add_option("--out-dir", gp.out_dir)->required();
    gen->add_option("--lesion-min", gp.lesion_min);
    gen->add_option("--lesion-max", gp.lesion_max);
    gen->add_option("--texture", gp.texture);

    TrainArgs ta;
    auto *tr = app.add_subcommand("train", "train a conditional wavelet diffusion model");
    tr->add_option("--config", ta.config)->required();
    tr->add_option("--data-dir", ta.data_dir)->required();
    tr->add_option("--out", ta.out, "checkpoint path; the loss CSV goes next to it")->required();
    tr->add_option("--volume-dist", ta.volume_dist, "lesion volume list for random_connected masks");

    SampleArgs sa;
    auto *sm = app.add_subcommand("sample", "outpaint around a preserved region");
    sm->add_option("--checkpoint", sa.checkpoint)->required();
    sm->add_option("--condition", sa.condition)->required();
    sm->add_option("--mask", sa.mask)->required();
    sm->add_option("--repeats", sa.repeats)->check(CLI::PositiveNumber);
    sm->add_option("--seed", sa.seed);
    sm->add_option("--steps", sa.steps, "must equal the checkpoint's T; defaults to it");
    sm->add_flag("--hard-composite", sa.hard_composite);
    sm->add_flag("--clamp", sa.clamp, "clamp written samples to [0, 1]");
    sm->add_option("--out-prefix", sa.out_prefix)->required();

    MetricsArgs ma;
    auto *mt = app.add_subcommand("metrics", "diversity and similarity report over samples");
    mt->add_option("--samples", ma.samples)->required();
    mt->add_option("--mask", ma.mask);
    mt->add_option("--reference", ma.reference, "volume to compare each sample against with MS-SSIM");
    mt->add_option("--bins", ma.bins)->check(CLI::PositiveNumber);
    mt->add_option("--out-prefix", ma.out_prefix)->required();

    auto *mk = app.add_subcommand("mask", "random connected masks");
    mk->require_subcommand(1);
    MaskGenArgs mg;
    auto *mkg = mk->add_subcommand("gen", "grow 6-connected masks");
    mkg->add_option("--size", mg.size)->check(CLI::PositiveNumber);
    mkg->add_option("--voxels", mg.voxels);
    mkg->add_option("--volume-dist", mg.volume_dist);
    mkg->add_option("--jitter", mg.jitter);
    mkg->add_option("--count", mg.count)->check(CLI::PositiveNumber);
    mkg->add_option("--seed", mg.seed);
    mkg->add_option("--out-prefix", mg.out_prefix)->required();
    std::string check_path;
    auto *mkc = mk->add_subcommand("check", "report voxel count and 6-connectivity");
    mkc->add_option("--mask", check_path)->required();

    ExperimentArgs ea;
    auto *ex = app.add_subcommand("diversity-experiment", "train both conditioning strategies and compare sample diversity");
    ex->add_option("--data-dir", ea.data_dir)->required();
    ex->add_option("--config-a", ea.config_a)->required();
    ex->add_option("--config-b", ea.config_b)->required();
    ex->add_option("--repeats", ea.repeats);
    ex->add_option("--seed", ea.seed);
    ex->add_flag("--stub", ea.stub, "skip training and sample from zero networks");
    ex->add_flag("--hard-composite", ea.hard_composite);
    ex->add_option("--out", ea.out)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*gen) return cmd_gen_phantoms(gp);
        if (*tr) return cmd_train(ta);
        if (*sm) return cmd_sample(sa);
        if (*mt) return cmd_metrics(ma);
        if (*mkg) return cmd_mask_gen(mg);
        if (*mkc) return cmd_mask_check(check_path);
        if (*ex) return cmd_experiment(ea);
    } catch (const ConfigError &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::logic_error &e) {
        // Argument, contract and range violations: the inputs were wrong.
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
