#include "powdr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <utility>

#include "powdr/parallel.hpp"
#include "powdr/wavelet.hpp"

namespace powdr {

std::string to_string(ConditioningMode m) {
    return m == ConditioningMode::fixed_pathology ? "fixed_pathology" : "random_connected";
}

ConditioningMode parse_conditioning_mode(const std::string &s) {
    if (s == "fixed_pathology") return ConditioningMode::fixed_pathology;
    if (s == "random_connected") return ConditioningMode::random_connected;
    throw ConfigError("conditioning_mode must be fixed_pathology or random_connected, got \"" + s + "\"");
}

void TrainConfig::validate() const {
    if (iterations == 0) throw ConfigError("iterations must be positive");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0))
        throw ConfigError("adam betas must lie in [0, 1)");
    if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
}

namespace {

std::string trim(const std::string &s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double to_double(const std::string &key, const std::string &value) {
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception &) {
        throw ConfigError("key " + key + ": expected a number, got \"" + value + "\"");
    }
}

std::uint64_t to_uint(const std::string &key, const std::string &value) {
    try {
        std::size_t used = 0;
        if (!value.empty() && value[0] == '-') throw std::invalid_argument(value);
        const unsigned long long v = std::stoull(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception &) {
        throw ConfigError("key " + key + ": expected a non-negative integer, got \"" + value + "\"");
    }
}

std::vector<std::pair<std::string, std::string>> key_values(const RunConfig &c) {
    std::string mults;
    for (std::size_t i = 0; i < c.network.channel_multipliers.size(); ++i)
        mults += (i ? "," : "") + std::to_string(c.network.channel_multipliers[i]);
    return {
        {"iterations", std::to_string(c.train.iterations)},
        {"batch_size", std::to_string(c.train.batch_size)},
        {"learning_rate", fmt_double(c.train.learning_rate)},
        {"weight_decay", fmt_double(c.train.weight_decay)},
        {"adam_beta1", fmt_double(c.train.adam_beta1)},
        {"adam_beta2", fmt_double(c.train.adam_beta2)},
        {"adam_eps", fmt_double(c.train.adam_eps)},
        {"conditioning_mode", to_string(c.train.conditioning_mode)},
        {"seed", std::to_string(c.train.seed)},
        {"T", std::to_string(c.schedule.steps)},
        {"beta_start", fmt_double(c.schedule.beta_start)},
        {"beta_end", fmt_double(c.schedule.beta_end)},
        {"base_channels", std::to_string(c.network.base_channels)},
        {"channel_multipliers", mults},
        {"blocks_per_level", std::to_string(c.network.blocks_per_level)},
        {"dropout_rate", fmt_double(c.network.dropout_rate)},
        {"time_embed_dim", std::to_string(c.network.time_embed_dim)},
        {"checkpoint_interval", std::to_string(c.train.checkpoint_interval)},
        {"random_mask_placement",
         c.train.random_mask_placement == RandomMaskPlacement::unconstrained ? "unconstrained" : "outside_pathology"},
    };
}

} // namespace

RunConfig parse_run_config(const std::string &text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    std::map<std::string, std::size_t> seen;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (auto [it, fresh] = seen.emplace(key, line_no); !fresh)
            throw ConfigError("key " + key + " repeated on line " + std::to_string(line_no));

        if (key == "iterations") cfg.train.iterations = to_uint(key, value);
        else if (key == "batch_size") cfg.train.batch_size = to_uint(key, value);
        else if (key == "learning_rate") cfg.train.learning_rate = to_double(key, value);
        else if (key == "weight_decay") cfg.train.weight_decay = to_double(key, value);
        else if (key == "adam_beta1") cfg.train.adam_beta1 = to_double(key, value);
        else if (key == "adam_beta2") cfg.train.adam_beta2 = to_double(key, value);
        else if (key == "adam_eps") cfg.train.adam_eps = to_double(key, value);
        else if (key == "conditioning_mode") cfg.train.conditioning_mode = parse_conditioning_mode(value);
        else if (key == "seed") cfg.train.seed = to_uint(key, value);
        else if (key == "T") cfg.schedule.steps = to_uint(key, value);
        else if (key == "beta_start") cfg.schedule.beta_start = to_double(key, value);
        else if (key == "beta_end") cfg.schedule.beta_end = to_double(key, value);
        else if (key == "base_channels") cfg.network.base_channels = to_uint(key, value);
        else if (key == "channel_multipliers") {
            cfg.network.channel_multipliers.clear();
            std::istringstream parts(value);
            std::string part;
            while (std::getline(parts, part, ',')) cfg.network.channel_multipliers.push_back(to_uint(key, trim(part)));
        } else if (key == "blocks_per_level") cfg.network.blocks_per_level = to_uint(key, value);
        else if (key == "dropout_rate") cfg.network.dropout_rate = to_double(key, value);
        else if (key == "time_embed_dim") cfg.network.time_embed_dim = to_uint(key, value);
        else if (key == "checkpoint_interval") cfg.train.checkpoint_interval = to_uint(key, value);
        else if (key == "random_mask_placement") {
            if (value == "unconstrained") cfg.train.random_mask_placement = RandomMaskPlacement::unconstrained;
            else if (value == "outside_pathology") cfg.train.random_mask_placement = RandomMaskPlacement::outside_pathology;
            else throw ConfigError("random_mask_placement must be unconstrained or outside_pathology");
        } else
            throw ConfigError("unknown config key \"" + key + "\" on line " + std::to_string(line_no));
    }
    cfg.train.validate();
    try {
        cfg.network.validate();
        NoiseSchedule check(cfg.schedule);
    } catch (const std::invalid_argument &e) {
        throw ConfigError(e.what());
    }
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return parse_run_config(ss.str());
    } catch (const ConfigError &e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

std::string format_run_config(const RunConfig &cfg) {
    std::string out;
    for (const auto &[k, v] : key_values(cfg)) out += k + " = " + v + "\n";
    return out;
}

std::vector<std::string> differing_keys(const RunConfig &a, const RunConfig &b) {
    const auto ka = key_values(a), kb = key_values(b);
    std::vector<std::string> diff;
    for (std::size_t i = 0; i < ka.size(); ++i)
        if (ka[i].second != kb[i].second) diff.push_back(ka[i].first);
    return diff;
}

SubbandTensor build_condition(const TrainingExample &ex, ConditioningMode mode, const VolumeDistribution *dist, Rng &rng,
                              RandomMaskPlacement placement) {
    if (mode == ConditioningMode::fixed_pathology) return dwt3(apply_mask(ex.image, ex.pathology_mask));
    if (!dist) throw std::invalid_argument("random_connected conditioning needs a lesion volume distribution");
    const std::size_t target = std::min(sample_target_volume(*dist, rng), ex.image.size());
    Mask m;
    if (placement == RandomMaskPlacement::outside_pathology) {
        const Mask allowed = ex.pathology_mask.inverted();
        m = grow_connected_mask_within(allowed, std::min(target, allowed.count()), rng);
    } else {
        m = grow_connected_mask(ex.image.dims(), target, rng);
    }
    return dwt3(apply_mask(ex.image, m));
}

WaveletLoss loss_wavelet_mse(std::span<const double> pred, std::span<const float> target) {
    if (pred.size() != target.size() || pred.empty()) throw std::invalid_argument("loss: prediction and target shapes differ");
    const double k = static_cast<double>(pred.size());
    WaveletLoss out;
    out.grad.resize(pred.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double diff = pred[i] - static_cast<double>(target[i]);
        sum += diff * diff;
        out.grad[i] = 2.0 / k * diff;
    }
    out.value = sum / k;
    return out;
}

WaveletLoss loss_wavelet_mse(const SubbandTensor &pred, const SubbandTensor &target) {
    if (!pred.same_shape(target)) throw std::invalid_argument("loss: prediction and target shapes differ");
    std::vector<double> p(pred.values().begin(), pred.values().end());
    return loss_wavelet_mse(p, target.values());
}

void adamw_step(std::span<double> params, std::span<const double> grads, OptimizerState &state, const AdamWHyper &hp) {
    if (params.size() != grads.size() || state.m.size() != params.size() || state.v.size() != params.size())
        throw std::invalid_argument("adamw: parameter, gradient and moment sizes differ");
    for (std::size_t i = 0; i < grads.size(); ++i)
        if (!std::isfinite(grads[i])) throw TrainingError("non-finite gradient at parameter index " + std::to_string(i));

    state.step += 1;
    const double k = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(hp.beta1, k);
    const double bc2 = 1.0 - std::pow(hp.beta2, k);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        state.m[i] = hp.beta1 * state.m[i] + (1.0 - hp.beta1) * g;
        state.v[i] = hp.beta2 * state.v[i] + (1.0 - hp.beta2) * g * g;
        const double m_hat = state.m[i] / bc1;
        const double v_hat = state.v[i] / bc2;
        params[i] -= hp.learning_rate * (m_hat / (std::sqrt(v_hat) + hp.eps) + hp.weight_decay * params[i]);
    }
}

std::size_t sample_timestep(Rng &rng, std::size_t steps) { return rng.between(1, steps); }

TrainResult train(const std::vector<TrainingExample> &dataset, const RunConfig &cfg, const VolumeDistribution *dist,
                  const TrainHooks &hooks) {
    validate_dataset(dataset);
    cfg.train.validate();
    if (cfg.train.conditioning_mode == ConditioningMode::random_connected && (!dist || dist->samples.empty()))
        throw std::invalid_argument("random_connected conditioning needs a lesion volume distribution");

    const NoiseSchedule sched(cfg.schedule);
    const Denoiser net(cfg.network);
    cfg.network.check_band_dims(dataset.front().image.dims().halved());

    std::vector<SubbandTensor> targets;
    targets.reserve(dataset.size());
    for (const auto &ex : dataset) targets.push_back(dwt3(ex.image));

    Rng rng(cfg.train.seed);
    Rng init_rng(derive_seed(cfg.train.seed, 0x1417));
    DenoiserParams params = net.init_params(init_rng);
    OptimizerState opt = OptimizerState::zeros(params.values.size());
    const AdamWHyper hp{cfg.train.learning_rate, cfg.train.adam_beta1, cfg.train.adam_beta2, cfg.train.adam_eps, cfg.train.weight_decay};

    const auto snapshot = [&](std::size_t iteration) {
        return Checkpoint{cfg.network, cfg.schedule, params.values, opt, iteration};
    };

    TrainResult result;
    result.losses.reserve(cfg.train.iterations);
    const std::size_t batch = cfg.train.batch_size;
    struct Draw {
        std::size_t case_index;
        std::uint64_t seed;
    };
    std::vector<Draw> draws(batch);
    std::vector<double> losses(batch);
    std::vector<std::vector<double>> grads(batch);

    for (std::size_t it = 1; it <= cfg.train.iterations; ++it) {
        for (auto &d : draws) {
            d.case_index = rng.index(dataset.size());
            d.seed = rng.engine()();
        }
        if (hooks.on_batch) {
            std::vector<std::size_t> cases;
            for (const auto &d : draws) cases.push_back(d.case_index);
            hooks.on_batch(it, cases);
        }
        parallel_for(batch, [&](std::size_t b) {
            Rng ex_rng(draws[b].seed);
            const TrainingExample &ex = dataset[draws[b].case_index];
            const SubbandTensor &x0 = targets[draws[b].case_index];
            const std::size_t t = sample_timestep(ex_rng, sched.steps());
            SubbandTensor eps(x0.band_dims());
            for (auto &v : eps.values()) v = static_cast<float>(ex_rng.normal());
            const SubbandTensor x_t = forward_noise(x0, t, eps, sched);
            const SubbandTensor c = build_condition(ex, cfg.train.conditioning_mode, dist, ex_rng, cfg.train.random_mask_placement);

            ActivationCache cache;
            const nn::Tensor pred = net.forward(params, x_t, c, t, Mode::train, &ex_rng, &cache);
            WaveletLoss loss = loss_wavelet_mse(pred.data, x0.values());
            nn::Tensor g(pred.channels, pred.dims);
            g.data = std::move(loss.grad);
            losses[b] = loss.value;
            grads[b] = net.backward(params, cache, g);
        });

        double mean_loss = 0.0;
        for (double l : losses) mean_loss += l;
        mean_loss /= static_cast<double>(batch);
        if (!std::isfinite(mean_loss)) throw TrainingError("non-finite loss at iteration " + std::to_string(it));

        std::vector<double> total(params.values.size(), 0.0);
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t i = 0; i < total.size(); ++i) total[i] += grads[b][i];
        const double inv = 1.0 / static_cast<double>(batch);
        for (auto &g : total) g *= inv;

        adamw_step(params.values, total, opt, hp);
        params.touch();

        result.losses.push_back(mean_loss);
        if (hooks.on_loss) hooks.on_loss(it, mean_loss);
        if (hooks.on_checkpoint && cfg.train.checkpoint_interval > 0 && it % cfg.train.checkpoint_interval == 0 &&
            it != cfg.train.iterations)
            hooks.on_checkpoint(snapshot(it));
    }
    result.checkpoint = snapshot(cfg.train.iterations);
    if (hooks.on_checkpoint) hooks.on_checkpoint(result.checkpoint);
    return result;
}

void write_loss_csv(std::span<const double> losses, const std::filesystem::path &path) {
    std::string text = "iteration,loss\n";
    char buf[64];
    for (std::size_t i = 0; i < losses.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g\n", i + 1, losses[i]);
        text += buf;
    }
    write_file_atomic(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t *>(text.data()), text.size()));
}

} // namespace powdr
