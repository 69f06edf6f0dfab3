#include <doctest.h>

#include <cmath>
#include <fstream>

#include "powdr/phantom.hpp"
#include "powdr/trainer.hpp"
#include "test_util.hpp"

using namespace powdr;

namespace {

RunConfig tiny_config(std::size_t iterations, ConditioningMode mode = ConditioningMode::fixed_pathology) {
    RunConfig cfg;
    cfg.train.iterations = iterations;
    cfg.train.batch_size = 2;
    cfg.train.conditioning_mode = mode;
    cfg.train.seed = 5;
    cfg.schedule.steps = 50;
    cfg.network.base_channels = 4;
    cfg.network.time_embed_dim = 8;
    return cfg;
}

std::vector<TrainingExample> tiny_dataset(std::size_t n, std::uint64_t seed = 3) {
    PhantomSpec spec;
    spec.dims = {8, 8, 8};
    spec.n_cases = n;
    spec.lesion_volume_range = {4, 12};
    spec.seed = seed;
    std::vector<TrainingExample> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(generate_phantom(spec, i));
    return out;
}

// Wilson-Hilferty upper quantile of chi-square with df degrees of freedom at standard normal quantile z.
double chi2_upper(double df, double z) {
    const double a = 2.0 / (9.0 * df);
    return df * std::pow(1.0 - a + z * std::sqrt(a), 3.0);
}

} // namespace

TEST_CASE("config parsing") {
    const RunConfig cfg = parse_run_config("# desk run\niterations = 10\nconditioning_mode = random_connected  # strategy B\n"
                                           "channel_multipliers = 1, 2\nT = 100\nlearning_rate = 1e-5\n");
    CHECK(cfg.train.iterations == 10);
    CHECK(cfg.train.conditioning_mode == ConditioningMode::random_connected);
    CHECK(cfg.network.channel_multipliers == std::vector<std::size_t>{1, 2});
    CHECK(cfg.schedule.steps == 100);
    CHECK(cfg.train.learning_rate == 1e-5);
    CHECK(parse_run_config(format_run_config(cfg)) == cfg);

    CHECK_THROWS_WITH_AS(parse_run_config("iterations = 5\nbogus_key = 1\n"), doctest::Contains("bogus_key"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("iterations = 5\niterations = 6\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("iterations = -5\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("learning_rate = fast\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("conditioning_mode = sometimes\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("time_embed_dim = 7\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("beta_start = 0.5\nbeta_end = 0.1\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("no equals sign\n"), ConfigError);

    RunConfig other = cfg;
    other.train.conditioning_mode = ConditioningMode::fixed_pathology;
    other.train.seed = 9;
    CHECK(differing_keys(cfg, other) == std::vector<std::string>{"conditioning_mode", "seed"});
}

TEST_CASE("wavelet MSE loss and gradient") {
    const std::vector<double> same{1.0, -2.0, 0.5};
    const std::vector<float> same_f{1.0f, -2.0f, 0.5f};
    const WaveletLoss zero = loss_wavelet_mse(same, same_f);
    CHECK(zero.value == 0.0);
    for (double g : zero.grad) CHECK(g == 0.0);

    const std::vector<double> pred(64, 0.0);
    const std::vector<float> target(64, 2.0f);
    const WaveletLoss four = loss_wavelet_mse(pred, target);
    CHECK(four.value == doctest::Approx(4.0).epsilon(1e-15));
    for (double g : four.grad) CHECK(g == doctest::Approx(2.0 / 64.0 * -2.0));

    Rng rng(61);
    std::vector<double> p(40);
    std::vector<float> t(40);
    for (std::size_t i = 0; i < 40; ++i) {
        p[i] = rng.uniform(-3, 3);
        t[i] = static_cast<float>(rng.uniform(-3, 3));
    }
    double two_pass = 0.0;
    for (std::size_t i = 0; i < 40; ++i) two_pass += (p[i] - t[i]) * (p[i] - t[i]);
    CHECK(loss_wavelet_mse(p, t).value == doctest::Approx(two_pass / 40.0).epsilon(1e-12));
    CHECK_THROWS_AS(loss_wavelet_mse(std::vector<double>(3), std::vector<float>(4)), std::invalid_argument);
}

TEST_CASE("AdamW hand cases") {
    SUBCASE("pure decoupled decay") {
        std::vector<double> theta{1.0};
        OptimizerState st = OptimizerState::zeros(1);
        adamw_step(theta, std::vector<double>{0.0}, st, {0.1, 0.9, 0.999, 1e-8, 0.01});
        CHECK(theta[0] == doctest::Approx(0.999).epsilon(1e-15));
        CHECK(st.step == 1);
    }
    SUBCASE("first step with unit gradient") {
        const double theta0 = 0.7, lr = 1e-3, wd = 0.01, eps = 1e-8;
        std::vector<double> theta{theta0};
        OptimizerState st = OptimizerState::zeros(1);
        adamw_step(theta, std::vector<double>{1.0}, st, {lr, 0.9, 0.999, eps, wd});
        CHECK(theta[0] == doctest::Approx(theta0 - lr * (1.0 / (1.0 + eps)) - lr * wd * theta0).epsilon(1e-14));
    }
    SUBCASE("fixed point without gradient or decay") {
        std::vector<double> theta{0.3, -2.0};
        OptimizerState st = OptimizerState::zeros(2);
        for (int i = 0; i < 5; ++i) adamw_step(theta, std::vector<double>{0.0, 0.0}, st, {0.1, 0.9, 0.999, 1e-8, 0.0});
        CHECK(theta == std::vector<double>{0.3, -2.0});
    }
    SUBCASE("non-finite gradient aborts") {
        std::vector<double> theta{1.0};
        OptimizerState st = OptimizerState::zeros(1);
        CHECK_THROWS_AS(adamw_step(theta, std::vector<double>{NAN}, st, {}), TrainingError);
    }
    SUBCASE("convex quadratic decreases monotonically after warmup") {
        std::vector<double> theta{3.0, -2.0, 1.5};
        const std::vector<double> scale{1.0, 4.0, 0.5};
        OptimizerState st = OptimizerState::zeros(3);
        const auto f = [&] {
            double s = 0.0;
            for (std::size_t i = 0; i < 3; ++i) s += 0.5 * scale[i] * theta[i] * theta[i];
            return s;
        };
        const double start = f();
        double prev = start;
        for (int k = 1; k <= 100; ++k) {
            std::vector<double> g(3);
            for (std::size_t i = 0; i < 3; ++i) g[i] = scale[i] * theta[i];
            adamw_step(theta, g, st, {1e-2, 0.9, 0.999, 1e-8, 0.0});
            const double now = f();
            if (k > 10) CHECK(now < prev);
            prev = now;
        }
        CHECK(prev < start);
    }
}

TEST_CASE("timestep sampling is uniform over [1, T]") {
    Rng rng(62);
    const std::size_t T = 1000, n = 100000;
    std::vector<double> counts(T + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t t = sample_timestep(rng, T);
        REQUIRE(t >= 1);
        REQUIRE(t <= T);
        counts[t] += 1.0;
    }
    const double expected = static_cast<double>(n) / T;
    double chi2 = 0.0;
    for (std::size_t t = 1; t <= T; ++t) chi2 += (counts[t] - expected) * (counts[t] - expected) / expected;
    CHECK(chi2 < chi2_upper(T - 1, 3.0902)); // p > 0.001
}

TEST_CASE("build_condition") {
    Rng rng(63);
    TrainingExample ex{test::random_volume({8, 8, 8}, rng), Mask({8, 8, 8}, true)};
    CHECK(build_condition(ex, ConditioningMode::fixed_pathology, nullptr, rng) == dwt3(ex.image));

    TrainingExample blank{Volume({8, 8, 8}), Mask({8, 8, 8}, true)};
    const auto cond = build_condition(blank, ConditioningMode::fixed_pathology, nullptr, rng);
    for (float v : cond.values()) CHECK(v == 0.0f);

    const VolumeDistribution dist{{20, 40}, 0.1};
    Rng a(64), b(64);
    const auto ca = build_condition(ex, ConditioningMode::random_connected, &dist, a);
    CHECK(ca == build_condition(ex, ConditioningMode::random_connected, &dist, b));
    const Volume img = idwt3(ca);
    std::size_t nonzero = 0;
    for (float v : img.values()) nonzero += std::abs(v) > 1e-6f;
    CHECK(nonzero >= 18);
    CHECK(nonzero <= 44);
    CHECK_THROWS_AS(build_condition(ex, ConditioningMode::random_connected, nullptr, a), std::invalid_argument);

    // Masks placed outside the lesion never overlap it.
    TrainingExample half{test::random_volume({8, 8, 8}, rng), Mask({8, 8, 8})};
    for (std::size_t i = 0; i < 256; ++i) half.pathology_mask.set(i, true);
    for (int k = 0; k < 20; ++k) {
        const Volume c = idwt3(build_condition(half, ConditioningMode::random_connected, &dist, a, RandomMaskPlacement::outside_pathology));
        for (std::size_t i = 0; i < 256; ++i) CHECK(std::abs(c[i]) < 1e-6f);
    }
}

TEST_CASE("iteration-1 loss equals the zero-init baseline mean(x0^2)") {
    Rng rng(65);
    const Volume img = test::random_volume({8, 8, 8}, rng);
    const std::vector<TrainingExample> ds(3, TrainingExample{img, Mask({8, 8, 8}, true)});
    double baseline = 0.0;
    for (float v : img.values()) baseline += static_cast<double>(v) * v;
    baseline /= static_cast<double>(img.size());
    const TrainResult r = train(ds, tiny_config(1), nullptr);
    REQUIRE(r.losses.size() == 1);
    CHECK(std::abs(r.losses[0] - baseline) < 1e-6);
}

TEST_CASE("all-zero images keep zero loss") {
    const std::vector<TrainingExample> ds(2, TrainingExample{Volume({8, 8, 8}), Mask({8, 8, 8}, true)});
    const TrainResult r = train(ds, tiny_config(5), nullptr);
    for (double l : r.losses) CHECK(l == 0.0);
}

TEST_CASE("training is deterministic given the seed") {
    const auto ds = tiny_dataset(4);
    const VolumeDistribution dist{{6, 10}, 0.1};
    const RunConfig cfg = tiny_config(6, ConditioningMode::random_connected);
    const TrainResult a = train(ds, cfg, &dist), b = train(ds, cfg, &dist);
    CHECK(a.losses == b.losses);
    CHECK(a.checkpoint.params == b.checkpoint.params);
    CHECK(encode_checkpoint(a.checkpoint) == encode_checkpoint(b.checkpoint));

    RunConfig other = cfg;
    other.train.seed = 6;
    CHECK(train(ds, other, &dist).losses != a.losses);
    CHECK_THROWS_AS(train(ds, cfg, nullptr), std::invalid_argument);
}

TEST_CASE("checkpoint hooks and loss CSV") {
    const auto ds = tiny_dataset(2);
    RunConfig cfg = tiny_config(4);
    cfg.train.checkpoint_interval = 2;
    std::vector<std::uint64_t> seen;
    std::size_t losses = 0;
    TrainHooks hooks;
    hooks.on_checkpoint = [&](const Checkpoint &ck) { seen.push_back(ck.iteration); };
    hooks.on_loss = [&](std::size_t, double) { ++losses; };
    const TrainResult r = train(ds, cfg, nullptr, hooks);
    CHECK(seen == std::vector<std::uint64_t>{2, 4});
    CHECK(losses == 4);
    CHECK(r.checkpoint.optimizer->step == 4);

    test::TempDir dir("loss_csv");
    write_loss_csv(r.losses, dir / "loss.csv");
    std::ifstream in(dir / "loss.csv");
    std::string line;
    std::getline(in, line);
    CHECK(line == "iteration,loss");
    std::size_t rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 4);
}
