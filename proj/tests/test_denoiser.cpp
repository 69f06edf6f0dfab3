#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "powdr/denoiser.hpp"
#include "test_util.hpp"

using namespace powdr;

namespace {

std::size_t conv_params(std::size_t cin, std::size_t cout) { return cin * cout * 27 + cout; }

// Layer table by hand: time MLP, stem, per-level resblocks, down/up convs, head.
std::size_t hand_param_count(const DenoiserConfig &c) {
    const std::size_t e = c.time_embed_dim;
    std::size_t n = 2 * (e * e + e);
    n += conv_params(16, c.channels_at(0));
    const auto block = [&](std::size_t ch) { return 2 * conv_params(ch, ch) + ch * e + ch; };
    for (std::size_t l = 0; l < c.levels(); ++l) {
        if (l > 0) n += conv_params(c.channels_at(l - 1), c.channels_at(l));
        n += c.blocks_per_level * block(c.channels_at(l));
    }
    for (std::size_t l = 0; l + 1 < c.levels(); ++l) n += conv_params(c.channels_at(l + 1), c.channels_at(l)) + c.blocks_per_level * block(c.channels_at(l));
    return n + conv_params(c.channels_at(0), 8);
}

DenoiserParams random_params(const Denoiser &net, Rng &rng, double scale = 0.2) {
    DenoiserParams p;
    p.values.resize(net.param_count());
    for (auto &v : p.values) v = rng.uniform(-scale, scale);
    return p;
}

double probe_loss(const nn::Tensor &out, const nn::Tensor &probe) {
    double s = 0.0;
    for (std::size_t i = 0; i < out.data.size(); ++i) s += out.data[i] * probe.data[i];
    return s;
}

SubbandTensor shift(const SubbandTensor &s, std::size_t dx, std::size_t dy, std::size_t dz) {
    const Dims d = s.band_dims();
    SubbandTensor out(d);
    for (std::size_t c = 0; c < kSubbands; ++c)
        for (std::size_t z = 0; z < d.nz; ++z)
            for (std::size_t y = 0; y < d.ny; ++y)
                for (std::size_t x = 0; x < d.nx; ++x)
                    out.channel(c)[d.index((x + dx) % d.nx, (y + dy) % d.ny, (z + dz) % d.nz)] = s.channel(c)[d.index(x, y, z)];
    return out;
}

} // namespace

TEST_CASE("desk config shapes and parameter count") {
    const DenoiserConfig cfg;
    const Denoiser net(cfg);
    CHECK(net.param_count() == hand_param_count(cfg));
    CHECK(net.param_count() == 36104);
    CHECK(Denoiser(full_scale_config()).param_count() == hand_param_count(full_scale_config()));

    Rng rng(41);
    const DenoiserParams p = net.init_params(rng);
    const SubbandTensor x = test::random_subbands({8, 8, 8}, rng), c = test::random_subbands({8, 8, 8}, rng);
    const nn::Tensor out = net.forward(p, x, c, 10, Mode::eval, nullptr, nullptr);
    CHECK(out.channels == 8);
    CHECK(out.dims == Dims{8, 8, 8});

    // The parameter count does not depend on the input grid.
    const SubbandTensor x4 = test::random_subbands({4, 6, 2}, rng), c4 = test::random_subbands({4, 6, 2}, rng);
    CHECK(net.forward(p, x4, c4, 3, Mode::eval, nullptr, nullptr).dims == Dims{4, 6, 2});
    CHECK_THROWS_AS(net.forward(p, test::random_subbands({3, 4, 4}, rng), test::random_subbands({3, 4, 4}, rng), 3, Mode::eval, nullptr, nullptr),
                    std::invalid_argument);
    CHECK_THROWS_AS(net.forward(p, x, x4, 3, Mode::eval, nullptr, nullptr), std::invalid_argument);
}

TEST_CASE("initialization: deterministic, zero head, zero biases") {
    const Denoiser net(DenoiserConfig{});
    Rng a(42), b(42);
    const DenoiserParams pa = net.init_params(a), pb = net.init_params(b);
    CHECK(pa.values == pb.values);
    for (double v : pa.slice(net.layout().at("head.weight"))) CHECK(v == 0.0);
    for (double v : pa.slice(net.layout().at("head.bias"))) CHECK(v == 0.0);
    for (double v : pa.slice(net.layout().at("stem.bias"))) CHECK(v == 0.0);
    const auto stem = pa.slice(net.layout().at("stem.weight"));
    const double bound = 1.0 / std::sqrt(16.0 * 27.0);
    CHECK(std::all_of(stem.begin(), stem.end(), [&](double v) { return std::abs(v) <= bound; }));
    CHECK(std::any_of(stem.begin(), stem.end(), [](double v) { return v != 0.0; }));

    // Zero-initialized head means the fresh network predicts exactly zero.
    Rng rng(43);
    const auto x = test::random_subbands({4, 4, 4}, rng), c = test::random_subbands({4, 4, 4}, rng);
    for (double v : net.forward(pa, x, c, 500, Mode::eval, nullptr, nullptr).data) CHECK(v == 0.0);
}

TEST_CASE("zero parameters give zero output; eval is deterministic") {
    const Denoiser net(DenoiserConfig{});
    DenoiserParams zero{std::vector<double>(net.param_count(), 0.0), 0};
    Rng rng(44);
    const auto x = test::random_subbands({4, 4, 4}, rng), c = test::random_subbands({4, 4, 4}, rng);
    for (double v : net.forward(zero, x, c, 7, Mode::eval, nullptr, nullptr).data) CHECK(v == 0.0);

    const DenoiserParams p = random_params(net, rng);
    const auto o1 = net.forward(p, x, c, 7, Mode::eval, nullptr, nullptr);
    const auto o2 = net.forward(p, x, c, 7, Mode::eval, nullptr, nullptr);
    CHECK(o1.data == o2.data);
    CHECK(net.predict(p, x, c, 7).values().size() == x.size());
}

TEST_CASE("forward and backward contracts") {
    const Denoiser net(DenoiserConfig{});
    Rng rng(45);
    DenoiserParams p = random_params(net, rng);
    const auto x = test::random_subbands({4, 4, 4}, rng), c = test::random_subbands({4, 4, 4}, rng);
    ActivationCache cache;
    CHECK_THROWS_AS(net.forward(p, x, c, 5, Mode::eval, nullptr, &cache), ContractError);
    CHECK_THROWS_AS(net.forward(p, x, c, 5, Mode::train, nullptr, &cache), ContractError);

    const nn::Tensor out = net.forward(p, x, c, 5, Mode::train, &rng, &cache);
    nn::Tensor zero_grad(out.channels, out.dims);
    for (double g : net.backward(p, cache, zero_grad)) CHECK(g == 0.0);

    p.touch();
    CHECK_THROWS_AS(net.backward(p, cache, zero_grad), ContractError);
    ActivationCache empty;
    CHECK_THROWS_AS(net.backward(p, empty, zero_grad), ContractError);
}

TEST_CASE("composed network gradient matches central differences on 200 parameters") {
    const Denoiser net(DenoiserConfig{});
    Rng rng(46);
    DenoiserParams p = random_params(net, rng);
    const auto x = test::random_subbands({4, 4, 4}, rng), c = test::random_subbands({4, 4, 4}, rng);
    const std::size_t t = 321;
    const std::uint64_t dropout_seed = 99;

    nn::Tensor probe(8, {4, 4, 4});
    for (auto &v : probe.data) v = rng.uniform(-1, 1);
    const auto loss = [&] {
        Rng drop(dropout_seed);
        return probe_loss(net.forward(p, x, c, t, Mode::train, &drop, nullptr), probe);
    };

    Rng drop(dropout_seed);
    ActivationCache cache;
    (void)net.forward(p, x, c, t, Mode::train, &drop, &cache);
    const std::vector<double> grad = net.backward(p, cache, probe);

    // Every layout entry gets at least one sample; the rest are uniform over all parameters.
    std::vector<std::size_t> picks;
    for (const auto &e : net.layout().entries()) picks.push_back(e.offset + rng.index(e.count));
    while (picks.size() < 200) picks.push_back(rng.index(net.param_count()));

    const double h = 1e-3;
    double worst = 0.0;
    for (std::size_t i : picks) {
        const double keep = p.values[i];
        p.values[i] = keep + h;
        const double up = loss();
        p.values[i] = keep - h;
        const double down = loss();
        p.values[i] = keep;
        const double numeric = (up - down) / (2.0 * h);
        const double rel = std::abs(grad[i] - numeric) / std::max({std::abs(grad[i]), std::abs(numeric), 1e-6});
        worst = std::max(worst, rel);
    }
    CHECK(picks.size() >= 200);
    CHECK(worst < 1e-3);
}

TEST_CASE("conv path is translation equivariant under periodic padding") {
    SUBCASE("single level, one-voxel shift") {
        DenoiserConfig cfg;
        cfg.channel_multipliers = {1};
        cfg.periodic_padding = true;
        const Denoiser net(cfg);
        Rng rng(47);
        const DenoiserParams p = random_params(net, rng);
        const auto x = test::random_subbands({4, 6, 4}, rng), c = test::random_subbands({4, 6, 4}, rng);
        const SubbandTensor a = shift(net.predict(p, x, c, 9), 1, 0, 0);
        const SubbandTensor b = net.predict(p, shift(x, 1, 0, 0), shift(c, 1, 0, 0), 9);
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-5));
    }
    SUBCASE("two levels, shift by the downsampling factor") {
        DenoiserConfig cfg;
        cfg.periodic_padding = true;
        const Denoiser net(cfg);
        Rng rng(48);
        const DenoiserParams p = random_params(net, rng);
        const auto x = test::random_subbands({4, 4, 4}, rng), c = test::random_subbands({4, 4, 4}, rng);
        const SubbandTensor a = shift(net.predict(p, x, c, 9), 0, 2, 2);
        const SubbandTensor b = net.predict(p, shift(x, 0, 2, 2), shift(c, 0, 2, 2), 9);
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-5));
    }
}

TEST_CASE("train mode with zero dropout equals eval mode") {
    DenoiserConfig cfg;
    cfg.dropout_rate = 0.0;
    const Denoiser net(cfg);
    Rng rng(49);
    const DenoiserParams p = random_params(net, rng);
    const auto x = test::random_subbands({4, 4, 4}, rng), c = test::random_subbands({4, 4, 4}, rng);
    Rng drop(1);
    CHECK(net.forward(p, x, c, 4, Mode::train, &drop, nullptr).data == net.forward(p, x, c, 4, Mode::eval, nullptr, nullptr).data);
}
