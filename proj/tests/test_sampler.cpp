#include <doctest.h>

#include <cmath>

#include "powdr/sampler.hpp"
#include "test_util.hpp"

using namespace powdr;

namespace {

Checkpoint zero_checkpoint(std::size_t steps) {
    DenoiserConfig net;
    net.base_channels = 4;
    net.time_embed_dim = 8;
    return Checkpoint{net, ScheduleParams{steps, 1e-4, 0.02}, std::vector<double>(Denoiser(net).param_count(), 0.0), std::nullopt, 0};
}

Checkpoint random_checkpoint(std::size_t steps, std::uint64_t seed) {
    Checkpoint ck = zero_checkpoint(steps);
    Rng rng(seed);
    for (auto &v : ck.params) v = rng.uniform(-0.1, 0.1);
    return ck;
}

SampleRequest request(std::size_t steps, std::uint64_t seed, std::size_t repeats) {
    Rng rng(71);
    SampleRequest req;
    req.condition_image = test::random_volume({8, 8, 8}, rng);
    req.condition_mask = Mask({8, 8, 8});
    for (std::size_t i = 100; i < 140; ++i) req.condition_mask.set(i, true);
    req.steps = steps;
    req.seed = seed;
    req.repeats = repeats;
    return req;
}

} // namespace

TEST_CASE("posterior coefficients on the T = 2 schedule") {
    const NoiseSchedule s = linear_schedule(2, 0.1, 0.2);
    const PosteriorCoefficients c2 = posterior_coefficients(s, 2);
    CHECK(c2.pred_weight == doctest::Approx(std::sqrt(0.9) * 0.2 / 0.28).epsilon(1e-14));
    CHECK(c2.xt_weight == doctest::Approx(std::sqrt(0.8) * 0.1 / 0.28).epsilon(1e-14));
    CHECK(c2.variance == doctest::Approx(0.2 * 0.1 / 0.28).epsilon(1e-14));

    const PosteriorCoefficients c1 = posterior_coefficients(s, 1);
    CHECK(c1.variance == 0.0);
    CHECK(c1.xt_weight == 0.0);
    CHECK(c1.pred_weight == doctest::Approx(1.0).epsilon(1e-15));
    CHECK_THROWS_AS(posterior_coefficients(s, 0), std::out_of_range);
    CHECK_THROWS_AS(posterior_coefficients(s, 3), std::out_of_range);
}

TEST_CASE("posterior variance bounds and fixed-point algebra") {
    const NoiseSchedule s = linear_schedule(1000, 1e-4, 0.02);
    for (std::size_t t = 1; t <= 1000; ++t) {
        const PosteriorCoefficients c = posterior_coefficients(s, t);
        CHECK(c.variance >= 0.0);
        CHECK(c.variance <= s.beta(t));
        CHECK(c.pred_weight >= 0.0);
        CHECK(c.xt_weight >= 0.0);
    }
    // The hypothetical alpha_bar_{t-1} = alpha_bar_t means alpha_t = 1 and beta_t = 0: weights (0, 1), mu = x_t.
    const double ab = 0.5, beta = 0.0, alpha = 1.0;
    const double w_pred = std::sqrt(ab) * beta / (1.0 - ab), w_xt = std::sqrt(alpha) * (1.0 - ab) / (1.0 - ab);
    CHECK(w_pred + w_xt == 1.0);
}

TEST_CASE("reverse step at t = 1 is deterministic") {
    const NoiseSchedule s = linear_schedule(10, 1e-4, 0.02);
    Rng rng(72);
    const SubbandTensor x = test::random_subbands({2, 2, 2}, rng), pred = test::random_subbands({2, 2, 2}, rng);
    Rng r1(1), r2(2);
    const SubbandTensor a = reverse_step(x, pred, 1, s, r1), b = reverse_step(x, pred, 1, s, r2);
    CHECK(a == b);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(pred[i]).epsilon(1e-6));
    CHECK_THROWS_AS(reverse_step(x, pred, 0, s, r1), std::out_of_range);
    CHECK_THROWS_AS(reverse_step(x, pred, 11, s, r1), std::out_of_range);
}

TEST_CASE("oracle denoiser drives the chain to the true signal") {
    const NoiseSchedule s = linear_schedule(1000, 1e-4, 0.02);
    Rng rng(73);
    const SubbandTensor truth = test::random_subbands({4, 4, 4}, rng);
    const X0Predictor oracle = [&](const SubbandTensor &, const SubbandTensor &, std::size_t) { return truth; };
    Rng chain(74);
    const SubbandTensor out = run_reverse_chain(oracle, SubbandTensor({4, 4, 4}), s, chain);
    // The last stochastic step (t = 2) leaves at most sigma_2 noise, which the t = 1 step then removes entirely.
    const double sigma_floor = std::sqrt(posterior_coefficients(s, 2).variance);
    double worst = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) worst = std::max(worst, static_cast<double>(std::abs(out[i] - truth[i])));
    CHECK(worst < 5.0 * sigma_floor);
}

TEST_CASE("repeat seeds give distinct noise streams") {
    Rng a(repeat_seed(9, 0)), b(repeat_seed(9, 1));
    std::size_t equal = 0;
    for (int i = 0; i < 100; ++i) equal += a.normal() == b.normal();
    CHECK(equal == 0);
    CHECK(repeat_seed(9, 0) == repeat_seed(9, 0));
}

TEST_CASE("sampling: shapes, determinism, repeat independence and compositing") {
    const Checkpoint ck = random_checkpoint(20, 75);
    SampleRequest req = request(20, 5, 3);
    const std::vector<Volume> out = sample(ck, req);
    REQUIRE(out.size() == 3);
    CHECK(out[0].dims() == req.condition_image.dims());
    CHECK(out[0] != out[1]);
    CHECK(sample(ck, req) == out);
    CHECK(sample_repeat(ck, req, 2) == out[2]);

    req.hard_composite = true;
    for (const auto &v : sample(ck, req))
        for (std::size_t i = 0; i < v.size(); ++i)
            if (req.condition_mask[i]) CHECK(v[i] == req.condition_image[i]);
}

TEST_CASE("sampling contract errors") {
    const Checkpoint ck = zero_checkpoint(20);
    SampleRequest req = request(10, 1, 1);
    CHECK_THROWS_WITH_AS(sample(ck, req), doctest::Contains("T = 20"), ContractError);
    req.steps = 20;
    req.condition_mask = Mask({8, 8, 8});
    CHECK_THROWS_AS(sample(ck, req), std::invalid_argument);
    req.condition_mask = Mask({8, 8, 4}, true);
    CHECK_THROWS_AS(sample(ck, req), std::invalid_argument);
    req = request(20, 1, 0);
    CHECK_THROWS_AS(sample(ck, req), std::invalid_argument);
}
