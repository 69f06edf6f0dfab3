#include <doctest.h>

#include <cmath>

#include "powdr/metrics.hpp"
#include "test_util.hpp"

using namespace powdr;

namespace {

double kl_formula(const std::vector<double> &p, const std::vector<double> &q) {
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += p[i] * std::log(p[i] / q[i]);
    return s;
}

Volume constant(Dims d, float c) { return Volume(d, std::vector<float>(d.count(), c)); }

} // namespace

TEST_CASE("cosine similarity") {
    Rng rng(81);
    const Volume a = test::random_volume({4, 4, 4}, rng, -1, 1);
    const Volume b = test::random_volume({4, 4, 4}, rng, -1, 1);
    CHECK(cosine_similarity(a, a) == doctest::Approx(1.0).epsilon(1e-9));
    Volume neg(a.dims()), scaled(a.dims());
    for (std::size_t i = 0; i < a.size(); ++i) {
        neg[i] = -a[i];
        scaled[i] = 3.5f * a[i];
    }
    CHECK(cosine_similarity(a, neg) == doctest::Approx(-1.0).epsilon(1e-9));
    CHECK(cosine_similarity(scaled, b) == doctest::Approx(cosine_similarity(a, b)).epsilon(1e-6));
    CHECK(cosine_similarity(a, b) == doctest::Approx(cosine_similarity(b, a)).epsilon(1e-12));

    Volume e0({2, 2, 2}), e1({2, 2, 2});
    e0[0] = 1.0f;
    e1[1] = 1.0f;
    CHECK(cosine_similarity(e0, e1) == 0.0);
    CHECK_THROWS_WITH(cosine_similarity(e0, Volume({2, 2, 2})), doctest::Contains("zero vector"));
    CHECK_THROWS_AS(cosine_similarity(e0, Volume({2, 2, 4})), std::invalid_argument);

    for (int k = 0; k < 50; ++k) {
        const Volume u = test::random_volume({3, 3, 3}, rng, -1, 1), w = test::random_volume({3, 3, 3}, rng, -1, 1);
        const double c = cosine_similarity(u, w);
        CHECK(c >= -1.0);
        CHECK(c <= 1.0);
    }
}

TEST_CASE("KL divergence hand cases and asymmetry") {
    const std::vector<double> p{0.5, 0.5}, q{0.25, 0.75};
    const double forward = kl_formula(p, q), reverse = kl_formula(q, p);
    CHECK(forward == doctest::Approx(0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0)));
    CHECK(kl_divergence(p, q) == doctest::Approx(0.1438).epsilon(1e-4 / 0.1438));
    CHECK(kl_divergence(p, q) == doctest::Approx(forward).epsilon(1e-15));
    CHECK(kl_divergence(q, p) == doctest::Approx(reverse).epsilon(1e-15));
    CHECK(kl_divergence(q, p) == doctest::Approx(0.1308).epsilon(1e-3));
    CHECK(std::abs(kl_divergence(p, q) - kl_divergence(q, p)) > 0.01);
}

TEST_CASE("histogram KL on volumes") {
    Rng rng(82);
    const Volume a = test::random_volume({8, 8, 8}, rng);
    CHECK(histogram_kl(a, a) == doctest::Approx(0.0).epsilon(1e-9));
    for (int k = 0; k < 30; ++k) {
        const Volume u = test::random_volume({6, 6, 6}, rng, 0, 1 + k);
        const Volume w = test::random_volume({6, 6, 6}, rng, -k, 1);
        CHECK(histogram_kl(u, w) >= 0.0);
    }

    // Two-bin check through the full path: half zeros/half ones vs a quarter zeros.
    Volume x({2, 2, 2}), y({2, 2, 2});
    for (std::size_t i = 0; i < 8; ++i) {
        x[i] = i < 4 ? 0.0f : 1.0f;
        y[i] = i < 2 ? 0.0f : 1.0f;
    }
    CHECK(histogram_kl(x.values(), y.values(), 2) == doctest::Approx(0.1438).epsilon(1e-3));

    const auto h = histogram(x.values(), 0.0, 1.0, 4);
    CHECK(h[0] == doctest::Approx(0.5));
    CHECK(h[3] == doctest::Approx(0.5));
    CHECK(h[1] > 0.0);
}

TEST_CASE("SSIM closed form on constant volumes") {
    const Volume a = constant({8, 8, 8}, 0.4f), b = constant({8, 8, 8}, 0.6f);
    const double c1 = 0.01 * 0.01;
    const double m1 = static_cast<double>(0.4f), m2 = static_cast<double>(0.6f);
    const double expected = (2.0 * m1 * m2 + c1) / (m1 * m1 + m2 * m2 + c1);
    CHECK(std::abs(ssim(a, b) - expected) < 1e-9);
}

TEST_CASE("MS-SSIM identity, symmetry, inversion and regions") {
    Rng rng(83);
    const Dims d{16, 16, 16};
    const Volume a = test::random_volume(d, rng);
    Volume inv(d), noisy(d);
    for (std::size_t i = 0; i < a.size(); ++i) {
        inv[i] = 1.0f - a[i];
        noisy[i] = a[i] + static_cast<float>(0.1 * rng.normal());
    }
    Mask m(d);
    for (std::size_t i = 0; i < 700; ++i) m.set(i * 5, true);

    for (Region r : {Region::all, Region::inside, Region::outside}) {
        CHECK(ms_ssim(a, a, &m, r) == doctest::Approx(1.0).epsilon(1e-6));
        CHECK(ms_ssim(a, noisy, &m, r) == doctest::Approx(ms_ssim(noisy, a, &m, r)).epsilon(1e-6));
    }
    CHECK(ms_ssim(a, inv) < 1.0);
    CHECK(ms_ssim(a, noisy) < 1.0);
    CHECK(ms_ssim(a, noisy) > ms_ssim(a, inv));
    CHECK_THROWS_AS(ms_ssim(a, a, &static_cast<const Mask &>(Mask(d)), Region::inside), std::invalid_argument);
    CHECK_THROWS_AS(ms_ssim(a, a, nullptr, Region::inside), std::invalid_argument);
    CHECK_THROWS_AS(ms_ssim(test::random_volume({8, 8, 8}, rng), test::random_volume({8, 8, 8}, rng)), std::invalid_argument);

    const auto w = ms_ssim_weights();
    CHECK(w[0] + w[1] + w[2] == doctest::Approx(1.0));
    CHECK(w[1] / w[0] == doctest::Approx(0.2856 / 0.0448));
}

TEST_CASE("diversity report") {
    Rng rng(84);
    const Dims d{4, 4, 4};
    const Volume v = test::random_volume(d, rng, 0.1, 1.0);

    const std::vector<Volume> same(5, v);
    const DiversityReport r = diversity_report(same);
    CHECK(r.pair_count == 10);
    CHECK(r.cosine.mean == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(r.kl.mean == doctest::Approx(0.0).epsilon(1e-9));
    for (float s : r.voxelwise_std.values()) CHECK(s == 0.0f);
    CHECK(r.voxelwise_mean == v);

    Volume neg(d);
    for (std::size_t i = 0; i < v.size(); ++i) neg[i] = -v[i];
    CHECK(diversity_report(std::vector<Volume>{v, neg}).cosine.mean == doctest::Approx(-1.0).epsilon(1e-9));

    std::vector<Volume> twenty;
    for (int i = 0; i < 20; ++i) twenty.push_back(test::random_volume(d, rng));
    Mask m(d);
    m.set(0, true);
    const DiversityReport big = diversity_report(twenty, &m);
    CHECK(big.pair_count == 190);
    CHECK(big.pairs.size() == 190);
    REQUIRE(big.cosine_outside.has_value());
    CHECK(big.pairs[0].cosine_outside.has_value());

    // Population std oracle for one voxel.
    double mean = 0.0;
    for (const auto &s : twenty) mean += s[7];
    mean /= 20.0;
    double var = 0.0;
    for (const auto &s : twenty) var += (s[7] - mean) * (s[7] - mean);
    CHECK(big.voxelwise_std[7] == doctest::Approx(std::sqrt(var / 20.0)).epsilon(1e-6));

    CHECK_THROWS_AS(diversity_report(std::vector<Volume>{v}), std::invalid_argument);
}

TEST_CASE("KS statistic") {
    const std::vector<double> a{1, 2, 3, 4}, b{3, 4, 5, 6};
    CHECK(ks_statistic(a, b) == doctest::Approx(0.5));
    CHECK(ks_statistic(a, a) == 0.0);
    CHECK(ks_statistic(std::vector<double>{1, 1, 1}, std::vector<double>{2, 2}) == 1.0);
    // Brute-force oracle over every sample point.
    Rng rng(85);
    std::vector<double> x(37), y(53);
    for (auto &v : x) v = std::round(rng.uniform(0, 20));
    for (auto &v : y) v = std::round(rng.uniform(3, 25));
    std::vector<double> points = x;
    points.insert(points.end(), y.begin(), y.end());
    double brute = 0.0;
    for (double q : points) {
        double fx = 0, fy = 0;
        for (double v : x) fx += v <= q;
        for (double v : y) fy += v <= q;
        brute = std::max(brute, std::abs(fx / x.size() - fy / y.size()));
    }
    CHECK(ks_statistic(x, y) == doctest::Approx(brute).epsilon(1e-12));
}
