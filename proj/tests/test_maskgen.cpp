#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <queue>

#include "powdr/maskgen.hpp"
#include "test_util.hpp"

using namespace powdr;

namespace {

// Independent flood fill over face neighbours.
std::size_t reachable_from_first(const Mask &m) {
    const Dims d = m.dims();
    std::vector<std::uint8_t> seen(d.count(), 0);
    std::size_t start = d.count();
    for (std::size_t i = 0; i < d.count(); ++i)
        if (m[i]) {
            start = i;
            break;
        }
    if (start == d.count()) return 0;
    std::queue<std::size_t> q;
    q.push(start);
    seen[start] = 1;
    std::size_t n = 0;
    while (!q.empty()) {
        const std::size_t i = q.front();
        q.pop();
        ++n;
        const std::size_t x = i % d.nx, y = (i / d.nx) % d.ny, z = i / (d.nx * d.ny);
        const auto visit = [&](std::size_t j) {
            if (m[j] && !seen[j]) {
                seen[j] = 1;
                q.push(j);
            }
        };
        if (x > 0) visit(i - 1);
        if (x + 1 < d.nx) visit(i + 1);
        if (y > 0) visit(i - d.nx);
        if (y + 1 < d.ny) visit(i + d.nx);
        if (z > 0) visit(i - d.nx * d.ny);
        if (z + 1 < d.nz) visit(i + d.nx * d.ny);
    }
    return n;
}

} // namespace

TEST_CASE("check_6_connected small cases") {
    const Dims d{3, 3, 3};
    Mask diag(d);
    diag.set(d.index(0, 0, 0), true);
    diag.set(d.index(1, 1, 0), true);
    CHECK_FALSE(check_6_connected(diag));

    Mask corner(d);
    corner.set(d.index(0, 0, 0), true);
    corner.set(d.index(1, 1, 1), true);
    CHECK_FALSE(check_6_connected(corner));

    Mask tromino(d);
    tromino.set(d.index(0, 0, 0), true);
    tromino.set(d.index(1, 0, 0), true);
    tromino.set(d.index(1, 1, 0), true);
    CHECK(check_6_connected(tromino));

    CHECK_FALSE(check_6_connected(Mask(d)));
    CHECK(check_6_connected(Mask(d, true)));
}

TEST_CASE("grown masks are connected with exact counts") {
    Rng rng(51);
    const Dims d{16, 16, 16};
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t target = 1 + rng.index(400);
        const Mask m = grow_connected_mask(d, target, rng);
        CHECK(m.count() == target);
        CHECK(reachable_from_first(m) == target);
        CHECK(check_6_connected(m));
    }
}

TEST_CASE("growth base cases and errors") {
    Rng rng(52);
    const Dims d{4, 3, 2};
    CHECK(grow_connected_mask(d, 1, rng).count() == 1);
    CHECK(grow_connected_mask(d, d.count(), rng) == Mask(d, true));
    CHECK_THROWS_AS(grow_connected_mask(d, d.count() + 1, rng), std::invalid_argument);
    CHECK_THROWS_AS(grow_connected_mask(d, 0, rng), std::invalid_argument);

    Rng a(53), b(53);
    CHECK(grow_connected_mask({8, 8, 8}, 50, a) == grow_connected_mask({8, 8, 8}, 50, b));
}

TEST_CASE("growth within an allowed region stays inside it") {
    Rng rng(54);
    const Dims d{8, 8, 8};
    Mask allowed(d);
    for (std::size_t z = 0; z < 8; ++z)
        for (std::size_t y = 0; y < 8; ++y)
            for (std::size_t x = 0; x < 4; ++x) allowed.set(d.index(x, y, z), true);
    for (int i = 0; i < 50; ++i) {
        const Mask m = grow_connected_mask_within(allowed, 60, rng);
        CHECK(m.count() == 60);
        CHECK(check_6_connected(m));
        for (std::size_t j = 0; j < d.count(); ++j)
            if (m[j]) CHECK(allowed[j]);
    }
    CHECK_THROWS(grow_connected_mask_within(allowed, 257, rng));
}

TEST_CASE("target volume sampling") {
    Rng rng(55);
    const VolumeDistribution one{{100}, 0.0};
    for (int i = 0; i < 100; ++i) CHECK(sample_target_volume(one, rng) == 100);
    const VolumeDistribution jit{{100}, 0.1};
    for (int i = 0; i < 1000; ++i) {
        const std::size_t v = sample_target_volume(jit, rng);
        CHECK(v >= 90);
        CHECK(v <= 110);
    }
    CHECK_THROWS_AS(sample_target_volume(VolumeDistribution{{}, 0.1}, rng), std::invalid_argument);

    // Frequencies of a two-point distribution: binomial 99.9% band for n = 10^4, p = 0.5 is about +-0.0165.
    const VolumeDistribution two{{50, 500}, 0.0};
    std::size_t small = 0;
    const std::size_t n = 10000;
    for (std::size_t i = 0; i < n; ++i) small += sample_target_volume(two, rng) == 50;
    CHECK(std::abs(static_cast<double>(small) / n - 0.5) < 0.02);
}

TEST_CASE("volume distribution file parsing") {
    test::TempDir dir("voldist");
    {
        std::ofstream f(dir / "ok.txt");
        f << "# lesion sizes\n12\n  40 \n\n7\n";
    }
    const auto dist = load_volume_distribution(dir / "ok.txt", 0.2);
    CHECK(dist.samples == std::vector<std::size_t>{12, 40, 7});
    CHECK(dist.jitter_fraction == 0.2);
    {
        std::ofstream f(dir / "bad.txt");
        f << "12\nabc\n";
    }
    CHECK_THROWS(load_volume_distribution(dir / "bad.txt"));
    {
        std::ofstream f(dir / "zero.txt");
        f << "0\n";
    }
    CHECK_THROWS(load_volume_distribution(dir / "zero.txt"));
    CHECK_THROWS(load_volume_distribution(dir / "missing.txt"));
}
