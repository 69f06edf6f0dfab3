#include "powdr/maskgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <queue>
#include <sstream>
#include <stdexcept>
#include <string>

namespace powdr {

VolumeDistribution load_volume_distribution(const std::filesystem::path &path, double jitter_fraction) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open volume distribution " + path.string());
    VolumeDistribution dist;
    dist.jitter_fraction = jitter_fraction;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        std::istringstream is(line);
        long long v = 0;
        std::string rest;
        if (!(is >> v) || (is >> rest) || v <= 0)
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": expected one positive integer per line");
        dist.samples.push_back(static_cast<std::size_t>(v));
    }
    if (dist.samples.empty()) throw std::runtime_error("volume distribution " + path.string() + " is empty");
    return dist;
}

std::size_t sample_target_volume(const VolumeDistribution &dist, Rng &rng) {
    if (dist.samples.empty()) throw std::invalid_argument("volume distribution is empty");
    if (dist.jitter_fraction < 0.0) throw std::invalid_argument("jitter fraction must be non-negative");
    const double base = static_cast<double>(dist.samples[rng.index(dist.samples.size())]);
    const double u = dist.jitter_fraction > 0.0 ? rng.uniform(-dist.jitter_fraction, dist.jitter_fraction) : 0.0;
    const double scaled = std::round(base * (1.0 + u));
    return scaled < 1.0 ? 1 : static_cast<std::size_t>(scaled);
}

namespace {

template <typename Fn>
void for_each_face_neighbor(const Dims &d, std::size_t i, Fn &&fn) {
    const std::size_t x = i % d.nx;
    const std::size_t y = (i / d.nx) % d.ny;
    const std::size_t z = i / (d.nx * d.ny);
    if (x > 0) fn(i - 1);
    if (x + 1 < d.nx) fn(i + 1);
    if (y > 0) fn(i - d.nx);
    if (y + 1 < d.ny) fn(i + d.nx);
    if (z > 0) fn(i - d.nx * d.ny);
    if (z + 1 < d.nz) fn(i + d.nx * d.ny);
}

Mask grow_from(const Dims &dims, std::size_t seed, std::size_t target, const Mask *allowed, Rng &rng) {
    enum : std::uint8_t { outside = 0, in_region = 1, in_frontier = 2 };
    std::vector<std::uint8_t> state(dims.count(), outside);
    std::vector<std::size_t> frontier;
    std::size_t grown = 0;

    const auto admit = [&](std::size_t v) {
        state[v] = in_region;
        ++grown;
        for_each_face_neighbor(dims, v, [&](std::size_t n) {
            if (state[n] != outside) return;
            if (allowed && !(*allowed)[n]) return;
            state[n] = in_frontier;
            frontier.push_back(n);
        });
    };

    admit(seed);
    while (grown < target) {
        if (frontier.empty()) throw std::runtime_error("region cannot grow to " + std::to_string(target) + " voxels");
        const std::size_t pick = rng.index(frontier.size());
        const std::size_t v = frontier[pick];
        frontier[pick] = frontier.back();
        frontier.pop_back();
        admit(v);
    }

    std::vector<std::uint8_t> out(dims.count(), 0);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = state[i] == in_region ? 1 : 0;
    return Mask(dims, std::move(out));
}

} // namespace

Mask grow_connected_mask(const Dims &dims, std::size_t target_voxels, Rng &rng) {
    if (target_voxels == 0) throw std::invalid_argument("target voxel count must be positive");
    if (target_voxels > dims.count())
        throw std::invalid_argument("target of " + std::to_string(target_voxels) + " voxels exceeds grid " + to_string(dims));
    return grow_from(dims, rng.index(dims.count()), target_voxels, nullptr, rng);
}

Mask grow_connected_mask_within(const Mask &allowed, std::size_t target_voxels, Rng &rng) {
    if (target_voxels == 0) throw std::invalid_argument("target voxel count must be positive");
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < allowed.size(); ++i)
        if (allowed[i]) candidates.push_back(i);
    if (target_voxels > candidates.size())
        throw std::invalid_argument("target of " + std::to_string(target_voxels) + " voxels exceeds the allowed region");
    return grow_from(allowed.dims(), candidates[rng.index(candidates.size())], target_voxels, &allowed, rng);
}

bool check_6_connected(const Mask &m) {
    const Dims d = m.dims();
    std::size_t start = m.size();
    std::size_t total = 0;
    for (std::size_t i = 0; i < m.size(); ++i)
        if (m[i]) {
            if (start == m.size()) start = i;
            ++total;
        }
    if (total == 0) return false;

    std::vector<std::uint8_t> seen(m.size(), 0);
    std::queue<std::size_t> queue;
    queue.push(start);
    seen[start] = 1;
    std::size_t reached = 0;
    while (!queue.empty()) {
        const std::size_t v = queue.front();
        queue.pop();
        ++reached;
        for_each_face_neighbor(d, v, [&](std::size_t n) {
            if (m[n] && !seen[n]) {
                seen[n] = 1;
                queue.push(n);
            }
        });
    }
    return reached == total;
}

} // namespace powdr
