#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "powdr/rng.hpp"
#include "powdr/volume.hpp"

namespace powdr {

/// Empirical lesion-size distribution (voxel counts) resampled with multiplicative jitter.
struct VolumeDistribution {
    std::vector<std::size_t> samples;
    double jitter_fraction = 0.1;
};

VolumeDistribution load_volume_distribution(const std::filesystem::path &path, double jitter_fraction = 0.1);

/// One reference count drawn uniformly, times (1 + u) with u ~ U[-jitter, +jitter], rounded, at least 1.
std::size_t sample_target_volume(const VolumeDistribution &dist, Rng &rng);

/// Random-frontier region growing: a uniform seed voxel, then uniformly chosen face neighbours of the
/// region until it holds exactly target_voxels voxels.
Mask grow_connected_mask(const Dims &dims, std::size_t target_voxels, Rng &rng);

/// Same growth restricted to voxels where allowed is true; the seed is uniform over allowed voxels.
/// Fails if the component containing the seed is smaller than the target.
Mask grow_connected_mask_within(const Mask &allowed, std::size_t target_voxels, Rng &rng);

/// True iff the mask is non-empty and its voxels form one face-connected component.
bool check_6_connected(const Mask &m);

} // namespace powdr
