#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <vector>

#include "powdr/volume.hpp"

namespace powdr {

/// One training case: a [0, 1]-normalized image and its lesion mask.
struct TrainingExample {
    Volume image;
    Mask pathology_mask;
};

struct Dataset {
    std::vector<TrainingExample> cases;
    /// Lesion voxel counts from the manifest, when one was present.
    std::optional<std::vector<std::size_t>> lesion_volumes;
};

/// Throws unless the dataset is non-empty and every case has the same even dims with matching masks.
void validate_dataset(const std::vector<TrainingExample> &cases);

/// Loads `case<i>.pvol` / `case<i>_mask.pvol` pairs. Uses manifest.json when present, otherwise scans
/// consecutive indices from 0.
Dataset load_dataset(const std::filesystem::path &dir);

} // namespace powdr
