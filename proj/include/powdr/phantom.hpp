#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <utility>

#include "powdr/dataset.hpp"

namespace powdr {

/// Procedural brain-like phantom with an embedded bright lesion.
struct PhantomSpec {
    Dims dims{16, 16, 16};
    std::size_t n_cases = 32;
    std::pair<std::size_t, std::size_t> lesion_volume_range{20, 80};
    double texture_amplitude = 0.1;
    std::uint64_t seed = 0;

    void validate() const;
};

inline constexpr float kBackgroundLevel = 0.0f;
inline constexpr float kVentricleLevel = 0.2f;
inline constexpr float kTissueLevel = 0.5f;
inline constexpr float kLesionLevel = 0.85f;

struct Phantom {
    TrainingExample example;
    Mask head;
};

/// Deterministic in (spec.seed, case_index).
Phantom generate_phantom_with_head(const PhantomSpec &spec, std::size_t case_index);
TrainingExample generate_phantom(const PhantomSpec &spec, std::size_t case_index);

/// Writes case<i>.pvol, case<i>_mask.pvol and manifest.json into out_dir.
void write_phantom_set(const PhantomSpec &spec, const std::filesystem::path &out_dir);

} // namespace powdr
