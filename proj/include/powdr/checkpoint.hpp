#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "powdr/denoiser.hpp"
#include "powdr/schedule.hpp"

namespace powdr {

/// AdamW first/second moment estimates and the number of completed steps.
struct OptimizerState {
    std::vector<double> m;
    std::vector<double> v;
    std::uint64_t step = 0;

    static OptimizerState zeros(std::size_t n) { return {std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), 0}; }
    bool operator==(const OptimizerState &) const = default;
};

struct Checkpoint {
    DenoiserConfig network;
    ScheduleParams schedule;
    std::vector<double> params;
    std::optional<OptimizerState> optimizer;
    /// Training iterations completed when the checkpoint was written.
    std::uint64_t iteration = 0;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint &ck);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
void write_checkpoint(const Checkpoint &ck, const std::filesystem::path &path);
Checkpoint read_checkpoint(const std::filesystem::path &path);

/// Rejects a checkpoint whose stored schedule differs from the expected one.
void require_schedule(const Checkpoint &ck, const ScheduleParams &expected);

/// FNV-1a 64-bit digest, printed as 16 hex digits.
std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes);
std::string hex64(std::uint64_t v);

} // namespace powdr
