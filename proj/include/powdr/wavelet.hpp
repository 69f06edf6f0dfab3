#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "powdr/volume.hpp"

namespace powdr {

inline constexpr std::size_t kSubbands = 8;

/// Channel names in storage order. Letters give the filter along (x, y, z); channel = 4*fx + 2*fy + fz with L=0, H=1.
inline constexpr std::array<std::string_view, kSubbands> kSubbandNames{"LLL", "LLH", "LHL", "LHH",
                                                                      "HLL", "HLH", "HHL", "HHH"};

/// Eight half-resolution channels, channel-major then x-fastest.
class SubbandTensor {
public:
    SubbandTensor() = default;
    explicit SubbandTensor(Dims band_dims);
    SubbandTensor(Dims band_dims, std::vector<float> data);

    /// Per-channel dims (half of the source volume).
    const Dims &band_dims() const noexcept { return dims_; }
    std::size_t band_size() const noexcept { return dims_.count(); }
    std::size_t size() const noexcept { return data_.size(); }

    float &operator[](std::size_t i) noexcept { return data_[i]; }
    float operator[](std::size_t i) const noexcept { return data_[i]; }

    std::span<float> channel(std::size_t c) noexcept { return std::span<float>(data_).subspan(c * band_size(), band_size()); }
    std::span<const float> channel(std::size_t c) const noexcept {
        return std::span<const float>(data_).subspan(c * band_size(), band_size());
    }
    std::span<float> values() noexcept { return data_; }
    std::span<const float> values() const noexcept { return data_; }

    bool same_shape(const SubbandTensor &o) const noexcept { return dims_ == o.dims_; }
    bool operator==(const SubbandTensor &) const = default;

private:
    Dims dims_;
    std::vector<float> data_;
};

/// Single-level orthonormal 3D Haar analysis. All dims must be even.
SubbandTensor dwt3(const Volume &v);

/// Exact inverse of dwt3. The result carries unit spacing unless one is given.
Volume idwt3(const SubbandTensor &s, Spacing spacing = {});

std::vector<std::uint8_t> encode_subbands(const SubbandTensor &s);
SubbandTensor decode_subbands(std::span<const std::uint8_t> bytes);
void write_subbands(const SubbandTensor &s, const std::filesystem::path &path);
SubbandTensor read_subbands(const std::filesystem::path &path);

} // namespace powdr
