#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace powdr {

/// Error raised while decoding a binary file; carries the byte offset where decoding failed.
class FormatError : public std::runtime_error {
public:
    FormatError(const std::string &what, std::uint64_t offset);
    std::uint64_t offset() const noexcept { return offset_; }

private:
    std::uint64_t offset_;
};

/// Grid extent. Storage is x-fastest: index = x + nx * (y + ny * z).
struct Dims {
    std::size_t nx = 0;
    std::size_t ny = 0;
    std::size_t nz = 0;

    std::size_t count() const noexcept { return nx * ny * nz; }
    std::size_t index(std::size_t x, std::size_t y, std::size_t z) const noexcept {
        return x + nx * (y + ny * z);
    }
    bool all_even() const noexcept { return nx % 2 == 0 && ny % 2 == 0 && nz % 2 == 0; }
    Dims halved() const noexcept { return {nx / 2, ny / 2, nz / 2}; }
    Dims doubled() const noexcept { return {nx * 2, ny * 2, nz * 2}; }
    bool operator==(const Dims &) const = default;
};

std::string to_string(const Dims &d);

struct Spacing {
    float sx = 1.0f;
    float sy = 1.0f;
    float sz = 1.0f;
    bool operator==(const Spacing &) const = default;
};

class Volume {
public:
    Volume() = default;
    explicit Volume(Dims dims, Spacing spacing = {});
    Volume(Dims dims, std::vector<float> data, Spacing spacing = {});

    const Dims &dims() const noexcept { return dims_; }
    const Spacing &spacing() const noexcept { return spacing_; }
    std::size_t size() const noexcept { return data_.size(); }

    float &operator[](std::size_t i) noexcept { return data_[i]; }
    float operator[](std::size_t i) const noexcept { return data_[i]; }
    float &at(std::size_t x, std::size_t y, std::size_t z) noexcept { return data_[dims_.index(x, y, z)]; }
    float at(std::size_t x, std::size_t y, std::size_t z) const noexcept { return data_[dims_.index(x, y, z)]; }

    std::span<float> values() noexcept { return data_; }
    std::span<const float> values() const noexcept { return data_; }

    bool all_finite() const noexcept;
    bool operator==(const Volume &) const = default;

private:
    Dims dims_;
    Spacing spacing_;
    std::vector<float> data_;
};

class Mask {
public:
    Mask() = default;
    explicit Mask(Dims dims, bool fill = false);
    Mask(Dims dims, std::vector<std::uint8_t> data);

    const Dims &dims() const noexcept { return dims_; }
    std::size_t size() const noexcept { return data_.size(); }

    bool operator[](std::size_t i) const noexcept { return data_[i] != 0; }
    void set(std::size_t i, bool v) noexcept { data_[i] = v ? 1 : 0; }
    bool at(std::size_t x, std::size_t y, std::size_t z) const noexcept { return data_[dims_.index(x, y, z)] != 0; }

    std::span<const std::uint8_t> bytes() const noexcept { return data_; }
    std::size_t count() const noexcept;
    bool any() const noexcept { return count() > 0; }
    Mask inverted() const;
    bool operator==(const Mask &) const = default;

private:
    Dims dims_;
    std::vector<std::uint8_t> data_;
};

/// Clips to the [lo, hi] percentiles (linear interpolation on the sorted values) and maps that range onto [0, 1].
Volume normalize_percentile(const Volume &v, double lo, double hi);

/// Percentile by linear interpolation between closest ranks of the sorted values.
double percentile(std::span<const float> values, double p);

/// True voxels grow by a ball of the given radius, measured in voxel units.
Mask dilate_spherical(const Mask &m, int radius_voxels);

Volume apply_mask(const Volume &v, const Mask &m);

Mask mask_union(const Mask &a, const Mask &b);

// PVOL files. dtype 1 = float32 volume, 2 = uint8 mask.
inline constexpr std::array<char, 4> kPvolMagic{'P', 'V', 'O', 'L'};
inline constexpr std::uint32_t kPvolVersion = 1;
inline constexpr std::uint32_t kDtypeFloat32 = 1;
inline constexpr std::uint32_t kDtypeMask = 2;

void write_volume(const Volume &v, const std::filesystem::path &path);
Volume read_volume(const std::filesystem::path &path);
void write_mask(const Mask &m, const std::filesystem::path &path);
Mask read_mask(const std::filesystem::path &path);

std::vector<std::uint8_t> encode_volume(const Volume &v);
Volume decode_volume(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_mask(const Mask &m);
Mask decode_mask(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path &path);
/// Writes through a temporary sibling file and renames it into place.
void write_file_atomic(const std::filesystem::path &path, std::span<const std::uint8_t> bytes);

} // namespace powdr
