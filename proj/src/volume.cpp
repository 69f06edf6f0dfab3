#include "powdr/volume.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "powdr/binary_io.hpp"

namespace powdr {

FormatError::FormatError(const std::string &what, std::uint64_t offset)
    : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

std::string to_string(const Dims &d) {
    std::ostringstream os;
    os << d.nx << "x" << d.ny << "x" << d.nz;
    return os.str();
}

Volume::Volume(Dims dims, Spacing spacing) : Volume(dims, std::vector<float>(dims.count(), 0.0f), spacing) {}

Volume::Volume(Dims dims, std::vector<float> data, Spacing spacing)
    : dims_(dims), spacing_(spacing), data_(std::move(data)) {
    if (dims.nx == 0 || dims.ny == 0 || dims.nz == 0) throw std::invalid_argument("volume dims must be positive");
    if (data_.size() != dims.count()) throw std::invalid_argument("volume data length does not match dims " + to_string(dims));
    if (!(spacing.sx > 0 && spacing.sy > 0 && spacing.sz > 0)) throw std::invalid_argument("voxel spacing must be strictly positive");
}

bool Volume::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

Mask::Mask(Dims dims, bool fill) : Mask(dims, std::vector<std::uint8_t>(dims.count(), fill ? 1 : 0)) {}

Mask::Mask(Dims dims, std::vector<std::uint8_t> data) : dims_(dims), data_(std::move(data)) {
    if (dims.nx == 0 || dims.ny == 0 || dims.nz == 0) throw std::invalid_argument("mask dims must be positive");
    if (data_.size() != dims.count()) throw std::invalid_argument("mask data length does not match dims " + to_string(dims));
    for (auto &b : data_) b = b ? 1 : 0;
}

std::size_t Mask::count() const noexcept {
    return static_cast<std::size_t>(std::count(data_.begin(), data_.end(), std::uint8_t{1}));
}

Mask Mask::inverted() const {
    std::vector<std::uint8_t> out(data_.size());
    std::transform(data_.begin(), data_.end(), out.begin(), [](std::uint8_t b) { return std::uint8_t(b ? 0 : 1); });
    return Mask(dims_, std::move(out));
}

double percentile(std::span<const float> values, double p) {
    if (values.empty()) throw std::invalid_argument("percentile of empty data");
    if (!(p >= 0.0 && p <= 100.0)) throw std::invalid_argument("percentile must lie in [0, 100]");
    std::vector<float> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    const double rank = p / 100.0 * static_cast<double>(sorted.size() - 1);
    const auto below = static_cast<std::size_t>(std::floor(rank));
    const auto above = std::min(below + 1, sorted.size() - 1);
    const double frac = rank - static_cast<double>(below);
    return static_cast<double>(sorted[below]) + frac * (static_cast<double>(sorted[above]) - static_cast<double>(sorted[below]));
}

Volume normalize_percentile(const Volume &v, double lo, double hi) {
    if (!(lo >= 0.0 && lo < 100.0) || !(hi > lo && hi <= 100.0))
        throw std::invalid_argument("percentiles must satisfy 0 <= lo < hi <= 100");
    const auto vals = v.values();
    const auto [mn, mx] = std::minmax_element(vals.begin(), vals.end());
    if (*mn == *mx) throw std::invalid_argument("constant volume");

    const double p_lo = percentile(vals, lo);
    const double p_hi = percentile(vals, hi);
    if (!(p_hi > p_lo)) throw std::invalid_argument("percentile range is degenerate");

    const double scale = 1.0 / (p_hi - p_lo);
    std::vector<float> out(vals.size());
    for (std::size_t i = 0; i < vals.size(); ++i) {
        const double c = std::clamp(static_cast<double>(vals[i]), p_lo, p_hi);
        out[i] = static_cast<float>((c - p_lo) * scale);
    }
    return Volume(v.dims(), std::move(out), v.spacing());
}

Mask dilate_spherical(const Mask &m, int radius_voxels) {
    if (radius_voxels < 0) throw std::invalid_argument("dilation radius must be non-negative");
    if (radius_voxels == 0) return m;

    struct Offset {
        int dx, dy, dz;
    };
    std::vector<Offset> ball;
    const int r = radius_voxels;
    for (int dz = -r; dz <= r; ++dz)
        for (int dy = -r; dy <= r; ++dy)
            for (int dx = -r; dx <= r; ++dx)
                if (dx * dx + dy * dy + dz * dz <= r * r) ball.push_back({dx, dy, dz});

    const Dims d = m.dims();
    std::vector<std::uint8_t> out(d.count(), 0);
    const auto nx = static_cast<long>(d.nx), ny = static_cast<long>(d.ny), nz = static_cast<long>(d.nz);
    for (long z = 0; z < nz; ++z)
        for (long y = 0; y < ny; ++y)
            for (long x = 0; x < nx; ++x) {
                if (!m.at(x, y, z)) continue;
                for (const auto &o : ball) {
                    const long xx = x + o.dx, yy = y + o.dy, zz = z + o.dz;
                    if (xx < 0 || yy < 0 || zz < 0 || xx >= nx || yy >= ny || zz >= nz) continue;
                    out[d.index(xx, yy, zz)] = 1;
                }
            }
    return Mask(d, std::move(out));
}

Volume apply_mask(const Volume &v, const Mask &m) {
    if (v.dims() != m.dims())
        throw std::invalid_argument("mask dims " + to_string(m.dims()) + " do not match volume dims " + to_string(v.dims()));
    std::vector<float> out(v.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = m[i] ? v[i] : 0.0f;
    return Volume(v.dims(), std::move(out), v.spacing());
}

Mask mask_union(const Mask &a, const Mask &b) {
    if (a.dims() != b.dims()) throw std::invalid_argument("mask union requires equal dims");
    std::vector<std::uint8_t> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (a[i] || b[i]) ? 1 : 0;
    return Mask(a.dims(), std::move(out));
}

namespace {

constexpr std::size_t kMaxVoxels = std::size_t{1} << 34;

void encode_header(bin::Writer &w, std::uint32_t dtype, const Dims &d, const Spacing &s) {
    w.put_bytes(kPvolMagic.data(), kPvolMagic.size());
    w.put<std::uint32_t>(kPvolVersion);
    w.put<std::uint32_t>(dtype);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(d.nx));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(d.ny));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(d.nz));
    w.put<float>(s.sx);
    w.put<float>(s.sy);
    w.put<float>(s.sz);
}

struct Header {
    std::uint32_t dtype = 0;
    Dims dims;
    Spacing spacing;
};

Header decode_header(bin::Reader &r, std::uint32_t expected_dtype) {
    std::array<char, 4> magic{};
    r.get_bytes(magic.data(), magic.size(), "magic");
    if (magic != kPvolMagic) r.fail_at("bad magic, expected \"PVOL\"", 0);
    const auto version_at = r.offset();
    if (r.get<std::uint32_t>("version") != kPvolVersion) r.fail_at("unsupported PVOL version", version_at);
    const auto dtype_at = r.offset();
    Header h;
    h.dtype = r.get<std::uint32_t>("dtype");
    if (h.dtype != expected_dtype) r.fail_at("unexpected dtype code " + std::to_string(h.dtype), dtype_at);
    const auto dims_at = r.offset();
    h.dims.nx = r.get<std::uint32_t>("dims");
    h.dims.ny = r.get<std::uint32_t>("dims");
    h.dims.nz = r.get<std::uint32_t>("dims");
    if (h.dims.nx == 0 || h.dims.ny == 0 || h.dims.nz == 0) r.fail_at("zero dimension", dims_at);
    std::size_t prod = 0;
    if (__builtin_mul_overflow(h.dims.nx, h.dims.ny, &prod) || __builtin_mul_overflow(prod, h.dims.nz, &prod) ||
        prod > kMaxVoxels)
        r.fail_at("dim overflow", dims_at);
    const auto spacing_at = r.offset();
    h.spacing.sx = r.get<float>("spacing");
    h.spacing.sy = r.get<float>("spacing");
    h.spacing.sz = r.get<float>("spacing");
    if (!(h.spacing.sx > 0 && h.spacing.sy > 0 && h.spacing.sz > 0)) r.fail_at("non-positive spacing", spacing_at);
    return h;
}

} // namespace

std::vector<std::uint8_t> encode_volume(const Volume &v) {
    bin::Writer w;
    encode_header(w, kDtypeFloat32, v.dims(), v.spacing());
    w.put_span(v.values());
    return w.take();
}

Volume decode_volume(std::span<const std::uint8_t> bytes) {
    bin::Reader r(bytes);
    const Header h = decode_header(r, kDtypeFloat32);
    if (r.remaining() != h.dims.count() * sizeof(float))
        r.fail("payload length " + std::to_string(r.remaining()) + " bytes, header declares " +
               std::to_string(h.dims.count()) + " float32 values");
    std::vector<float> data(h.dims.count());
    r.get_span(std::span<float>(data), "payload");
    return Volume(h.dims, std::move(data), h.spacing);
}

std::vector<std::uint8_t> encode_mask(const Mask &m) {
    bin::Writer w;
    encode_header(w, kDtypeMask, m.dims(), Spacing{});
    w.put_span(m.bytes());
    return w.take();
}

Mask decode_mask(std::span<const std::uint8_t> bytes) {
    bin::Reader r(bytes);
    const Header h = decode_header(r, kDtypeMask);
    if (r.remaining() != h.dims.count())
        r.fail("payload length " + std::to_string(r.remaining()) + " bytes, header declares " +
               std::to_string(h.dims.count()) + " mask values");
    std::vector<std::uint8_t> data(h.dims.count());
    const auto payload_at = r.offset();
    r.get_span(std::span<std::uint8_t>(data), "payload");
    for (std::size_t i = 0; i < data.size(); ++i)
        if (data[i] > 1) r.fail_at("mask byte is not 0/1", payload_at + i);
    return Mask(h.dims, std::move(data));
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    in.seekg(0, std::ios::end);
    const auto n = static_cast<std::size_t>(in.tellg());
    in.seekg(0, std::ios::beg);
    std::vector<std::uint8_t> bytes(n);
    if (n > 0 && !in.read(reinterpret_cast<char *>(bytes.data()), static_cast<std::streamsize>(n)))
        throw std::runtime_error("failed reading " + path.string());
    return bytes;
}

void write_file_atomic(const std::filesystem::path &path, std::span<const std::uint8_t> bytes) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw std::runtime_error("failed writing " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

void write_volume(const Volume &v, const std::filesystem::path &path) { write_file_atomic(path, encode_volume(v)); }
Volume read_volume(const std::filesystem::path &path) { return decode_volume(read_file_bytes(path)); }
void write_mask(const Mask &m, const std::filesystem::path &path) { write_file_atomic(path, encode_mask(m)); }
Mask read_mask(const std::filesystem::path &path) { return decode_mask(read_file_bytes(path)); }

} // namespace powdr
