#include "powdr/wavelet.hpp"

#include <cmath>
#include <stdexcept>

#include "powdr/binary_io.hpp"

namespace powdr {

SubbandTensor::SubbandTensor(Dims band_dims) : SubbandTensor(band_dims, std::vector<float>(kSubbands * band_dims.count(), 0.0f)) {}

SubbandTensor::SubbandTensor(Dims band_dims, std::vector<float> data) : dims_(band_dims), data_(std::move(data)) {
    if (band_dims.count() == 0) throw std::invalid_argument("subband dims must be positive");
    if (data_.size() != kSubbands * band_dims.count())
        throw std::invalid_argument("subband data length does not match 8 x " + to_string(band_dims));
}

namespace {

// 1/(2*sqrt(2)): one 1/sqrt(2) per axis.
constexpr double kNorm = 0.35355339059327376220;

} // namespace

SubbandTensor dwt3(const Volume &v) {
    const Dims d = v.dims();
    if (!d.all_even()) throw std::invalid_argument("dwt3 requires even dims, got " + to_string(d));
    const Dims h = d.halved();
    SubbandTensor out(h);
    const std::size_t band = h.count();

    for (std::size_t z = 0; z < h.nz; ++z)
        for (std::size_t y = 0; y < h.ny; ++y)
            for (std::size_t x = 0; x < h.nx; ++x) {
                double b[2][2][2]; // [i][j][k] over (x, y, z)
                for (int k = 0; k < 2; ++k)
                    for (int j = 0; j < 2; ++j)
                        for (int i = 0; i < 2; ++i) b[i][j][k] = v.at(2 * x + i, 2 * y + j, 2 * z + k);

                // Separable butterflies: x, then y, then z. Index 0 = low, 1 = high.
                double ax[2][2][2];
                for (int j = 0; j < 2; ++j)
                    for (int k = 0; k < 2; ++k) {
                        ax[0][j][k] = b[0][j][k] + b[1][j][k];
                        ax[1][j][k] = b[0][j][k] - b[1][j][k];
                    }
                double ay[2][2][2];
                for (int i = 0; i < 2; ++i)
                    for (int k = 0; k < 2; ++k) {
                        ay[i][0][k] = ax[i][0][k] + ax[i][1][k];
                        ay[i][1][k] = ax[i][0][k] - ax[i][1][k];
                    }
                const std::size_t at = h.index(x, y, z);
                for (int fx = 0; fx < 2; ++fx)
                    for (int fy = 0; fy < 2; ++fy) {
                        const double lo = ay[fx][fy][0] + ay[fx][fy][1];
                        const double hi = ay[fx][fy][0] - ay[fx][fy][1];
                        const std::size_t c = 4 * fx + 2 * fy;
                        out[c * band + at] = static_cast<float>(kNorm * lo);
                        out[(c + 1) * band + at] = static_cast<float>(kNorm * hi);
                    }
            }
    return out;
}

Volume idwt3(const SubbandTensor &s, Spacing spacing) {
    const Dims h = s.band_dims();
    const Dims d = h.doubled();
    const std::size_t band = h.count();
    Volume out(d, spacing);

    for (std::size_t z = 0; z < h.nz; ++z)
        for (std::size_t y = 0; y < h.ny; ++y)
            for (std::size_t x = 0; x < h.nx; ++x) {
                const std::size_t at = h.index(x, y, z);
                double c[2][2][2]; // [fx][fy][fz]
                for (int fx = 0; fx < 2; ++fx)
                    for (int fy = 0; fy < 2; ++fy)
                        for (int fz = 0; fz < 2; ++fz) c[fx][fy][fz] = s[(4 * fx + 2 * fy + fz) * band + at];

                // The orthonormal Haar matrix is symmetric, so synthesis reuses the same butterflies.
                double az[2][2][2];
                for (int fx = 0; fx < 2; ++fx)
                    for (int fy = 0; fy < 2; ++fy) {
                        az[fx][fy][0] = c[fx][fy][0] + c[fx][fy][1];
                        az[fx][fy][1] = c[fx][fy][0] - c[fx][fy][1];
                    }
                double ay[2][2][2];
                for (int fx = 0; fx < 2; ++fx)
                    for (int k = 0; k < 2; ++k) {
                        ay[fx][0][k] = az[fx][0][k] + az[fx][1][k];
                        ay[fx][1][k] = az[fx][0][k] - az[fx][1][k];
                    }
                for (int j = 0; j < 2; ++j)
                    for (int k = 0; k < 2; ++k) {
                        out.at(2 * x, 2 * y + j, 2 * z + k) = static_cast<float>(kNorm * (ay[0][j][k] + ay[1][j][k]));
                        out.at(2 * x + 1, 2 * y + j, 2 * z + k) = static_cast<float>(kNorm * (ay[0][j][k] - ay[1][j][k]));
                    }
            }
    return out;
}

std::vector<std::uint8_t> encode_subbands(const SubbandTensor &s) {
    bin::Writer w;
    const Dims d = s.band_dims();
    w.put_bytes(kPvolMagic.data(), kPvolMagic.size());
    w.put<std::uint32_t>(kPvolVersion);
    w.put<std::uint32_t>(kDtypeFloat32);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(d.nx));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(d.ny));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(d.nz));
    w.put<float>(1.0f);
    w.put<float>(1.0f);
    w.put<float>(1.0f);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(kSubbands));
    w.put_span(s.values());
    return w.take();
}

SubbandTensor decode_subbands(std::span<const std::uint8_t> bytes) {
    bin::Reader r(bytes);
    std::array<char, 4> magic{};
    r.get_bytes(magic.data(), magic.size(), "magic");
    if (magic != kPvolMagic) r.fail_at("bad magic, expected \"PVOL\"", 0);
    const auto version_at = r.offset();
    if (r.get<std::uint32_t>("version") != kPvolVersion) r.fail_at("unsupported PVOL version", version_at);
    const auto dtype_at = r.offset();
    if (r.get<std::uint32_t>("dtype") != kDtypeFloat32) r.fail_at("subbands must be float32", dtype_at);
    const auto dims_at = r.offset();
    Dims d;
    d.nx = r.get<std::uint32_t>("dims");
    d.ny = r.get<std::uint32_t>("dims");
    d.nz = r.get<std::uint32_t>("dims");
    std::size_t prod = 0;
    if (d.nx == 0 || d.ny == 0 || d.nz == 0 || __builtin_mul_overflow(d.nx, d.ny, &prod) ||
        __builtin_mul_overflow(prod, d.nz, &prod) || prod > (std::size_t{1} << 32))
        r.fail_at("dim overflow", dims_at);
    for (int i = 0; i < 3; ++i) (void)r.get<float>("spacing");
    const auto channels_at = r.offset();
    if (r.get<std::uint32_t>("channel count") != kSubbands) r.fail_at("channel count must be 8", channels_at);
    if (r.remaining() != kSubbands * d.count() * sizeof(float)) r.fail("payload length does not match 8 subbands");
    std::vector<float> data(kSubbands * d.count());
    r.get_span(std::span<float>(data), "payload");
    return SubbandTensor(d, std::move(data));
}

void write_subbands(const SubbandTensor &s, const std::filesystem::path &path) { write_file_atomic(path, encode_subbands(s)); }
SubbandTensor read_subbands(const std::filesystem::path &path) { return decode_subbands(read_file_bytes(path)); }

} // namespace powdr
