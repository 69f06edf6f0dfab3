#include "powdr/layers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace powdr::nn {

Dims Conv3dShape::output_dims(const Dims &in) const {
    if (stride == 1) return in;
    if (in.nx % stride || in.ny % stride || in.nz % stride)
        throw std::invalid_argument("conv3d: dims " + to_string(in) + " not divisible by stride " + std::to_string(stride));
    return {in.nx / stride, in.ny / stride, in.nz / stride};
}

namespace {

// Source index along one axis for each (tap, output position); -1 marks a zero-padded tap.
std::vector<long> axis_table(std::size_t n_in, std::size_t n_out, const Conv3dShape &s) {
    const long pad = static_cast<long>(s.kernel / 2);
    const long n = static_cast<long>(n_in);
    std::vector<long> table(s.kernel * n_out);
    for (std::size_t k = 0; k < s.kernel; ++k)
        for (std::size_t o = 0; o < n_out; ++o) {
            long i = static_cast<long>(o * s.stride + k) - pad;
            if (i < 0 || i >= n) {
                if (s.padding == Padding::periodic)
                    i = ((i % n) + n) % n;
                else
                    i = -1;
            }
            table[k * n_out + o] = i;
        }
    return table;
}

struct Im2Col {
    std::vector<long> tx, ty, tz;
    Dims in, out;

    Im2Col(const Conv3dShape &s, const Dims &in_dims)
        : tx(axis_table(in_dims.nx, s.output_dims(in_dims).nx, s)), ty(axis_table(in_dims.ny, s.output_dims(in_dims).ny, s)),
          tz(axis_table(in_dims.nz, s.output_dims(in_dims).nz, s)), in(in_dims), out(s.output_dims(in_dims)) {}

    // Fills one row of the column matrix: the input channel plane sampled at tap (kx, ky, kz).
    void gather(std::span<const double> plane, std::size_t kx, std::size_t ky, std::size_t kz, std::span<double> row) const {
        const long *ix = &tx[kx * out.nx];
        std::size_t o = 0;
        for (std::size_t oz = 0; oz < out.nz; ++oz) {
            const long iz = tz[kz * out.nz + oz];
            for (std::size_t oy = 0; oy < out.ny; ++oy) {
                const long iy = ty[ky * out.ny + oy];
                if (iz < 0 || iy < 0) {
                    for (std::size_t ox = 0; ox < out.nx; ++ox) row[o++] = 0.0;
                    continue;
                }
                const double *src = plane.data() + in.nx * (static_cast<std::size_t>(iy) + in.ny * static_cast<std::size_t>(iz));
                for (std::size_t ox = 0; ox < out.nx; ++ox) {
                    const long x = ix[ox];
                    row[o++] = x < 0 ? 0.0 : src[x];
                }
            }
        }
    }

    // Adjoint of gather: accumulates a column-matrix row back into the input plane.
    void scatter(std::span<const double> row, std::size_t kx, std::size_t ky, std::size_t kz, std::span<double> plane) const {
        const long *ix = &tx[kx * out.nx];
        std::size_t o = 0;
        for (std::size_t oz = 0; oz < out.nz; ++oz) {
            const long iz = tz[kz * out.nz + oz];
            for (std::size_t oy = 0; oy < out.ny; ++oy) {
                const long iy = ty[ky * out.ny + oy];
                if (iz < 0 || iy < 0) {
                    o += out.nx;
                    continue;
                }
                double *dst = plane.data() + in.nx * (static_cast<std::size_t>(iy) + in.ny * static_cast<std::size_t>(iz));
                for (std::size_t ox = 0; ox < out.nx; ++ox, ++o) {
                    const long x = ix[ox];
                    if (x >= 0) dst[x] += row[o];
                }
            }
        }
    }
};

} // namespace

Tensor conv3d_forward(const Conv3dShape &shape, const Tensor &in, std::span<const double> weight, std::span<const double> bias) {
    if (in.channels != shape.cin)
        throw std::invalid_argument("conv3d: expected " + std::to_string(shape.cin) + " input channels, got " + std::to_string(in.channels));
    if (weight.size() != shape.weight_count() || bias.size() != shape.cout) throw std::invalid_argument("conv3d: parameter size mismatch");

    const Im2Col cols(shape, in.dims);
    Tensor out(shape.cout, cols.out);
    const std::size_t n = out.voxels();
    const std::size_t k = shape.kernel;
    const std::size_t taps = k * k * k;
    for (std::size_t co = 0; co < shape.cout; ++co) {
        auto dst = out.channel(co);
        for (auto &v : dst) v = bias[co];
    }

    std::vector<double> row(n);
    for (std::size_t ci = 0; ci < shape.cin; ++ci) {
        const auto plane = in.channel(ci);
        for (std::size_t kz = 0; kz < k; ++kz)
            for (std::size_t ky = 0; ky < k; ++ky)
                for (std::size_t kx = 0; kx < k; ++kx) {
                    cols.gather(plane, kx, ky, kz, row);
                    const std::size_t r = ci * taps + (kz * k + ky) * k + kx;
                    for (std::size_t co = 0; co < shape.cout; ++co) {
                        const double w = weight[co * shape.fan_in() + r];
                        double *dst = out.data.data() + co * n;
                        for (std::size_t o = 0; o < n; ++o) dst[o] += w * row[o];
                    }
                }
    }
    return out;
}

void conv3d_backward(const Conv3dShape &shape, const Tensor &in, std::span<const double> weight, const Tensor &grad_out,
                     Tensor *grad_in, std::span<double> grad_weight, std::span<double> grad_bias) {
    const Im2Col cols(shape, in.dims);
    if (grad_out.channels != shape.cout || grad_out.dims != cols.out) throw std::invalid_argument("conv3d backward: grad shape mismatch");
    const std::size_t n = grad_out.voxels();
    const std::size_t k = shape.kernel;
    const std::size_t taps = k * k * k;

    for (std::size_t co = 0; co < shape.cout; ++co) {
        double s = 0.0;
        for (double g : grad_out.channel(co)) s += g;
        grad_bias[co] += s;
    }

    std::vector<double> row(n);
    std::vector<double> grow(n);
    for (std::size_t ci = 0; ci < shape.cin; ++ci) {
        const auto plane = in.channel(ci);
        for (std::size_t kz = 0; kz < k; ++kz)
            for (std::size_t ky = 0; ky < k; ++ky)
                for (std::size_t kx = 0; kx < k; ++kx) {
                    cols.gather(plane, kx, ky, kz, row);
                    const std::size_t r = ci * taps + (kz * k + ky) * k + kx;
                    std::fill(grow.begin(), grow.end(), 0.0);
                    for (std::size_t co = 0; co < shape.cout; ++co) {
                        const double *g = grad_out.data.data() + co * n;
                        double dot = 0.0;
                        for (std::size_t o = 0; o < n; ++o) dot += g[o] * row[o];
                        grad_weight[co * shape.fan_in() + r] += dot;
                        if (grad_in) {
                            const double w = weight[co * shape.fan_in() + r];
                            for (std::size_t o = 0; o < n; ++o) grow[o] += w * g[o];
                        }
                    }
                    if (grad_in) cols.scatter(grow, kx, ky, kz, grad_in->channel(ci));
                }
    }
}

double silu(double x) noexcept { return x / (1.0 + std::exp(-x)); }

double silu_grad(double x) noexcept {
    const double s = 1.0 / (1.0 + std::exp(-x));
    return s * (1.0 + x * (1.0 - s));
}

void silu_forward(std::span<const double> in, std::span<double> out) {
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = silu(in[i]);
}

void silu_backward(std::span<const double> in, std::span<const double> grad_out, std::span<double> grad_in) {
    for (std::size_t i = 0; i < in.size(); ++i) grad_in[i] += grad_out[i] * silu_grad(in[i]);
}

void dropout_forward(std::span<const double> in, double rate, Rng &rng, std::span<double> out, std::span<double> keep) {
    if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout rate must lie in [0, 1)");
    const double scale = 1.0 / (1.0 - rate);
    for (std::size_t i = 0; i < in.size(); ++i) {
        keep[i] = rng.uniform() < rate ? 0.0 : scale;
        out[i] = in[i] * keep[i];
    }
}

void dropout_backward(std::span<const double> keep, std::span<const double> grad_out, std::span<double> grad_in) {
    for (std::size_t i = 0; i < keep.size(); ++i) grad_in[i] += grad_out[i] * keep[i];
}

Tensor upsample2_forward(const Tensor &in) {
    Tensor out(in.channels, in.dims.doubled());
    const Dims &d = out.dims;
    for (std::size_t c = 0; c < in.channels; ++c) {
        const auto src = in.channel(c);
        auto dst = out.channel(c);
        for (std::size_t z = 0; z < d.nz; ++z)
            for (std::size_t y = 0; y < d.ny; ++y)
                for (std::size_t x = 0; x < d.nx; ++x) dst[d.index(x, y, z)] = src[in.dims.index(x / 2, y / 2, z / 2)];
    }
    return out;
}

void upsample2_backward(const Tensor &grad_out, Tensor &grad_in) {
    const Dims &d = grad_out.dims;
    for (std::size_t c = 0; c < grad_out.channels; ++c) {
        const auto src = grad_out.channel(c);
        auto dst = grad_in.channel(c);
        for (std::size_t z = 0; z < d.nz; ++z)
            for (std::size_t y = 0; y < d.ny; ++y)
                for (std::size_t x = 0; x < d.nx; ++x) dst[grad_in.dims.index(x / 2, y / 2, z / 2)] += src[d.index(x, y, z)];
    }
}

void linear_forward(std::span<const double> in, std::span<const double> weight, std::span<const double> bias, std::span<double> out) {
    const std::size_t n_in = in.size();
    for (std::size_t o = 0; o < out.size(); ++o) {
        double s = bias[o];
        for (std::size_t i = 0; i < n_in; ++i) s += weight[o * n_in + i] * in[i];
        out[o] = s;
    }
}

void linear_backward(std::span<const double> in, std::span<const double> weight, std::span<const double> grad_out,
                     std::span<double> grad_in, std::span<double> grad_weight, std::span<double> grad_bias) {
    const std::size_t n_in = in.size();
    for (std::size_t o = 0; o < grad_out.size(); ++o) {
        const double g = grad_out[o];
        grad_bias[o] += g;
        for (std::size_t i = 0; i < n_in; ++i) {
            grad_weight[o * n_in + i] += g * in[i];
            if (!grad_in.empty()) grad_in[i] += g * weight[o * n_in + i];
        }
    }
}

std::vector<double> timestep_embedding(std::size_t t, std::size_t dim) {
    if (dim == 0 || dim % 2) throw std::invalid_argument("time embedding dim must be a positive even number");
    const std::size_t half = dim / 2;
    std::vector<double> emb(dim);
    for (std::size_t i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
        const double arg = static_cast<double>(t) * freq;
        emb[i] = std::sin(arg);
        emb[i + half] = std::cos(arg);
    }
    return emb;
}

} // namespace powdr::nn
