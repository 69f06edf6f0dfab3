#pragma once

// Building blocks of the denoiser. Each layer is a pair of free functions: a forward pass and
// the matching reverse-mode pass. Backward functions accumulate (+=) into gradient buffers.

#include <cstddef>
#include <span>
#include <vector>

#include "powdr/rng.hpp"
#include "powdr/volume.hpp"

namespace powdr::nn {

/// Multi-channel activation, channel-major then x-fastest.
struct Tensor {
    std::size_t channels = 0;
    Dims dims;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::size_t c, Dims d) : channels(c), dims(d), data(c * d.count(), 0.0) {}

    std::size_t voxels() const noexcept { return dims.count(); }
    std::span<double> channel(std::size_t c) noexcept { return std::span<double>(data).subspan(c * voxels(), voxels()); }
    std::span<const double> channel(std::size_t c) const noexcept {
        return std::span<const double>(data).subspan(c * voxels(), voxels());
    }
};

enum class Padding { zero, periodic };

/// 3D convolution with cubic kernel, padding kernel/2 and the given stride.
/// Weights are laid out [cout][cin][kz][ky][kx]; bias is [cout].
struct Conv3dShape {
    std::size_t cin = 0;
    std::size_t cout = 0;
    std::size_t kernel = 3;
    std::size_t stride = 1;
    Padding padding = Padding::zero;

    std::size_t weight_count() const noexcept { return cout * cin * kernel * kernel * kernel; }
    std::size_t fan_in() const noexcept { return cin * kernel * kernel * kernel; }
    Dims output_dims(const Dims &in) const;
};

Tensor conv3d_forward(const Conv3dShape &shape, const Tensor &in, std::span<const double> weight, std::span<const double> bias);

/// grad_in may be null when the input gradient is not needed.
void conv3d_backward(const Conv3dShape &shape, const Tensor &in, std::span<const double> weight, const Tensor &grad_out,
                     Tensor *grad_in, std::span<double> grad_weight, std::span<double> grad_bias);

double silu(double x) noexcept;
double silu_grad(double x) noexcept;
void silu_forward(std::span<const double> in, std::span<double> out);
/// grad_in += grad_out * silu'(in)
void silu_backward(std::span<const double> in, std::span<const double> grad_out, std::span<double> grad_in);

/// Inverted dropout: survivors are scaled by 1/(1-rate). keep[i] records the scale (0 or 1/(1-rate)).
void dropout_forward(std::span<const double> in, double rate, Rng &rng, std::span<double> out, std::span<double> keep);
void dropout_backward(std::span<const double> keep, std::span<const double> grad_out, std::span<double> grad_in);

/// Nearest-neighbour 2x upsampling.
Tensor upsample2_forward(const Tensor &in);
void upsample2_backward(const Tensor &grad_out, Tensor &grad_in);

/// Dense layer, weight laid out [out][in].
void linear_forward(std::span<const double> in, std::span<const double> weight, std::span<const double> bias, std::span<double> out);
void linear_backward(std::span<const double> in, std::span<const double> weight, std::span<const double> grad_out,
                     std::span<double> grad_in, std::span<double> grad_weight, std::span<double> grad_bias);

/// Sinusoidal embedding of a timestep: [sin(t w_i) ..., cos(t w_i) ...], w_i = 10000^(-i/(dim/2)).
std::vector<double> timestep_embedding(std::size_t t, std::size_t dim);

} // namespace powdr::nn
