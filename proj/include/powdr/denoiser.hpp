#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "powdr/layers.hpp"
#include "powdr/rng.hpp"
#include "powdr/wavelet.hpp"

namespace powdr {

/// Contract violation in the network API (stale cache, wrong mode, mismatched parameters).
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

struct DenoiserConfig {
    static constexpr std::size_t in_channels = 16;
    static constexpr std::size_t out_channels = 8;

    std::size_t base_channels = 8;
    std::vector<std::size_t> channel_multipliers{1, 2};
    std::size_t blocks_per_level = 1;
    double dropout_rate = 0.1;
    std::size_t time_embed_dim = 32;
    /// Test-only: wrap-around padding so the conv path is exactly shift-equivariant.
    bool periodic_padding = false;

    std::size_t levels() const noexcept { return channel_multipliers.size(); }
    std::size_t channels_at(std::size_t level) const { return base_channels * channel_multipliers.at(level); }
    void validate() const;
    /// Throws unless every band dim is divisible by 2^(levels-1).
    void check_band_dims(const Dims &band) const;
    bool operator==(const DenoiserConfig &) const = default;
};

/// Full-scale configuration (base 64, multipliers 1,2,2,4,4). Recorded for reference; desk runs use the defaults.
DenoiserConfig full_scale_config();

struct ParamEntry {
    std::string name;
    std::size_t offset = 0;
    std::vector<std::size_t> shape;
    std::size_t count = 0;
};

class ParamLayout {
public:
    ParamEntry add(std::string name, std::vector<std::size_t> shape);
    const ParamEntry &at(const std::string &name) const;
    const std::vector<ParamEntry> &entries() const noexcept { return entries_; }
    std::size_t total() const noexcept { return total_; }

private:
    std::vector<ParamEntry> entries_;
    std::size_t total_ = 0;
};

/// Flat parameter store. generation is bumped by every in-place update so caches can detect staleness.
struct DenoiserParams {
    std::vector<double> values;
    std::uint64_t generation = 0;

    std::span<const double> slice(const ParamEntry &e) const { return std::span<const double>(values).subspan(e.offset, e.count); }
    std::span<double> slice(const ParamEntry &e) { return std::span<double>(values).subspan(e.offset, e.count); }
    void touch() noexcept { ++generation; }
};

enum class Mode { train, eval };

/// Activations recorded by a train-mode forward pass, consumed by backward.
struct ActivationCache {
    struct Block {
        nn::Tensor input;
        nn::Tensor pre1;  // conv1 output plus time bias, before the second SiLU
        nn::Tensor act1;  // input to conv2 (after dropout)
        std::vector<double> keep;
    };
    struct Resample {
        nn::Tensor input;
    };

    std::uint64_t generation = 0;
    std::size_t param_count = 0;
    bool valid = false;
    std::size_t timestep = 0;

    std::vector<double> embed;    // sinusoidal embedding
    std::vector<double> hidden;   // first MLP layer pre-activation
    std::vector<double> temb;     // MLP output
    std::vector<double> temb_act; // SiLU(temb), shared by every block's bias projection
    nn::Tensor stem_input;        // 16-channel concatenation
    std::vector<Block> blocks;    // encoder then decoder, in execution order
    std::vector<Resample> downs;  // per level > 0
    std::vector<Resample> ups;    // per decoder level, input to the post-upsample conv
    nn::Tensor head_input;        // pre-SiLU input to the output conv
};

class Denoiser {
public:
    explicit Denoiser(DenoiserConfig cfg);

    const DenoiserConfig &config() const noexcept { return cfg_; }
    const ParamLayout &layout() const noexcept { return layout_; }
    std::size_t param_count() const noexcept { return layout_.total(); }

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases, zero output convolution.
    DenoiserParams init_params(Rng &rng) const;

    /// Predicts the clean subbands x0 from [x_t, c] at step t. Train mode applies dropout (drawn from rng)
    /// and, if cache is given, records what backward needs. Eval mode ignores rng.
    nn::Tensor forward(const DenoiserParams &params, const SubbandTensor &x_t, const SubbandTensor &cond, std::size_t t, Mode mode,
                       Rng *rng, ActivationCache *cache) const;

    SubbandTensor predict(const DenoiserParams &params, const SubbandTensor &x_t, const SubbandTensor &cond, std::size_t t) const;

    /// Gradient of sum(grad_out * output) with respect to every parameter; returned zero-initialized.
    std::vector<double> backward(const DenoiserParams &params, const ActivationCache &cache, const nn::Tensor &grad_out) const;

private:
    struct BlockParams {
        ParamEntry conv1_w, conv1_b, conv2_w, conv2_b, temb_w, temb_b;
    };
    struct ConvParams {
        ParamEntry w, b;
        nn::Conv3dShape shape;
    };

    ConvParams conv(const std::string &name, std::size_t cin, std::size_t cout, std::size_t stride);
    BlockParams block(const std::string &name, std::size_t channels);
    nn::Conv3dShape shape(std::size_t cin, std::size_t cout, std::size_t stride) const;

    nn::Tensor block_forward(const DenoiserParams &p, const BlockParams &b, std::size_t channels, const nn::Tensor &x,
                             std::span<const double> temb_act, Mode mode, Rng *rng, ActivationCache::Block *rec) const;

    DenoiserConfig cfg_;
    ParamLayout layout_;
    ParamEntry fc1_w_, fc1_b_, fc2_w_, fc2_b_;
    ConvParams stem_;
    std::vector<ConvParams> downs_;             // downs_[l-1] maps level l-1 -> l
    std::vector<std::vector<BlockParams>> enc_; // per level
    std::vector<ConvParams> ups_;               // ups_[l] maps level l+1 -> l
    std::vector<std::vector<BlockParams>> dec_; // per level < levels-1
    ConvParams head_;
    std::vector<std::size_t> fan_in_; // per layout entry; 0 marks a zero-initialized entry
};

} // namespace powdr
