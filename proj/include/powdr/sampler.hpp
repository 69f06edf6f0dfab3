#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "powdr/checkpoint.hpp"
#include "powdr/denoiser.hpp"
#include "powdr/schedule.hpp"
#include "powdr/volume.hpp"

namespace powdr {

struct SampleRequest {
    Volume condition_image;
    Mask condition_mask;
    std::size_t steps = 1000;
    std::uint64_t seed = 0;
    bool hard_composite = false;
    std::size_t repeats = 1;
};

/// Weights of the Gaussian posterior q(x_{t-1} | x_t, x0): mean = pred_weight * x0 + xt_weight * x_t.
struct PosteriorCoefficients {
    double pred_weight = 0.0;
    double xt_weight = 0.0;
    double variance = 0.0;
};

PosteriorCoefficients posterior_coefficients(const NoiseSchedule &sched, std::size_t t);

/// x_{t-1} = mean + sigma * z for t > 1; exactly the mean for t = 1.
SubbandTensor reverse_step(const SubbandTensor &x_t, const SubbandTensor &pred_x0, std::size_t t, const NoiseSchedule &sched, Rng &rng);

using X0Predictor = std::function<SubbandTensor(const SubbandTensor &x_t, const SubbandTensor &cond, std::size_t t)>;

/// Full reverse chain from x_T ~ N(0, I) down to x_0, in the subband domain.
SubbandTensor run_reverse_chain(const X0Predictor &predict, const SubbandTensor &cond, const NoiseSchedule &sched, Rng &rng);

/// Noise stream seed for one repeat.
std::uint64_t repeat_seed(std::uint64_t seed, std::size_t repeat);

/// Draws req.repeats volumes conditioned on condition_image * condition_mask.
std::vector<Volume> sample(const Checkpoint &ck, const SampleRequest &req);

/// Single repeat; the result is independent of which other repeats are drawn.
Volume sample_repeat(const Checkpoint &ck, const SampleRequest &req, std::size_t repeat);

} // namespace powdr
