#pragma once

#include <cstddef>
#include <vector>

#include "powdr/wavelet.hpp"

namespace powdr {

struct ScheduleParams {
    std::size_t steps = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    bool operator==(const ScheduleParams &) const = default;
};

/// Linear variance schedule. Arrays are indexed by step t in [0, T]; index 0 holds the
/// alpha_bar = 1 convention (beta[0] and alpha[0] are unused placeholders).
class NoiseSchedule {
public:
    explicit NoiseSchedule(const ScheduleParams &p);

    std::size_t steps() const noexcept { return params_.steps; }
    const ScheduleParams &params() const noexcept { return params_; }

    double beta(std::size_t t) const { return beta_.at(t); }
    double alpha(std::size_t t) const { return alpha_.at(t); }
    double alpha_bar(std::size_t t) const { return alpha_bar_.at(t); }

private:
    ScheduleParams params_;
    std::vector<double> beta_;
    std::vector<double> alpha_;
    std::vector<double> alpha_bar_;
};

NoiseSchedule linear_schedule(std::size_t steps, double beta_start, double beta_end);

/// x_t = sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps, for t in [1, T].
SubbandTensor forward_noise(const SubbandTensor &x0, std::size_t t, const SubbandTensor &eps, const NoiseSchedule &sched);

/// Same closed form with an explicit alpha_bar; t = 0 corresponds to alpha_bar = 1.
SubbandTensor forward_noise_with(const SubbandTensor &x0, double alpha_bar, const SubbandTensor &eps);

} // namespace powdr
