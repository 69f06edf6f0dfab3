#include "powdr/schedule.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace powdr {

NoiseSchedule::NoiseSchedule(const ScheduleParams &p) : params_(p) {
    if (p.steps < 1) throw std::invalid_argument("schedule needs at least one step");
    if (!(p.beta_start > 0.0 && p.beta_start < p.beta_end && p.beta_end < 1.0))
        throw std::invalid_argument("schedule requires 0 < beta_start < beta_end < 1");

    const std::size_t T = p.steps;
    beta_.assign(T + 1, 0.0);
    alpha_.assign(T + 1, 1.0);
    alpha_bar_.assign(T + 1, 1.0);
    for (std::size_t t = 1; t <= T; ++t) {
        beta_[t] = T == 1 ? p.beta_start
                          : p.beta_start + static_cast<double>(t - 1) / static_cast<double>(T - 1) * (p.beta_end - p.beta_start);
        alpha_[t] = 1.0 - beta_[t];
        alpha_bar_[t] = alpha_bar_[t - 1] * alpha_[t];
    }
    beta_[T] = T == 1 ? p.beta_start : p.beta_end;
    alpha_[T] = 1.0 - beta_[T];
    alpha_bar_[T] = alpha_bar_[T - 1] * alpha_[T];
}

NoiseSchedule linear_schedule(std::size_t steps, double beta_start, double beta_end) {
    return NoiseSchedule(ScheduleParams{steps, beta_start, beta_end});
}

SubbandTensor forward_noise_with(const SubbandTensor &x0, double alpha_bar, const SubbandTensor &eps) {
    if (!x0.same_shape(eps)) throw std::invalid_argument("forward_noise: x0 and eps shapes differ");
    if (!(alpha_bar >= 0.0 && alpha_bar <= 1.0)) throw std::invalid_argument("alpha_bar must lie in [0, 1]");
    const double signal = std::sqrt(alpha_bar);
    const double noise = std::sqrt(1.0 - alpha_bar);
    SubbandTensor out(x0.band_dims());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<float>(signal * static_cast<double>(x0[i]) + noise * static_cast<double>(eps[i]));
    return out;
}

SubbandTensor forward_noise(const SubbandTensor &x0, std::size_t t, const SubbandTensor &eps, const NoiseSchedule &sched) {
    if (t < 1 || t > sched.steps())
        throw std::out_of_range("timestep " + std::to_string(t) + " outside [1, " + std::to_string(sched.steps()) + "]");
    return forward_noise_with(x0, sched.alpha_bar(t), eps);
}

} // namespace powdr
