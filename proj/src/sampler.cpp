#include "powdr/sampler.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "powdr/parallel.hpp"
#include "powdr/wavelet.hpp"

namespace powdr {

PosteriorCoefficients posterior_coefficients(const NoiseSchedule &sched, std::size_t t) {
    if (t < 1 || t > sched.steps())
        throw std::out_of_range("timestep " + std::to_string(t) + " outside [1, " + std::to_string(sched.steps()) + "]");
    const double ab_t = sched.alpha_bar(t);
    const double ab_prev = sched.alpha_bar(t - 1);
    const double beta = sched.beta(t);
    PosteriorCoefficients c;
    c.pred_weight = std::sqrt(ab_prev) * beta / (1.0 - ab_t);
    c.xt_weight = std::sqrt(sched.alpha(t)) * (1.0 - ab_prev) / (1.0 - ab_t);
    c.variance = beta * (1.0 - ab_prev) / (1.0 - ab_t);
    return c;
}

SubbandTensor reverse_step(const SubbandTensor &x_t, const SubbandTensor &pred_x0, std::size_t t, const NoiseSchedule &sched, Rng &rng) {
    if (!x_t.same_shape(pred_x0)) throw std::invalid_argument("reverse_step: x_t and prediction shapes differ");
    const PosteriorCoefficients c = posterior_coefficients(sched, t);
    const double sigma = t > 1 ? std::sqrt(c.variance) : 0.0;
    SubbandTensor out(x_t.band_dims());
    for (std::size_t i = 0; i < out.size(); ++i) {
        double v = c.pred_weight * static_cast<double>(pred_x0[i]) + c.xt_weight * static_cast<double>(x_t[i]);
        if (t > 1) v += sigma * rng.normal();
        out[i] = static_cast<float>(v);
    }
    return out;
}

SubbandTensor run_reverse_chain(const X0Predictor &predict, const SubbandTensor &cond, const NoiseSchedule &sched, Rng &rng) {
    SubbandTensor x(cond.band_dims());
    for (auto &v : x.values()) v = static_cast<float>(rng.normal());
    for (std::size_t t = sched.steps(); t >= 1; --t) {
        const SubbandTensor pred = predict(x, cond, t);
        x = reverse_step(x, pred, t, sched, rng);
    }
    return x;
}

std::uint64_t repeat_seed(std::uint64_t seed, std::size_t repeat) { return derive_seed(seed, 0x5A3D0000ull + repeat); }

namespace {

void validate_request(const Checkpoint &ck, const SampleRequest &req) {
    if (req.repeats == 0) throw std::invalid_argument("repeats must be positive");
    if (req.condition_image.dims() != req.condition_mask.dims())
        throw std::invalid_argument("condition mask dims " + to_string(req.condition_mask.dims()) + " differ from image dims " +
                                    to_string(req.condition_image.dims()));
    if (!req.condition_mask.any()) throw std::invalid_argument("condition mask is empty");
    if (!req.condition_image.dims().all_even()) throw std::invalid_argument("condition dims must be even");
    if (req.steps != ck.schedule.steps)
        throw ContractError("requested " + std::to_string(req.steps) + " sampling steps but the checkpoint schedule has T = " +
                            std::to_string(ck.schedule.steps));
    ck.network.check_band_dims(req.condition_image.dims().halved());
}

} // namespace

Volume sample_repeat(const Checkpoint &ck, const SampleRequest &req, std::size_t repeat) {
    validate_request(ck, req);
    const NoiseSchedule sched(ck.schedule);
    const Denoiser net(ck.network);
    DenoiserParams params{ck.params, 0};
    if (params.values.size() != net.param_count()) throw ContractError("checkpoint parameter count does not match its network config");

    const SubbandTensor cond = dwt3(apply_mask(req.condition_image, req.condition_mask));
    Rng rng(repeat_seed(req.seed, repeat));
    const X0Predictor predict = [&](const SubbandTensor &x_t, const SubbandTensor &c, std::size_t t) {
        return net.predict(params, x_t, c, t);
    };
    const SubbandTensor x0 = run_reverse_chain(predict, cond, sched, rng);
    Volume out = idwt3(x0, req.condition_image.spacing());
    if (req.hard_composite)
        for (std::size_t i = 0; i < out.size(); ++i)
            if (req.condition_mask[i]) out[i] = req.condition_image[i];
    return out;
}

std::vector<Volume> sample(const Checkpoint &ck, const SampleRequest &req) {
    validate_request(ck, req);
    std::vector<Volume> out(req.repeats);
    parallel_for(req.repeats, [&](std::size_t r) { out[r] = sample_repeat(ck, req, r); });
    return out;
}

} // namespace powdr
