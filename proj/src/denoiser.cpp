#include "powdr/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace powdr {

void DenoiserConfig::validate() const {
    if (base_channels == 0) throw std::invalid_argument("base_channels must be positive");
    if (channel_multipliers.empty()) throw std::invalid_argument("channel_multipliers must not be empty");
    for (auto m : channel_multipliers)
        if (m == 0) throw std::invalid_argument("channel multipliers must be positive");
    if (blocks_per_level == 0) throw std::invalid_argument("blocks_per_level must be positive");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw std::invalid_argument("dropout_rate must lie in [0, 1)");
    if (time_embed_dim == 0 || time_embed_dim % 2) throw std::invalid_argument("time_embed_dim must be a positive even number");
}

void DenoiserConfig::check_band_dims(const Dims &band) const {
    const std::size_t div = std::size_t{1} << (levels() - 1);
    if (band.nx % div || band.ny % div || band.nz % div)
        throw std::invalid_argument("subband dims " + to_string(band) + " must be divisible by " + std::to_string(div) + " for " +
                                    std::to_string(levels()) + " levels");
}

DenoiserConfig full_scale_config() {
    DenoiserConfig cfg;
    cfg.base_channels = 64;
    cfg.channel_multipliers = {1, 2, 2, 4, 4};
    cfg.blocks_per_level = 2;
    cfg.dropout_rate = 0.1;
    cfg.time_embed_dim = 256;
    return cfg;
}

ParamEntry ParamLayout::add(std::string name, std::vector<std::size_t> shape) {
    ParamEntry e;
    e.name = std::move(name);
    e.offset = total_;
    e.count = std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
    e.shape = std::move(shape);
    total_ += e.count;
    entries_.push_back(e);
    return e;
}

const ParamEntry &ParamLayout::at(const std::string &name) const {
    for (const auto &e : entries_)
        if (e.name == name) return e;
    throw std::out_of_range("no parameter named " + name);
}

nn::Conv3dShape Denoiser::shape(std::size_t cin, std::size_t cout, std::size_t stride) const {
    nn::Conv3dShape s;
    s.cin = cin;
    s.cout = cout;
    s.kernel = 3;
    s.stride = stride;
    s.padding = cfg_.periodic_padding ? nn::Padding::periodic : nn::Padding::zero;
    return s;
}

Denoiser::ConvParams Denoiser::conv(const std::string &name, std::size_t cin, std::size_t cout, std::size_t stride) {
    ConvParams c;
    c.shape = shape(cin, cout, stride);
    c.w = layout_.add(name + ".weight", {cout, cin, 3, 3, 3});
    fan_in_.push_back(c.shape.fan_in());
    c.b = layout_.add(name + ".bias", {cout});
    fan_in_.push_back(0);
    return c;
}

Denoiser::BlockParams Denoiser::block(const std::string &name, std::size_t channels) {
    BlockParams b;
    const auto c1 = conv(name + ".conv1", channels, channels, 1);
    b.conv1_w = c1.w;
    b.conv1_b = c1.b;
    b.temb_w = layout_.add(name + ".temb.weight", {channels, cfg_.time_embed_dim});
    fan_in_.push_back(cfg_.time_embed_dim);
    b.temb_b = layout_.add(name + ".temb.bias", {channels});
    fan_in_.push_back(0);
    const auto c2 = conv(name + ".conv2", channels, channels, 1);
    b.conv2_w = c2.w;
    b.conv2_b = c2.b;
    return b;
}

Denoiser::Denoiser(DenoiserConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    const std::size_t e = cfg_.time_embed_dim;
    fc1_w_ = layout_.add("time.fc1.weight", {e, e});
    fan_in_.push_back(e);
    fc1_b_ = layout_.add("time.fc1.bias", {e});
    fan_in_.push_back(0);
    fc2_w_ = layout_.add("time.fc2.weight", {e, e});
    fan_in_.push_back(e);
    fc2_b_ = layout_.add("time.fc2.bias", {e});
    fan_in_.push_back(0);

    const std::size_t levels = cfg_.levels();
    stem_ = conv("stem", DenoiserConfig::in_channels, cfg_.channels_at(0), 1);
    enc_.resize(levels);
    for (std::size_t l = 0; l < levels; ++l) {
        if (l > 0) downs_.push_back(conv("down" + std::to_string(l), cfg_.channels_at(l - 1), cfg_.channels_at(l), 2));
        for (std::size_t b = 0; b < cfg_.blocks_per_level; ++b)
            enc_[l].push_back(block("enc" + std::to_string(l) + ".block" + std::to_string(b), cfg_.channels_at(l)));
    }
    ups_.resize(levels - 1);
    dec_.resize(levels - 1);
    for (std::size_t k = 0; k + 1 < levels; ++k) {
        const std::size_t l = levels - 2 - k;
        ups_[l] = conv("up" + std::to_string(l), cfg_.channels_at(l + 1), cfg_.channels_at(l), 1);
        for (std::size_t b = 0; b < cfg_.blocks_per_level; ++b)
            dec_[l].push_back(block("dec" + std::to_string(l) + ".block" + std::to_string(b), cfg_.channels_at(l)));
    }
    head_ = conv("head", cfg_.channels_at(0), DenoiserConfig::out_channels, 1);
    fan_in_[fan_in_.size() - 2] = 0;
}

DenoiserParams Denoiser::init_params(Rng &rng) const {
    DenoiserParams p;
    p.values.assign(layout_.total(), 0.0);
    const auto &entries = layout_.entries();
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (fan_in_[i] == 0) continue;
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in_[i]));
        for (auto &v : p.slice(entries[i])) v = rng.uniform(-bound, bound);
    }
    return p;
}

nn::Tensor Denoiser::block_forward(const DenoiserParams &p, const BlockParams &b, std::size_t channels, const nn::Tensor &x,
                                   std::span<const double> temb_act, Mode mode, Rng *rng, ActivationCache::Block *rec) const {
    nn::Tensor a(channels, x.dims);
    nn::silu_forward(x.data, a.data);
    nn::Tensor h = nn::conv3d_forward(shape(channels, channels, 1), a, p.slice(b.conv1_w), p.slice(b.conv1_b));

    std::vector<double> tbias(channels);
    nn::linear_forward(temb_act, p.slice(b.temb_w), p.slice(b.temb_b), tbias);
    for (std::size_t c = 0; c < channels; ++c)
        for (auto &v : h.channel(c)) v += tbias[c];

    nn::Tensor act(channels, x.dims);
    nn::silu_forward(h.data, act.data);
    std::vector<double> keep;
    if (mode == Mode::train && cfg_.dropout_rate > 0.0) {
        if (!rng) throw ContractError("train-mode forward with dropout needs an rng");
        keep.resize(act.data.size());
        nn::dropout_forward(act.data, cfg_.dropout_rate, *rng, act.data, keep);
    }

    nn::Tensor out = nn::conv3d_forward(shape(channels, channels, 1), act, p.slice(b.conv2_w), p.slice(b.conv2_b));
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += x.data[i];

    if (rec) {
        rec->input = x;
        rec->pre1 = std::move(h);
        rec->act1 = std::move(act);
        rec->keep = std::move(keep);
    }
    return out;
}

nn::Tensor Denoiser::forward(const DenoiserParams &params, const SubbandTensor &x_t, const SubbandTensor &cond, std::size_t t, Mode mode,
                             Rng *rng, ActivationCache *cache) const {
    if (params.values.size() != layout_.total())
        throw ContractError("parameter vector has " + std::to_string(params.values.size()) + " entries, layout needs " +
                            std::to_string(layout_.total()));
    if (!x_t.same_shape(cond))
        throw std::invalid_argument("x_t dims " + to_string(x_t.band_dims()) + " differ from condition dims " + to_string(cond.band_dims()));
    if (t < 1) throw std::invalid_argument("timestep must be >= 1");
    cfg_.check_band_dims(x_t.band_dims());
    if (cache && mode != Mode::train) throw ContractError("activation caches are recorded only in train mode");

    ActivationCache *rec = cache;
    if (rec) {
        *rec = ActivationCache{};
        rec->blocks.reserve(cfg_.blocks_per_level * (2 * cfg_.levels() - 1));
    }

    const std::size_t e = cfg_.time_embed_dim;
    std::vector<double> embed = nn::timestep_embedding(t, e);
    std::vector<double> hidden(e), hidden_act(e), temb(e), temb_act(e);
    nn::linear_forward(embed, params.slice(fc1_w_), params.slice(fc1_b_), hidden);
    nn::silu_forward(hidden, hidden_act);
    nn::linear_forward(hidden_act, params.slice(fc2_w_), params.slice(fc2_b_), temb);
    nn::silu_forward(temb, temb_act);

    const Dims band = x_t.band_dims();
    nn::Tensor stem_in(DenoiserConfig::in_channels, band);
    const std::size_t n = band.count();
    for (std::size_t i = 0; i < kSubbands * n; ++i) {
        stem_in.data[i] = x_t[i];
        stem_in.data[kSubbands * n + i] = cond[i];
    }
    nn::Tensor h = nn::conv3d_forward(stem_.shape, stem_in, params.slice(stem_.w), params.slice(stem_.b));

    const std::size_t levels = cfg_.levels();
    std::vector<nn::Tensor> skips(levels);
    for (std::size_t l = 0; l < levels; ++l) {
        if (l > 0) {
            const auto &d = downs_[l - 1];
            if (rec) rec->downs.push_back({h});
            h = nn::conv3d_forward(d.shape, h, params.slice(d.w), params.slice(d.b));
        }
        for (const auto &b : enc_[l]) {
            ActivationCache::Block *brec = nullptr;
            if (rec) brec = &rec->blocks.emplace_back();
            h = block_forward(params, b, cfg_.channels_at(l), h, temb_act, mode, rng, brec);
        }
        if (l + 1 < levels) skips[l] = h;
    }
    for (std::size_t k = 0; k + 1 < levels; ++k) {
        const std::size_t l = levels - 2 - k;
        nn::Tensor up = nn::upsample2_forward(h);
        const auto &u = ups_[l];
        h = nn::conv3d_forward(u.shape, up, params.slice(u.w), params.slice(u.b));
        if (rec) rec->ups.push_back({std::move(up)});
        for (std::size_t i = 0; i < h.data.size(); ++i) h.data[i] += skips[l].data[i];
        for (const auto &b : dec_[l]) {
            ActivationCache::Block *brec = nullptr;
            if (rec) brec = &rec->blocks.emplace_back();
            h = block_forward(params, b, cfg_.channels_at(l), h, temb_act, mode, rng, brec);
        }
    }

    nn::Tensor head_act(h.channels, h.dims);
    nn::silu_forward(h.data, head_act.data);
    nn::Tensor out = nn::conv3d_forward(head_.shape, head_act, params.slice(head_.w), params.slice(head_.b));

    if (rec) {
        rec->generation = params.generation;
        rec->param_count = params.values.size();
        rec->timestep = t;
        rec->embed = std::move(embed);
        rec->hidden = std::move(hidden);
        rec->temb = std::move(temb);
        rec->temb_act = std::move(temb_act);
        rec->stem_input = std::move(stem_in);
        rec->head_input = std::move(h);
        rec->valid = true;
    }
    return out;
}

SubbandTensor Denoiser::predict(const DenoiserParams &params, const SubbandTensor &x_t, const SubbandTensor &cond, std::size_t t) const {
    const nn::Tensor out = forward(params, x_t, cond, t, Mode::eval, nullptr, nullptr);
    std::vector<float> data(out.data.size());
    std::transform(out.data.begin(), out.data.end(), data.begin(), [](double v) { return static_cast<float>(v); });
    return SubbandTensor(x_t.band_dims(), std::move(data));
}

std::vector<double> Denoiser::backward(const DenoiserParams &params, const ActivationCache &cache, const nn::Tensor &grad_out) const {
    if (!cache.valid) throw ContractError("backward called without a train-mode forward cache");
    if (cache.param_count != params.values.size() || cache.generation != params.generation)
        throw ContractError("activation cache is stale: parameters changed since the forward pass");
    if (grad_out.channels != DenoiserConfig::out_channels || grad_out.dims != cache.stem_input.dims)
        throw ContractError("output gradient shape does not match the cached forward pass");

    std::vector<double> grads(layout_.total(), 0.0);
    const auto gslice = [&grads](const ParamEntry &e) { return std::span<double>(grads).subspan(e.offset, e.count); };
    const std::size_t levels = cfg_.levels();
    const std::size_t e = cfg_.time_embed_dim;
    std::vector<double> g_temb_act(e, 0.0);

    const auto run_block = [&](const BlockParams &b, std::size_t channels, const ActivationCache::Block &rec, nn::Tensor &grad) {
        nn::Tensor g_in = grad; // residual path
        const auto conv_shape = shape(channels, channels, 1);
        nn::Tensor g_act(channels, rec.input.dims);
        nn::conv3d_backward(conv_shape, rec.act1, params.slice(b.conv2_w), grad, &g_act, gslice(b.conv2_w), gslice(b.conv2_b));

        nn::Tensor g_pre(channels, rec.input.dims);
        if (!rec.keep.empty()) {
            std::vector<double> g_drop(g_act.data.size(), 0.0);
            nn::dropout_backward(rec.keep, g_act.data, g_drop);
            nn::silu_backward(rec.pre1.data, g_drop, g_pre.data);
        } else {
            nn::silu_backward(rec.pre1.data, g_act.data, g_pre.data);
        }

        std::vector<double> g_tbias(channels, 0.0);
        for (std::size_t c = 0; c < channels; ++c)
            for (double v : g_pre.channel(c)) g_tbias[c] += v;
        nn::linear_backward(cache.temb_act, params.slice(b.temb_w), g_tbias, g_temb_act, gslice(b.temb_w), gslice(b.temb_b));

        nn::Tensor a(channels, rec.input.dims);
        nn::silu_forward(rec.input.data, a.data);
        nn::Tensor g_a(channels, rec.input.dims);
        nn::conv3d_backward(conv_shape, a, params.slice(b.conv1_w), g_pre, &g_a, gslice(b.conv1_w), gslice(b.conv1_b));
        nn::silu_backward(rec.input.data, g_a.data, g_in.data);
        grad = std::move(g_in);
    };

    // Head: out = conv(silu(h)).
    const nn::Tensor &h_last = cache.head_input;
    nn::Tensor head_act(h_last.channels, h_last.dims);
    nn::silu_forward(h_last.data, head_act.data);
    nn::Tensor g_head_act(h_last.channels, h_last.dims);
    nn::conv3d_backward(head_.shape, head_act, params.slice(head_.w), grad_out, &g_head_act, gslice(head_.w), gslice(head_.b));
    nn::Tensor g(h_last.channels, h_last.dims);
    nn::silu_backward(h_last.data, g_head_act.data, g.data);

    // Blocks were recorded encoder-first in execution order; walk them backwards.
    std::size_t block_idx = cache.blocks.size();
    std::vector<nn::Tensor> skip_grads(levels);
    for (std::size_t k = levels - 1; k-- > 0;) {
        const std::size_t l = levels - 2 - k;
        for (std::size_t b = dec_[l].size(); b-- > 0;) run_block(dec_[l][b], cfg_.channels_at(l), cache.blocks[--block_idx], g);
        skip_grads[l] = g;
        const auto &u = ups_[l];
        const nn::Tensor &up_in = cache.ups[k].input;
        nn::Tensor g_up(up_in.channels, up_in.dims);
        nn::conv3d_backward(u.shape, up_in, params.slice(u.w), g, &g_up, gslice(u.w), gslice(u.b));
        nn::Tensor g_low(up_in.channels, up_in.dims.halved());
        nn::upsample2_backward(g_up, g_low);
        g = std::move(g_low);
    }
    for (std::size_t l = levels; l-- > 0;) {
        if (l + 1 < levels)
            for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] += skip_grads[l].data[i];
        for (std::size_t b = enc_[l].size(); b-- > 0;) run_block(enc_[l][b], cfg_.channels_at(l), cache.blocks[--block_idx], g);
        if (l > 0) {
            const auto &d = downs_[l - 1];
            const nn::Tensor &d_in = cache.downs[l - 1].input;
            nn::Tensor g_in(d_in.channels, d_in.dims);
            nn::conv3d_backward(d.shape, d_in, params.slice(d.w), g, &g_in, gslice(d.w), gslice(d.b));
            g = std::move(g_in);
        }
    }
    nn::conv3d_backward(stem_.shape, cache.stem_input, params.slice(stem_.w), g, nullptr, gslice(stem_.w), gslice(stem_.b));

    // Time MLP: temb_act = silu(fc2(silu(fc1(embed)))).
    std::vector<double> g_temb(e, 0.0);
    nn::silu_backward(cache.temb, g_temb_act, g_temb);
    std::vector<double> hidden_act(e);
    nn::silu_forward(cache.hidden, hidden_act);
    std::vector<double> g_hidden_act(e, 0.0);
    nn::linear_backward(hidden_act, params.slice(fc2_w_), g_temb, g_hidden_act, gslice(fc2_w_), gslice(fc2_b_));
    std::vector<double> g_hidden(e, 0.0);
    nn::silu_backward(cache.hidden, g_hidden_act, g_hidden);
    nn::linear_backward(cache.embed, params.slice(fc1_w_), g_hidden, {}, gslice(fc1_w_), gslice(fc1_b_));
    return grads;
}

} // namespace powdr
