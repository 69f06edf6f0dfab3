#include "powdr/checkpoint.hpp"

#include <array>
#include <cstdio>
#include <string>

#include "powdr/binary_io.hpp"

namespace powdr {

namespace {

constexpr std::array<char, 4> kMagic{'P', 'W', 'D', 'R'};
// Parameters and moments are stored as float64 so a reloaded model is bit-identical to the trained one.
constexpr std::uint32_t kDtypeFloat64 = 3;
constexpr std::uint32_t kMaxLevels = 16;

} // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint &ck) {
    bin::Writer w;
    w.put_bytes(kMagic.data(), kMagic.size());
    w.put<std::uint32_t>(kCheckpointVersion);

    const DenoiserConfig &n = ck.network;
    w.put<std::uint32_t>(static_cast<std::uint32_t>(n.base_channels));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(n.channel_multipliers.size()));
    for (auto m : n.channel_multipliers) w.put<std::uint32_t>(static_cast<std::uint32_t>(m));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(n.blocks_per_level));
    w.put<double>(n.dropout_rate);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(n.time_embed_dim));
    w.put<std::uint32_t>(n.periodic_padding ? 1u : 0u);

    w.put<std::uint32_t>(static_cast<std::uint32_t>(ck.schedule.steps));
    w.put<double>(ck.schedule.beta_start);
    w.put<double>(ck.schedule.beta_end);

    w.put<std::uint64_t>(ck.iteration);
    w.put<std::uint32_t>(kDtypeFloat64);
    w.put<std::uint64_t>(ck.params.size());
    w.put<std::uint32_t>(ck.optimizer ? 1u : 0u);
    w.put_span(std::span<const double>(ck.params));
    if (ck.optimizer) {
        if (ck.optimizer->m.size() != ck.params.size() || ck.optimizer->v.size() != ck.params.size())
            throw std::invalid_argument("optimizer moments do not match the parameter count");
        w.put<std::uint64_t>(ck.optimizer->step);
        w.put_span(std::span<const double>(ck.optimizer->m));
        w.put_span(std::span<const double>(ck.optimizer->v));
    }
    return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
    bin::Reader r(bytes);
    std::array<char, 4> magic{};
    r.get_bytes(magic.data(), magic.size(), "magic");
    if (magic != kMagic) r.fail_at("bad magic, expected \"PWDR\"", 0);
    const auto version_at = r.offset();
    if (r.get<std::uint32_t>("version") != kCheckpointVersion) r.fail_at("unsupported checkpoint version", version_at);

    Checkpoint ck;
    DenoiserConfig &n = ck.network;
    n.base_channels = r.get<std::uint32_t>("base_channels");
    const auto levels_at = r.offset();
    const auto levels = r.get<std::uint32_t>("level count");
    if (levels == 0 || levels > kMaxLevels) r.fail_at("implausible level count", levels_at);
    n.channel_multipliers.resize(levels);
    for (auto &m : n.channel_multipliers) m = r.get<std::uint32_t>("channel multiplier");
    n.blocks_per_level = r.get<std::uint32_t>("blocks_per_level");
    n.dropout_rate = r.get<double>("dropout_rate");
    n.time_embed_dim = r.get<std::uint32_t>("time_embed_dim");
    n.periodic_padding = r.get<std::uint32_t>("padding flag") != 0;
    const auto config_end = r.offset();
    try {
        n.validate();
    } catch (const std::invalid_argument &e) {
        r.fail_at(std::string("invalid network config: ") + e.what(), config_end);
    }

    ck.schedule.steps = r.get<std::uint32_t>("schedule steps");
    ck.schedule.beta_start = r.get<double>("beta_start");
    ck.schedule.beta_end = r.get<double>("beta_end");

    ck.iteration = r.get<std::uint64_t>("iteration");
    const auto dtype_at = r.offset();
    if (r.get<std::uint32_t>("dtype") != kDtypeFloat64) r.fail_at("unsupported parameter dtype", dtype_at);
    const auto count_at = r.offset();
    const auto count = r.get<std::uint64_t>("parameter count");
    const auto has_opt = r.get<std::uint32_t>("optimizer flag");
    if (count != Denoiser(n).param_count()) r.fail_at("parameter count does not match the stored network config", count_at);

    ck.params.resize(count);
    r.get_span(std::span<double>(ck.params), "parameters");
    if (has_opt) {
        OptimizerState st;
        st.step = r.get<std::uint64_t>("optimizer step");
        st.m.resize(count);
        st.v.resize(count);
        r.get_span(std::span<double>(st.m), "first moments");
        r.get_span(std::span<double>(st.v), "second moments");
        ck.optimizer = std::move(st);
    }
    if (r.remaining() != 0) r.fail("trailing bytes after checkpoint payload");
    return ck;
}

void write_checkpoint(const Checkpoint &ck, const std::filesystem::path &path) { write_file_atomic(path, encode_checkpoint(ck)); }

Checkpoint read_checkpoint(const std::filesystem::path &path) { return decode_checkpoint(read_file_bytes(path)); }

void require_schedule(const Checkpoint &ck, const ScheduleParams &expected) {
    if (ck.schedule != expected)
        throw ContractError("checkpoint schedule (T=" + std::to_string(ck.schedule.steps) + ", beta " + std::to_string(ck.schedule.beta_start) +
                            ".." + std::to_string(ck.schedule.beta_end) + ") does not match the requested schedule (T=" +
                            std::to_string(expected.steps) + ", beta " + std::to_string(expected.beta_start) + ".." +
                            std::to_string(expected.beta_end) + ")");
}

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (auto b : bytes) {
        h ^= b;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

} // namespace powdr
