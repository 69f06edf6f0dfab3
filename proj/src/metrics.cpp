#include "powdr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace powdr {

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) throw std::invalid_argument("cosine similarity needs equal-length inputs");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double x = a[i], y = b[i];
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if (na == 0.0 || nb == 0.0) throw std::invalid_argument("zero vector");
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

double cosine_similarity(const Volume &a, const Volume &b) {
    if (a.dims() != b.dims()) throw std::invalid_argument("cosine similarity needs matching dims");
    return cosine_similarity(a.values(), b.values());
}

std::vector<double> histogram(std::span<const float> values, double lo, double hi, std::size_t bins, double smoothing) {
    if (bins == 0) throw std::invalid_argument("histogram needs at least one bin");
    std::vector<double> h(bins, 0.0);
    const double width = hi - lo;
    for (float v : values) {
        std::size_t b = 0;
        if (width > 0.0) {
            const double pos = (static_cast<double>(v) - lo) / width * static_cast<double>(bins);
            b = pos <= 0.0 ? 0 : std::min(bins - 1, static_cast<std::size_t>(pos));
        }
        h[b] += 1.0;
    }
    double total = 0.0;
    for (auto &c : h) {
        c += smoothing;
        total += c;
    }
    for (auto &c : h) c /= total;
    return h;
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) throw std::invalid_argument("KL needs histograms with equal bin counts");
    double kl = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i)
        if (p[i] > 0.0) kl += p[i] * std::log(p[i] / q[i]);
    return kl;
}

double histogram_kl(std::span<const float> a, std::span<const float> b, std::size_t bins) {
    if (a.empty() || b.empty()) throw std::invalid_argument("KL needs non-empty inputs");
    const auto [amin, amax] = std::minmax_element(a.begin(), a.end());
    const auto [bmin, bmax] = std::minmax_element(b.begin(), b.end());
    const double lo = std::min(*amin, *bmin);
    const double hi = std::max(*amax, *bmax);
    const auto p = histogram(a, lo, hi, bins);
    const auto q = histogram(b, lo, hi, bins);
    // Gibbs' inequality guarantees >= 0; rounding can leave a tiny negative residue.
    return std::max(0.0, kl_divergence(p, q));
}

double histogram_kl(const Volume &a, const Volume &b, std::size_t bins) {
    if (a.dims() != b.dims()) throw std::invalid_argument("KL needs matching dims");
    return histogram_kl(a.values(), b.values(), bins);
}

std::array<double, 3> ms_ssim_weights() {
    constexpr std::array<double, 3> raw{0.0448, 0.2856, 0.3001};
    const double total = raw[0] + raw[1] + raw[2];
    return {raw[0] / total, raw[1] / total, raw[2] / total};
}

namespace {

using Field = std::vector<double>;

std::vector<double> gaussian_taps(const SsimParams &p) {
    const long half = static_cast<long>(p.window / 2);
    std::vector<double> taps(p.window);
    for (long i = -half; i <= half; ++i) taps[i + half] = std::exp(-static_cast<double>(i * i) / (2.0 * p.sigma * p.sigma));
    return taps;
}

// Separable blur along one axis; weights are renormalized over in-bounds taps. Since the window is a
// product of 1D Gaussians over a box-shaped support, this equals the truncated 3D window exactly.
Field blur_axis(const Field &in, const Dims &d, int axis, const std::vector<double> &taps) {
    const long half = static_cast<long>(taps.size() / 2);
    const std::size_t n[3] = {d.nx, d.ny, d.nz};
    const std::size_t stride[3] = {1, d.nx, d.nx * d.ny};
    Field out(in.size());
    for (std::size_t z = 0; z < d.nz; ++z)
        for (std::size_t y = 0; y < d.ny; ++y)
            for (std::size_t x = 0; x < d.nx; ++x) {
                const std::size_t pos[3] = {x, y, z};
                const std::size_t at = d.index(x, y, z);
                double s = 0.0, w = 0.0;
                for (long k = -half; k <= half; ++k) {
                    const long q = static_cast<long>(pos[axis]) + k;
                    if (q < 0 || q >= static_cast<long>(n[axis])) continue;
                    const double tw = taps[k + half];
                    s += tw * in[at + static_cast<std::size_t>(static_cast<long>(stride[axis]) * k)];
                    w += tw;
                }
                out[at] = s / w;
            }
    return out;
}

Field blur(const Field &in, const Dims &d, const std::vector<double> &taps) {
    return blur_axis(blur_axis(blur_axis(in, d, 0, taps), d, 1, taps), d, 2, taps);
}

struct ScaleStats {
    double mean_ssim = 0.0;
    double mean_cs = 0.0;
};

ScaleStats scale_stats(const Field &a, const Field &b, const Dims &d, const std::vector<std::uint8_t> &region, const SsimParams &p) {
    const auto taps = gaussian_taps(p);
    const double c1 = (p.k1 * p.data_range) * (p.k1 * p.data_range);
    const double c2 = (p.k2 * p.data_range) * (p.k2 * p.data_range);
    Field aa(a.size()), bb(a.size()), ab(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        aa[i] = a[i] * a[i];
        bb[i] = b[i] * b[i];
        ab[i] = a[i] * b[i];
    }
    const Field mu_a = blur(a, d, taps), mu_b = blur(b, d, taps);
    const Field e_aa = blur(aa, d, taps), e_bb = blur(bb, d, taps), e_ab = blur(ab, d, taps);

    double sum_ssim = 0.0, sum_cs = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!region[i]) continue;
        const double va = std::max(0.0, e_aa[i] - mu_a[i] * mu_a[i]);
        const double vb = std::max(0.0, e_bb[i] - mu_b[i] * mu_b[i]);
        const double cov = e_ab[i] - mu_a[i] * mu_b[i];
        const double lum = (2.0 * mu_a[i] * mu_b[i] + c1) / (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1);
        const double cs = (2.0 * cov + c2) / (va + vb + c2);
        sum_ssim += lum * cs;
        sum_cs += cs;
        ++count;
    }
    if (count == 0) throw std::invalid_argument("SSIM region is empty");
    return {sum_ssim / static_cast<double>(count), sum_cs / static_cast<double>(count)};
}

std::vector<std::uint8_t> region_bits(const Dims &d, const Mask *mask, Region region) {
    if (region == Region::all || !mask) {
        if (region != Region::all) throw std::invalid_argument("inside/outside SSIM needs a mask");
        return std::vector<std::uint8_t>(d.count(), 1);
    }
    if (mask->dims() != d) throw std::invalid_argument("SSIM mask dims differ from the volumes");
    std::vector<std::uint8_t> bits(d.count());
    for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = ((*mask)[i] == (region == Region::inside)) ? 1 : 0;
    if (std::none_of(bits.begin(), bits.end(), [](std::uint8_t v) { return v != 0; }))
        throw std::invalid_argument(region == Region::inside ? "SSIM inside region is empty" : "SSIM outside region is empty");
    return bits;
}

Field to_field(const Volume &v) { return Field(v.values().begin(), v.values().end()); }

// 2x average pooling; a coarse voxel belongs to the region when any of its children does.
void pool(Field &a, Field &b, std::vector<std::uint8_t> &region, Dims &d) {
    const Dims h{d.nx / 2, d.ny / 2, d.nz / 2};
    Field pa(h.count()), pb(h.count());
    std::vector<std::uint8_t> pr(h.count(), 0);
    for (std::size_t z = 0; z < h.nz; ++z)
        for (std::size_t y = 0; y < h.ny; ++y)
            for (std::size_t x = 0; x < h.nx; ++x) {
                double sa = 0.0, sb = 0.0;
                std::uint8_t any = 0;
                for (std::size_t k = 0; k < 2; ++k)
                    for (std::size_t j = 0; j < 2; ++j)
                        for (std::size_t i = 0; i < 2; ++i) {
                            const std::size_t at = d.index(2 * x + i, 2 * y + j, 2 * z + k);
                            sa += a[at];
                            sb += b[at];
                            any |= region[at];
                        }
                const std::size_t o = h.index(x, y, z);
                pa[o] = sa / 8.0;
                pb[o] = sb / 8.0;
                pr[o] = any;
            }
    a = std::move(pa);
    b = std::move(pb);
    region = std::move(pr);
    d = h;
}

} // namespace

double ssim(const Volume &a, const Volume &b, const Mask *mask, Region region, const SsimParams &p) {
    if (a.dims() != b.dims()) throw std::invalid_argument("SSIM needs matching dims");
    const auto bits = region_bits(a.dims(), mask, region);
    return scale_stats(to_field(a), to_field(b), a.dims(), bits, p).mean_ssim;
}

double ms_ssim(const Volume &a, const Volume &b, const Mask *mask, Region region, const SsimParams &p) {
    if (a.dims() != b.dims()) throw std::invalid_argument("MS-SSIM needs matching dims");
    Dims d = a.dims();
    if (d.nx < 16 || d.ny < 16 || d.nz < 16) throw std::invalid_argument("3-scale MS-SSIM needs dims of at least 16^3, got " + to_string(d));
    auto bits = region_bits(d, mask, region);
    Field fa = to_field(a), fb = to_field(b);
    const auto w = ms_ssim_weights();
    double result = 1.0;
    for (std::size_t s = 0; s < w.size(); ++s) {
        if (s > 0) pool(fa, fb, bits, d);
        const ScaleStats st = scale_stats(fa, fb, d, bits, p);
        const double term = s + 1 < w.size() ? st.mean_cs : st.mean_ssim;
        // Negative terms are clamped so fractional exponents stay real.
        result *= std::pow(std::max(0.0, term), w[s]);
    }
    return result;
}

MeanStd mean_std(std::span<const double> values) {
    if (values.empty()) return {};
    double s = 0.0;
    for (double v : values) s += v;
    const double mean = s / static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    return {mean, std::sqrt(var / static_cast<double>(values.size()))};
}

double ks_statistic(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("KS statistic needs non-empty samples");
    std::vector<double> x(a.begin(), a.end()), y(b.begin(), b.end());
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    // Step both ECDFs past each distinct value before comparing, so ties are handled exactly.
    while (i < x.size() && j < y.size()) {
        const double v = std::min(x[i], y[j]);
        while (i < x.size() && x[i] == v) ++i;
        while (j < y.size() && y[j] == v) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / x.size() - static_cast<double>(j) / y.size()));
    }
    return d;
}

DiversityReport diversity_report(std::span<const Volume> samples, const Mask *mask, std::size_t bins) {
    if (samples.size() < 2) throw std::invalid_argument("diversity report needs at least 2 samples");
    const Dims d = samples.front().dims();
    for (const auto &s : samples)
        if (s.dims() != d) throw std::invalid_argument("diversity samples must share dims");
    if (mask && mask->dims() != d) throw std::invalid_argument("diversity mask dims differ from the samples");

    DiversityReport r;
    r.n_samples = samples.size();
    const double n = static_cast<double>(samples.size());
    std::vector<float> mean(d.count()), sd(d.count());
    for (std::size_t i = 0; i < d.count(); ++i) {
        double s = 0.0;
        for (const auto &v : samples) s += v[i];
        const double m = s / n;
        double var = 0.0;
        for (const auto &v : samples) var += (v[i] - m) * (v[i] - m);
        mean[i] = static_cast<float>(m);
        sd[i] = static_cast<float>(std::sqrt(var / n));
    }
    r.voxelwise_mean = Volume(d, std::move(mean), samples.front().spacing());
    r.voxelwise_std = Volume(d, std::move(sd), samples.front().spacing());

    std::vector<std::vector<float>> outside;
    if (mask) {
        for (const auto &v : samples) {
            std::vector<float> o;
            for (std::size_t i = 0; i < v.size(); ++i)
                if (!(*mask)[i]) o.push_back(v[i]);
            outside.push_back(std::move(o));
        }
        if (outside.front().empty()) throw std::invalid_argument("mask covers every voxel; no outside region");
    }

    std::vector<double> cos, kl, cos_out, kl_out;
    for (std::size_t i = 0; i < samples.size(); ++i)
        for (std::size_t j = i + 1; j < samples.size(); ++j) {
            PairStat ps;
            ps.i = i;
            ps.j = j;
            ps.cosine = cosine_similarity(samples[i], samples[j]);
            ps.kl = histogram_kl(samples[i], samples[j], bins);
            cos.push_back(ps.cosine);
            kl.push_back(ps.kl);
            if (mask) {
                ps.cosine_outside = cosine_similarity(outside[i], outside[j]);
                ps.kl_outside = histogram_kl(outside[i], outside[j], bins);
                cos_out.push_back(*ps.cosine_outside);
                kl_out.push_back(*ps.kl_outside);
            }
            r.pairs.push_back(ps);
        }
    r.pair_count = r.pairs.size();
    r.cosine = mean_std(cos);
    r.kl = mean_std(kl);
    if (mask) {
        r.cosine_outside = mean_std(cos_out);
        r.kl_outside = mean_std(kl_out);
    }
    return r;
}

} // namespace powdr
