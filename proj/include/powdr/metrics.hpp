#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "powdr/volume.hpp"

namespace powdr {

/// Normalized dot product of the flattened volumes.
double cosine_similarity(const Volume &a, const Volume &b);
double cosine_similarity(std::span<const float> a, std::span<const float> b);

inline constexpr std::size_t kDefaultBins = 50;
inline constexpr double kHistogramSmoothing = 1e-10;

/// Probability histogram over [lo, hi] with additive smoothing before normalization.
std::vector<double> histogram(std::span<const float> values, double lo, double hi, std::size_t bins, double smoothing = kHistogramSmoothing);

/// sum P log(P / Q), natural log. Both inputs must already be normalized.
double kl_divergence(std::span<const double> p, std::span<const double> q);

/// KL(P_a || Q_b) between intensity histograms binned over the union range of both inputs.
double histogram_kl(std::span<const float> a, std::span<const float> b, std::size_t bins = kDefaultBins);
double histogram_kl(const Volume &a, const Volume &b, std::size_t bins = kDefaultBins);

enum class Region { inside, outside, all };

struct SsimParams {
    std::size_t window = 7;
    double sigma = 1.5;
    double data_range = 1.0;
    double k1 = 0.01;
    double k2 = 0.03;
};

/// Renormalized 3-scale weights from the 5-scale multiscale SSIM set (0.0448, 0.2856, 0.3001).
std::array<double, 3> ms_ssim_weights();

/// Single-scale 3D SSIM with a Gaussian window truncated (and renormalized) at the volume border.
/// With a mask, the local SSIM values are averaged over window centres in the selected region.
double ssim(const Volume &a, const Volume &b, const Mask *mask = nullptr, Region region = Region::all, const SsimParams &p = {});

/// Multi-scale SSIM over 3 scales of 2x average pooling: contrast-structure at every scale, full SSIM at the coarsest.
double ms_ssim(const Volume &a, const Volume &b, const Mask *mask = nullptr, Region region = Region::all, const SsimParams &p = {});

struct PairStat {
    std::size_t i = 0;
    std::size_t j = 0;
    double cosine = 0.0;
    double kl = 0.0;
    std::optional<double> cosine_outside;
    std::optional<double> kl_outside;
};

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;
};

struct DiversityReport {
    std::size_t n_samples = 0;
    std::size_t pair_count = 0;
    MeanStd cosine;
    MeanStd kl;
    std::optional<MeanStd> cosine_outside;
    std::optional<MeanStd> kl_outside;
    Volume voxelwise_mean;
    Volume voxelwise_std;
    std::vector<PairStat> pairs;
};

/// Voxelwise mean and population std plus all N(N-1)/2 pairwise cosine and KL values.
DiversityReport diversity_report(std::span<const Volume> samples, const Mask *mask = nullptr, std::size_t bins = kDefaultBins);

MeanStd mean_std(std::span<const double> values);

/// Two-sample Kolmogorov-Smirnov statistic: sup over x of |F_a(x) - F_b(x)|.
double ks_statistic(std::span<const double> a, std::span<const double> b);

} // namespace powdr
