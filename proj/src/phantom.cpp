#include "powdr/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "powdr/maskgen.hpp"
#include "powdr/rng.hpp"

namespace powdr {

void PhantomSpec::validate() const {
    if (dims.count() == 0 || !dims.all_even()) throw std::invalid_argument("phantom dims must be positive and even, got " + to_string(dims));
    if (n_cases == 0) throw std::invalid_argument("phantom count must be positive");
    if (lesion_volume_range.first == 0 || lesion_volume_range.first > lesion_volume_range.second)
        throw std::invalid_argument("lesion volume range must satisfy 1 <= min <= max");
    if (!(texture_amplitude >= 0.0 && texture_amplitude <= 0.5)) throw std::invalid_argument("texture amplitude must lie in [0, 0.5]");
}

namespace {

struct Ellipsoid {
    double cx, cy, cz;
    double ax, ay, az;

    bool contains(double x, double y, double z) const {
        const double dx = (x - cx) / ax, dy = (y - cy) / ay, dz = (z - cz) / az;
        return dx * dx + dy * dy + dz * dz <= 1.0;
    }
};

struct CosineMode {
    double fx, fy, fz, phase, amplitude;
};

constexpr int kLesionAttempts = 8;

} // namespace

Phantom generate_phantom_with_head(const PhantomSpec &spec, std::size_t case_index) {
    spec.validate();
    Rng rng(derive_seed(spec.seed, case_index));
    const Dims d = spec.dims;
    const double nx = static_cast<double>(d.nx), ny = static_cast<double>(d.ny), nz = static_cast<double>(d.nz);

    const Ellipsoid head{(nx - 1) / 2, (ny - 1) / 2, (nz - 1) / 2, rng.uniform(0.35, 0.45) * nx, rng.uniform(0.35, 0.45) * ny,
                         rng.uniform(0.35, 0.45) * nz};
    // Inner ventricle: a smaller ellipsoid offset inside the head. Semi-axes stay above one voxel so
    // it is never empty.
    const auto inner_axis = [&](double head_axis) { return std::max(1.0, rng.uniform(0.2, 0.35) * head_axis); };
    const double vax = inner_axis(head.ax), vay = inner_axis(head.ay), vaz = inner_axis(head.az);
    const Ellipsoid ventricle{head.cx + rng.uniform(-0.2, 0.2) * head.ax, head.cy + rng.uniform(-0.2, 0.2) * head.ay,
                              head.cz + rng.uniform(-0.2, 0.2) * head.az, vax, vay, vaz};

    std::vector<CosineMode> modes(3);
    for (auto &m : modes) {
        m.fx = static_cast<double>(rng.between(0, 2)) / nx;
        m.fy = static_cast<double>(rng.between(0, 2)) / ny;
        m.fz = static_cast<double>(rng.between(0, 2)) / nz;
        m.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
        m.amplitude = spec.texture_amplitude / static_cast<double>(modes.size()) * rng.uniform(0.5, 1.0);
    }

    Volume image(d);
    std::vector<std::uint8_t> head_bits(d.count(), 0);
    for (std::size_t z = 0; z < d.nz; ++z)
        for (std::size_t y = 0; y < d.ny; ++y)
            for (std::size_t x = 0; x < d.nx; ++x) {
                const double px = static_cast<double>(x), py = static_cast<double>(y), pz = static_cast<double>(z);
                if (!head.contains(px, py, pz)) continue;
                head_bits[d.index(x, y, z)] = 1;
                double v = ventricle.contains(px, py, pz) ? kVentricleLevel : kTissueLevel;
                if (spec.texture_amplitude > 0.0)
                    for (const auto &m : modes)
                        v += m.amplitude * std::cos(2.0 * std::numbers::pi * (m.fx * px + m.fy * py + m.fz * pz) + m.phase);
                image.at(x, y, z) = static_cast<float>(std::clamp(v, 0.0, 1.0));
            }
    Mask head_mask(d, std::move(head_bits));
    const std::size_t head_voxels = head_mask.count();

    std::size_t target = rng.between(spec.lesion_volume_range.first, spec.lesion_volume_range.second);
    std::optional<Mask> lesion;
    for (int attempt = 0; attempt < kLesionAttempts && !lesion; ++attempt) {
        if (target < head_voxels) {
            lesion = grow_connected_mask_within(head_mask, target, rng);
        } else {
            target = std::max<std::size_t>(1, target / 2);
        }
    }
    if (!lesion)
        throw std::runtime_error("lesion of " + std::to_string(spec.lesion_volume_range.first) + "+ voxels does not fit in a head of " +
                                 std::to_string(head_voxels) + " voxels");
    for (std::size_t i = 0; i < image.size(); ++i)
        if ((*lesion)[i]) image[i] = kLesionLevel;

    return Phantom{TrainingExample{std::move(image), std::move(*lesion)}, std::move(head_mask)};
}

TrainingExample generate_phantom(const PhantomSpec &spec, std::size_t case_index) {
    return generate_phantom_with_head(spec, case_index).example;
}

void write_phantom_set(const PhantomSpec &spec, const std::filesystem::path &out_dir) {
    spec.validate();
    std::filesystem::create_directories(out_dir);
    nlohmann::json manifest;
    manifest["dims"] = {spec.dims.nx, spec.dims.ny, spec.dims.nz};
    manifest["seed"] = spec.seed;
    manifest["texture_amplitude"] = spec.texture_amplitude;
    manifest["lesion_volume_range"] = {spec.lesion_volume_range.first, spec.lesion_volume_range.second};
    nlohmann::json cases = nlohmann::json::array();
    std::vector<std::size_t> volumes;
    for (std::size_t i = 0; i < spec.n_cases; ++i) {
        const TrainingExample ex = generate_phantom(spec, i);
        const std::string image_name = "case" + std::to_string(i) + ".pvol";
        const std::string mask_name = "case" + std::to_string(i) + "_mask.pvol";
        write_volume(ex.image, out_dir / image_name);
        write_mask(ex.pathology_mask, out_dir / mask_name);
        const std::size_t voxels = ex.pathology_mask.count();
        volumes.push_back(voxels);
        cases.push_back({{"index", i}, {"image", image_name}, {"mask", mask_name}, {"lesion_voxels", voxels}});
    }
    manifest["cases"] = cases;
    manifest["lesion_volumes"] = volumes;
    const std::string text = manifest.dump(2) + "\n";
    write_file_atomic(out_dir / "manifest.json", std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t *>(text.data()), text.size()));
}

} // namespace powdr
