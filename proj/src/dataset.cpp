#include "powdr/dataset.hpp"

#include <fstream>
#include <stdexcept>
#include <string>

#include "json.hpp"

namespace powdr {

void validate_dataset(const std::vector<TrainingExample> &cases) {
    if (cases.empty()) throw std::invalid_argument("dataset is empty");
    const Dims d = cases.front().image.dims();
    if (!d.all_even()) throw std::invalid_argument("dataset dims " + to_string(d) + " must be even");
    for (std::size_t i = 0; i < cases.size(); ++i) {
        if (cases[i].image.dims() != d)
            throw std::invalid_argument("case " + std::to_string(i) + " has dims " + to_string(cases[i].image.dims()) + ", expected " +
                                        to_string(d));
        if (cases[i].pathology_mask.dims() != d) throw std::invalid_argument("case " + std::to_string(i) + " mask dims differ from its image");
    }
}

Dataset load_dataset(const std::filesystem::path &dir) {
    if (!std::filesystem::is_directory(dir)) throw std::runtime_error("data directory " + dir.string() + " does not exist");
    Dataset ds;
    const auto manifest_path = dir / "manifest.json";
    if (std::filesystem::exists(manifest_path)) {
        std::ifstream in(manifest_path);
        nlohmann::json manifest;
        try {
            in >> manifest;
        } catch (const nlohmann::json::exception &e) {
            throw std::runtime_error("cannot parse " + manifest_path.string() + ": " + e.what());
        }
        for (const auto &c : manifest.at("cases"))
            ds.cases.push_back({read_volume(dir / c.at("image").get<std::string>()), read_mask(dir / c.at("mask").get<std::string>())});
        if (manifest.contains("lesion_volumes")) ds.lesion_volumes = manifest.at("lesion_volumes").get<std::vector<std::size_t>>();
    } else {
        for (std::size_t i = 0;; ++i) {
            const auto image = dir / ("case" + std::to_string(i) + ".pvol");
            const auto mask = dir / ("case" + std::to_string(i) + "_mask.pvol");
            if (!std::filesystem::exists(image) || !std::filesystem::exists(mask)) break;
            ds.cases.push_back({read_volume(image), read_mask(mask)});
        }
    }
    if (ds.cases.empty()) throw std::runtime_error("no cases found in " + dir.string());
    validate_dataset(ds.cases);
    return ds;
}

} // namespace powdr
