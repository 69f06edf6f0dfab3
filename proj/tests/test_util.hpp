#pragma once

#include <filesystem>
#include <string>

#include <unistd.h>

#include "powdr/rng.hpp"
#include "powdr/volume.hpp"
#include "powdr/wavelet.hpp"

namespace powdr::test {

inline Volume random_volume(Dims d, Rng &rng, double lo = 0.0, double hi = 1.0) {
    Volume v(d);
    for (auto &x : v.values()) x = static_cast<float>(rng.uniform(lo, hi));
    return v;
}

inline SubbandTensor random_subbands(Dims band, Rng &rng) {
    SubbandTensor s(band);
    for (auto &x : s.values()) x = static_cast<float>(rng.normal());
    return s;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string &tag) {
        path_ = std::filesystem::temp_directory_path() / ("powdr_test_" + tag + "_" + std::to_string(::getpid()));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path &path() const { return path_; }
    std::filesystem::path operator/(const std::string &name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

} // namespace powdr::test
