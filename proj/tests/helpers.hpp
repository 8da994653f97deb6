#pragma once

#include <cstdint>
#include <filesystem>
#include <unistd.h>
#include <string>
#include <vector>

#include "disco/layers.hpp"
#include "disco/rng.hpp"
#include "disco/tensor.hpp"

namespace testing {

template <typename T = double>
disco::nn::Tensor<T> random_tensor(disco::nn::Shape shape, disco::Rng& rng, double stddev = 1.0, bool grad = true) {
    auto t = disco::nn::randn<T>(std::move(shape), stddev, rng);
    if (grad) t.set_requires_grad(true);
    return t;
}

/// Random extent in [lo, hi].
inline std::size_t extent(disco::Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.below(hi - lo + 1); }

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
  public:
    explicit TempDir(const std::string& tag) {
        static std::uint64_t counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("disco_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    [[nodiscard]] const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

  private:
    std::filesystem::path path_;
};

}  // namespace testing
