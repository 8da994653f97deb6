#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

namespace disco {

/// Seedable, splittable random stream. Every stochastic operation takes one
/// by reference so that runs are reproducible from a single seed.
class Rng {
  public:
    explicit Rng(std::uint64_t seed = 0);

    /// Derives an independent child stream and advances this one.
    [[nodiscard]] Rng split();

    std::uint64_t next_u64() { return engine_(); }
    double uniform();                                   // [0, 1)
    double uniform(double lo, double hi);
    double normal(double mean = 0.0, double stddev = 1.0);
    std::size_t below(std::size_t n);                   // uniform in [0, n)
    bool bernoulli(double p) { return uniform() < p; }

    /// k distinct indices from [0, n), in random order.
    std::vector<std::size_t> choose(std::size_t n, std::size_t k);

    template <typename It>
    void shuffle(It first, It last) {
        std::shuffle(first, last, engine_);
    }

    std::mt19937_64& engine() { return engine_; }

  private:
    std::mt19937_64 engine_;
};

/// SplitMix64 finalizer; used to decorrelate derived seeds.
std::uint64_t mix_seed(std::uint64_t x);

}  // namespace disco
