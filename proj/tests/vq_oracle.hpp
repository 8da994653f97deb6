#pragma once

// Brute-force nearest-neighbour scan and a codebook with exact ties, shared by
// the unit tests and the acceptance binary.

#include <cstdint>
#include <vector>

#include "disco/rng.hpp"
#include "disco/vq.hpp"

namespace testing {

/// Full double-precision distance scan; lowest index wins ties.
inline std::uint32_t exhaustive_nearest(const std::vector<float>& v, const disco::vq::Codebook<float>& book) {
    std::uint32_t best = 0;
    long double best_d = -1.0L;
    for (std::size_t k = 0; k < book.size; ++k) {
        long double d = 0.0L;
        for (std::size_t j = 0; j < book.dim; ++j) {
            const long double diff = static_cast<long double>(v[j]) - book.entries[k * book.dim + j];
            d += diff * diff;
        }
        if (best_d < 0.0L || d < best_d) {
            best_d = d;
            best = static_cast<std::uint32_t>(k);
        }
    }
    return best;
}

struct TieSetup {
    disco::vq::Codebook<float> book;
    /// Query vectors exactly equidistant from two nearest entries.
    std::vector<std::vector<float>> tie_queries;
};

/// Integer-valued entries in [-4, 4]. A quarter of the entries are exact
/// duplicates of another entry, another quarter sit at e + 2u for an existing
/// entry e and a unit axis vector u; queries are placed on the duplicates and
/// on the midpoints e + u. All values are exact in float, so ties are exact.
inline TieSetup make_tie_setup(std::size_t k, std::size_t d, disco::Rng& rng) {
    TieSetup s;
    s.book.size = k;
    s.book.dim = d;
    s.book.entries.resize(k * d);
    std::vector<std::size_t> order(k);
    for (std::size_t i = 0; i < k; ++i) order[i] = i;
    rng.shuffle(order.begin(), order.end());
    const std::size_t n_base = k / 2, n_dup = k / 4;
    for (std::size_t i = 0; i < n_base; ++i)
        for (std::size_t j = 0; j < d; ++j)
            s.book.entries[order[i] * d + j] = static_cast<float>(static_cast<long>(rng.below(9)) - 4);
    for (std::size_t i = n_base; i < k; ++i) {
        const std::size_t src = order[rng.below(n_base)];
        float* dst = &s.book.entries[order[i] * d];
        std::copy_n(&s.book.entries[src * d], d, dst);
        std::vector<float> q(dst, dst + d);
        if (i >= n_base + n_dup) {
            const std::size_t axis = rng.below(d);
            const float sign = rng.bernoulli(0.5) ? 1.0f : -1.0f;
            dst[axis] += 2.0f * sign;
            q[axis] += sign;
        }
        s.tie_queries.push_back(std::move(q));
    }
    return s;
}

}  // namespace testing
