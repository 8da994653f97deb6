#include <doctest.h>

#include <cmath>

#include "disco/errors.hpp"
#include "disco/gradcheck.hpp"
#include "disco/ops.hpp"
#include "disco/vq.hpp"
#include "helpers.hpp"
#include "vq_oracle.hpp"

using namespace disco;
using nn::Shape;
using nn::Tensor;

namespace {

vq::ContentMap<float> random_map(std::size_t w, std::size_t h, std::size_t d, Rng& rng) {
    vq::ContentMap<float> m{w, h, d, std::vector<float>(w * h * d)};
    for (auto& v : m.values) v = static_cast<float>(rng.normal());
    return m;
}

}  // namespace

TEST_SUITE("vq") {
    TEST_CASE("hand nearest-neighbour examples") {
        const vq::Codebook<float> book{2, 2, {0, 0, 1, 1}};
        const vq::ContentMap<float> c{2, 1, 2, {0.2f, 0.1f, 0.6f, 0.9f}};
        const auto q = vq::quantize(c, book);
        CHECK(q.indices.indices == std::vector<std::uint32_t>{0, 1});
        CHECK(q.decoded.values == std::vector<float>{0, 0, 1, 1});
    }

    TEST_CASE("a single-entry dictionary maps everything to entry 0") {
        Rng rng(1);
        const auto book = vq::Codebook<float>::random(1, 4, 1.0, rng);
        const auto c = random_map(3, 2, 4, rng);
        const auto q = vq::quantize(c, book);
        for (auto i : q.indices.indices) CHECK(i == 0);
        for (std::size_t i = 0; i < c.positions(); ++i)
            for (std::size_t j = 0; j < 4; ++j) CHECK(q.decoded.at(i)[j] == book.entries[j]);
    }

    TEST_CASE("quantize agrees with the exhaustive scan, ties included") {
        Rng rng(7);
        for (int trial = 0; trial < 3; ++trial) {
            auto setup = testing::make_tie_setup(32, 8, rng);
            std::vector<std::vector<float>> queries = setup.tie_queries;
            for (int i = 0; i < 100; ++i) {
                std::vector<float> v(8);
                for (auto& x : v) x = static_cast<float>(rng.normal(0.0, 2.0));
                queries.push_back(v);
            }
            for (const auto& v : queries) {
                const auto got = vq::nearest_index<float>(std::span<const float>(v), setup.book);
                CHECK(got == testing::exhaustive_nearest(v, setup.book));
            }
        }
    }

    TEST_CASE("equidistant entries resolve to the lowest index") {
        const vq::Codebook<float> book{3, 1, {2.0f, 0.0f, 2.0f}};
        const std::vector<float> mid{1.0f};
        CHECK(vq::nearest_index<float>(std::span<const float>(mid), book) == 0);
        const vq::Codebook<float> swapped{3, 1, {5.0f, 0.0f, 2.0f}};
        CHECK(vq::nearest_index<float>(std::span<const float>(mid), swapped) == 1);
    }

    TEST_CASE("graph nearest_rows agrees with quantize") {
        Rng rng(3);
        const auto book = vq::Codebook<float>::random(16, 5, 1.0, rng);
        const auto c = random_map(4, 3, 5, rng);
        const Tensor<float> rows(Shape{12, 5}, c.values);
        const Tensor<float> cb(Shape{16, 5}, book.entries);
        CHECK(vq::nearest_rows(rows, cb) == vq::quantize(c, book).indices.indices);
    }

    TEST_CASE("errors: empty codebook and dimension mismatch") {
        Rng rng(2);
        const vq::Codebook<float> empty{0, 4, {}};
        CHECK_THROWS_AS(vq::quantize(random_map(2, 2, 4, rng), empty), ContractError);
        const auto book = vq::Codebook<float>::random(4, 3, 1.0, rng);
        CHECK_THROWS_AS(vq::quantize(random_map(2, 2, 4, rng), book), ContractError);
        CHECK_THROWS_AS(vq::decode(vq::IndexMap{1, 1, {4}}, book), ContractError);
        vq::Codebook<float> bad = book;
        bad.entries[0] = std::nanf("");
        CHECK_THROWS_AS(bad.validate(), NumericError);
    }

    TEST_CASE("quantize is idempotent on its decoded output") {
        Rng rng(4);
        const auto book = vq::Codebook<float>::random(20, 6, 1.0, rng);
        const auto q = vq::quantize(random_map(5, 5, 6, rng), book);
        const auto again = vq::quantize(q.decoded, book);
        CHECK(again.indices == q.indices);
        CHECK(again.decoded.values == q.decoded.values);
    }

    TEST_CASE("content maps round-trip through CHW layout") {
        Rng rng(5);
        const auto m = random_map(3, 2, 4, rng);
        const auto chw = m.to_chw();
        const auto back = vq::ContentMap<float>::from_chw(chw, 4, 2, 3);
        CHECK(back.values == m.values);
        // position (row 1, col 2) of channel 3
        CHECK(chw[(3 * 2 + 1) * 3 + 2] == m.at(1 * 3 + 2)[3]);
    }

    TEST_CASE("quantization error does not grow when the codebook is extended") {
        Rng rng(6);
        const auto c = random_map(6, 6, 4, rng);
        auto book = vq::Codebook<float>::random(2, 4, 1.0, rng);
        double prev = 1e300;
        for (int step = 0; step < 6; ++step) {
            const auto q = vq::quantize(c, book);
            const double err = vq::vq_loss_value(c, q.decoded);
            CHECK(err <= prev);
            prev = err;
            const auto extra = vq::Codebook<float>::random(book.size, 4, 1.0, rng);
            book.entries.insert(book.entries.end(), extra.entries.begin(), extra.entries.end());
            book.size *= 2;
        }
    }

    TEST_CASE("vq loss examples") {
        const vq::ContentMap<float> c{1, 1, 2, {1.0f, 0.0f}};
        const vq::ContentMap<float> q{1, 1, 2, {0.0f, 0.0f}};
        CHECK(vq::vq_loss_value(c, q) == doctest::Approx(2.0));
        CHECK(vq::vq_loss_value(c, c) == 0.0f);
        CHECK_THROWS_AS(vq::vq_loss_value(c, vq::ContentMap<float>{2, 1, 1, {0.0f, 0.0f}}), ContractError);
    }

    TEST_CASE("vq_loss(C, quantize(C)) is twice the summed squared nearest distances") {
        Rng rng(8);
        const auto book = vq::Codebook<double>::random(10, 3, 1.0, rng);
        vq::ContentMap<double> c{4, 4, 3, std::vector<double>(48)};
        for (auto& v : c.values) v = rng.normal();
        const auto q = vq::quantize(c, book);
        double expect = 0.0;
        for (std::size_t i = 0; i < c.positions(); ++i) {
            double best = 1e300;
            for (std::size_t k = 0; k < book.size; ++k) {
                double dd = 0.0;
                for (std::size_t j = 0; j < 3; ++j) dd += std::pow(c.at(i)[j] - book.entry(k)[j], 2);
                best = std::min(best, dd);
            }
            expect += best;
        }
        CHECK(vq::vq_loss_value(c, q.decoded) == doctest::Approx(2.0 * expect).epsilon(1e-12));
        const Tensor<double> rows(Shape{16, 3}, c.values), cb(Shape{10, 3}, book.entries);
        const auto graph = vq::vq_loss(rows, cb, std::span<const std::uint32_t>(q.indices.indices));
        CHECK(graph.item() == doctest::Approx(2.0 * expect).epsilon(1e-12));
    }

    TEST_CASE("vq loss gradients route rows and codebook separately") {
        Rng rng(9);
        auto rows = testing::random_tensor<double>({6, 3}, rng);
        auto book = testing::random_tensor<double>({4, 3}, rng);
        const auto idx = vq::nearest_rows(rows, book);
        vq::vq_loss(rows, book, std::span<const std::uint32_t>(idx)).backward();
        for (std::size_t r = 0; r < 6; ++r)
            for (std::size_t j = 0; j < 3; ++j)
                CHECK(rows.grad()[r * 3 + j] == doctest::Approx(2.0 * (rows[r * 3 + j] - book[idx[r] * 3 + j])));
        for (std::size_t k = 0; k < 4; ++k)
            for (std::size_t j = 0; j < 3; ++j) {
                double expect = 0.0;
                for (std::size_t r = 0; r < 6; ++r)
                    if (idx[r] == k) expect += 2.0 * (book[k * 3 + j] - rows[r * 3 + j]);
                CHECK(book.grad()[k * 3 + j] == doctest::Approx(expect));
            }
        // finite differences: the value holds |r - q|^2 twice, one share routed to each operand
        const auto routed = [&](const Tensor<double>& r, const Tensor<double>& b) {
            const auto ids = std::span<const std::uint32_t>(idx);
            const auto share = nn::sum(nn::square(nn::sub(r.detach(), nn::embedding(ids, b.detach()))));
            return nn::sub(vq::vq_loss(r, b, ids), share);
        };
        const auto frozen_book = book.detach();
        CHECK(nn::grad_check([&](const Tensor<double>& r) { return routed(r, frozen_book); }, rows.detach()) < 1e-6);
        const auto frozen_rows = rows.detach();
        CHECK(nn::grad_check([&](const Tensor<double>& b) { return routed(frozen_rows, b); }, book.detach()) < 1e-6);
    }

    TEST_CASE("zero loss and zero gradients at the fixed point") {
        Tensor<double> rows(Shape{2, 2}, {1, 2, 3, 4});
        Tensor<double> book(Shape{2, 2}, {1, 2, 3, 4});
        rows.set_requires_grad(true);
        book.set_requires_grad(true);
        const std::vector<std::uint32_t> idx{0, 1};
        auto loss = vq::vq_loss(rows, book, std::span<const std::uint32_t>(idx));
        CHECK(loss.item() == 0.0);
        loss.backward();
        for (auto g : rows.grad()) CHECK(g == 0.0);
        for (auto g : book.grad()) CHECK(g == 0.0);
    }

    TEST_CASE("unused entries are re-seeded from candidate rows") {
        Rng rng(10);
        Tensor<float> book(Shape{4, 2}, {0, 0, 1, 1, 2, 2, 3, 3});
        const Tensor<float> cand(Shape{3, 2}, {9, 9, 8, 8, 7, 7});
        vq::UsageTracker usage(4);
        const std::vector<std::uint32_t> used{0, 2, 2};
        usage.record(used);
        CHECK(usage.unused() == 2);
        CHECK(usage.reseed(book, cand, rng) == 2);
        CHECK(book[0] == 0.0f);
        CHECK(book[4] == 2.0f);
        CHECK(book[2] >= 7.0f);
        CHECK(book[6] >= 7.0f);
        CHECK(usage.unused() == 4);  // counts reset
    }
}
