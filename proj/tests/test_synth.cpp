#include <doctest.h>

#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "disco/binary_io.hpp"
#include "disco/errors.hpp"
#include "disco/image.hpp"
#include "disco/synth.hpp"
#include "helpers.hpp"

using namespace disco;
using synth::ContentFactors;
using synth::ShapeKind;

namespace {

// Shape equations written out directly: unit ellipse with minor axis 0.6,
// rectangle 2 x 1.1, equilateral triangle with circumradius 1 pointing along +a.
bool analytic_inside(const ContentFactors& f, double u, double v) {
    const double dx = u - f.cx, dy = v - f.cy;
    const double a = (std::cos(f.rotation) * dx + std::sin(f.rotation) * dy) / f.scale;
    const double b = (std::cos(f.rotation) * dy - std::sin(f.rotation) * dx) / f.scale;
    switch (f.shape) {
        case ShapeKind::Ellipse: return a * a + b * b / 0.36 <= 1.0;
        case ShapeKind::Rectangle: return std::abs(a) <= 1.0 && std::abs(b) <= 0.55;
        case ShapeKind::Triangle: {
            // inside iff left of x = -1/2 boundary and under both slanted edges
            const double h = std::sqrt(3.0);
            return a >= -0.5 && b <= (1.0 - a) / h && b >= -(1.0 - a) / h;
        }
    }
    return false;
}

std::array<std::uint8_t, 3> bytes_of(const std::array<double, 3>& rgb) {
    return {static_cast<std::uint8_t>(std::lround(rgb[0] * 255.0)), static_cast<std::uint8_t>(std::lround(rgb[1] * 255.0)),
            static_cast<std::uint8_t>(std::lround(rgb[2] * 255.0))};
}

std::vector<bool> background_mask(const Image& img, const synth::CategorySpec& cat) {
    const auto rgb = to_rgb8(img);
    const auto bg = bytes_of(synth::background_rgb(cat));
    std::vector<bool> mask(img.height * img.width);
    for (std::size_t p = 0; p < mask.size(); ++p)
        mask[p] = rgb[3 * p] == bg[0] && rgb[3 * p + 1] == bg[1] && rgb[3 * p + 2] == bg[2];
    return mask;
}

double chi_square_p(const std::vector<std::vector<double>>& table) {
    const std::size_t r = table.size(), c = table[0].size();
    std::vector<double> rows(r, 0.0), cols(c, 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) {
            rows[i] += table[i][j];
            cols[j] += table[i][j];
            total += table[i][j];
        }
    double stat = 0.0;
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) {
            const double e = rows[i] * cols[j] / total;
            stat += (table[i][j] - e) * (table[i][j] - e) / e;
        }
    const boost::math::chi_squared dist(static_cast<double>((r - 1) * (c - 1)));
    return boost::math::cdf(boost::math::complement(dist, stat));
}

}  // namespace

TEST_SUITE("synth") {

TEST_CASE("masks depend on content only, colours on category only") {
    Rng rng(1);
    const auto a = synth::make_category(0, 7, true);
    const auto b = synth::make_category(4, 7, true);
    for (int trial = 0; trial < 10; ++trial) {
        const auto f = synth::random_factors(rng);
        const auto ia = synth::render_sample(a, f, 32);
        const auto ib = synth::render_sample(b, f, 32);
        CHECK(background_mask(ia, a) == background_mask(ib, b));
        CHECK(ia != ib);
        CHECK(synth::render_sample(a, f, 32) == ia);
    }
}

TEST_CASE("category style is a function of id and seed") {
    CHECK(synth::make_category(3, 11, true).base_hue == synth::make_category(3, 11, false).base_hue);
    CHECK(synth::make_category(3, 11, true).base_hue != synth::make_category(3, 12, true).base_hue);
    CHECK(synth::make_category(3, 11, true).base_hue != synth::make_category(4, 11, true).base_hue);
}

TEST_CASE("renderer agrees with the analytic shape equations") {
    Rng rng(2);
    std::size_t agree = 0, counted = 0;
    for (std::size_t cat_id = 0; cat_id < 3; ++cat_id) {
        const auto cat = synth::make_category(cat_id, 3, true);
        const auto fg = synth::foreground_rgb(cat);
        const auto bg = bytes_of(synth::background_rgb(cat));
        for (int trial = 0; trial < 30; ++trial) {
            const auto f = synth::random_factors(rng);
            const std::size_t n = 32;
            const auto rgb = to_rgb8(synth::render_sample(cat, f, n));
            for (std::size_t y = 0; y < n; ++y)
                for (std::size_t x = 0; x < n; ++x) {
                    const std::size_t p = y * n + x;
                    const bool is_bg = rgb[3 * p] == bg[0] && rgb[3 * p + 1] == bg[1] && rgb[3 * p + 2] == bg[2];
                    // a foreground pixel has the hue of the category; any mix with the
                    // background colour is the anti-aliased rim
                    bool is_fg = false;
                    if (!is_bg) {
                        const double r = rgb[3 * p] / 255.0, g = rgb[3 * p + 1] / 255.0, bl = rgb[3 * p + 2] / 255.0;
                        const double scale = std::max({r, g, bl}) / std::max({fg[0], fg[1], fg[2]});
                        is_fg = std::abs(r - scale * fg[0]) < 0.01 && std::abs(g - scale * fg[1]) < 0.01 &&
                                std::abs(bl - scale * fg[2]) < 0.01;
                    }
                    if (!is_bg && !is_fg) continue;
                    ++counted;
                    const bool oracle = analytic_inside(f, (x + 0.5) / n, (y + 0.5) / n);
                    agree += oracle == is_fg;
                }
        }
    }
    REQUIRE(counted > 80000);
    const double rate = static_cast<double>(agree) / static_cast<double>(counted);
    MESSAGE("pixel agreement " << rate);
    CHECK(rate >= 0.995);
}

TEST_CASE("content factors are independent of the category") {
    const auto ds = synth::generate({});
    const std::size_t cats = ds.categories.size();
    std::vector<std::vector<double>> shape(cats, std::vector<double>(3, 0.0)), cx = shape, rot = shape, scale = shape;
    for (std::size_t i = 0; i < ds.data.size(); ++i) {
        const auto& f = ds.factors[i];
        const std::size_t c = ds.data.labels[i];
        shape[c][static_cast<std::size_t>(f.shape)] += 1;
        cx[c][std::min<std::size_t>(2, static_cast<std::size_t>((f.cx - 0.3) / 0.4 * 3))] += 1;
        rot[c][std::min<std::size_t>(2, static_cast<std::size_t>(f.rotation / (2 * std::numbers::pi) * 3))] += 1;
        scale[c][std::min<std::size_t>(2, static_cast<std::size_t>((f.scale - 0.22) / 0.12 * 3))] += 1;
    }
    for (const auto* table : {&shape, &cx, &rot, &scale}) {
        const double p = chi_square_p(*table);
        MESSAGE("chi-square p " << p);
        CHECK(p > 0.01);
    }
}

TEST_CASE("factors outside the canvas are rejected") {
    ContentFactors f;
    f.cx = 0.05;
    CHECK_THROWS_AS(synth::check_factors(f), ContractError);
    CHECK_THROWS_AS(synth::render_sample(synth::make_category(0, 0, true), f, 32), ContractError);
    f = {};
    f.scale = -0.1;
    CHECK_THROWS_AS(synth::check_factors(f), ContractError);
    f = {};
    f.cy = std::nan("");
    CHECK_THROWS_AS(synth::coverage(f, 16), ContractError);
    Rng rng(3);
    for (int i = 0; i < 200; ++i) CHECK_NOTHROW(synth::check_factors(synth::random_factors(rng)));
}

TEST_CASE("defaults and split") {
    const synth::SynthSpec spec;
    CHECK(spec.n_seen == 8);
    CHECK(spec.n_unseen == 2);
    CHECK(spec.samples_per_category == 200);
    CHECK(spec.image_size == 32);
    const auto ds = synth::generate({4, 3, 2, 5, 16});
    CHECK(ds.data.size() == 25);
    CHECK(ds.seen_ids() == std::vector<std::size_t>{0, 1, 2});
    CHECK(ds.unseen_ids() == std::vector<std::size_t>{3, 4});
    CHECK_THROWS_AS(synth::generate({4, 0, 2, 5, 16}), ContractError);
}

TEST_CASE("more unseen categories extend the dataset without changing it") {
    const auto small = synth::generate({9, 4, 1, 6, 16});
    const auto big = synth::generate({9, 4, 3, 6, 16});
    REQUIRE(big.data.size() == 42);
    for (std::size_t i = 0; i < small.data.size(); ++i) {
        CHECK(small.data.images[i] == big.data.images[i]);
        CHECK(small.factors[i] == big.factors[i]);
    }
}

TEST_CASE("two builds with equal seeds are identical on disk") {
    testing::TempDir a("synth_a"), b("synth_b");
    const synth::SynthSpec spec{5, 2, 1, 4, 16};
    const auto ds = synth::build_dataset(spec, a.path(), "abc");
    synth::build_dataset(spec, b.path(), "abc");
    CHECK(io::read_file(a / "manifest.jsonl") == io::read_file(b / "manifest.jsonl"));
    for (const auto& p : ds.paths) CHECK(io::read_file(a.path() / p) == io::read_file(b.path() / p));

    const auto records = synth::read_manifest(a / "manifest.jsonl");
    REQUIRE(records.size() == ds.data.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        CHECK(records[i].path == ds.paths[i]);
        CHECK(records[i].category == ds.data.labels[i]);
        CHECK(records[i].seen == ds.categories[ds.data.labels[i]].seen);
        CHECK(records[i].factors == ds.factors[i]);
        CHECK(read_png(a.path() / records[i].path) == ds.data.images[i]);
    }
    const auto manifest = io::read_file(a / "manifest.jsonl");
    CHECK(std::string(manifest.begin(), manifest.end()).find("\"config_hash\":\"abc\"") != std::string::npos);
}

TEST_CASE("malformed manifest lines report their offset") {
    testing::TempDir dir("manifest");
    io::write_text(dir / "m.jsonl", "{\"path\":\"x\"}\n");
    CHECK_THROWS_AS(synth::read_manifest(dir / "m.jsonl"), FormatError);
    CHECK_THROWS_AS(synth::read_manifest(dir / "missing.jsonl"), IoError);
}

}
