#include <doctest.h>

#include <string>
#include <vector>

#include "disco/binary_io.hpp"
#include "disco/dataset.hpp"
#include "disco/errors.hpp"
#include "disco/image.hpp"
#include "helpers.hpp"

using namespace disco;

namespace {

Image solid(std::size_t size, float v) {
    Image img(size, size);
    for (auto& p : img.chw) p = v;
    return img;
}

void make_folder(const std::filesystem::path& root) {
    std::filesystem::create_directories(root / "tulip");
    std::filesystem::create_directories(root / "aster");
    for (int i = 0; i < 3; ++i) {
        write_png(root / "tulip" / ("t" + std::to_string(2 - i) + ".png"), solid(8, 0.5f - 0.2f * i));
        write_png(root / "aster" / ("a" + std::to_string(i) + ".png"), solid(8, -0.4f));
    }
}

}  // namespace

TEST_SUITE("dataset") {

TEST_CASE("folder of two categories with three images each") {
    testing::TempDir dir("folder");
    make_folder(dir.path());
    const auto data = load_image_folder(dir.path());
    CHECK(data.size() == 6);
    CHECK(data.categories == std::vector<std::string>{"aster", "tulip"});
    CHECK(data.labels == std::vector<std::size_t>{0, 0, 0, 1, 1, 1});
    // files are visited in sorted order: t0 was written last
    CHECK(data.images[3] == read_png(dir.path() / "tulip" / "t0.png"));
    CHECK_NOTHROW(data.validate());
}

TEST_CASE("reloading gives the same assignment") {
    testing::TempDir dir("reload");
    make_folder(dir.path());
    const auto a = load_image_folder(dir.path());
    const auto b = load_image_folder(dir.path());
    CHECK(a.labels == b.labels);
    CHECK(a.categories == b.categories);
    CHECK(a.images == b.images);
}

TEST_CASE("images are brought to the configured size") {
    testing::TempDir dir("resize");
    make_folder(dir.path());
    const auto data = load_image_folder(dir.path(), 4);
    for (const auto& img : data.images) {
        CHECK(img.height == 4);
        CHECK(img.width == 4);
    }
    CHECK(data.images[0].chw[0] == doctest::Approx(byte_to_unit(unit_to_byte(-0.4f))));
}

TEST_CASE("undecodable files are named") {
    testing::TempDir dir("bad");
    make_folder(dir.path());
    const auto bad = dir.path() / "tulip" / "notes.txt";
    io::write_text(bad, "not an image");
    try {
        load_image_folder(dir.path());
        FAIL("expected a LoadError");
    } catch (const LoadError& e) {
        REQUIRE(e.items().size() == 1);
        CHECK(e.items()[0].find(bad.string()) != std::string::npos);
        CHECK(e.exit_code() == ExitCode::Io);
    }
}

TEST_CASE("empty category and missing root") {
    testing::TempDir dir("empty");
    make_folder(dir.path());
    std::filesystem::create_directories(dir.path() / "zinnia");
    CHECK_THROWS_AS(load_image_folder(dir.path()), ContractError);
    CHECK_THROWS_AS(load_image_folder(dir.path() / "nope"), IoError);
}

TEST_CASE("select and split") {
    LabeledImages d;
    d.categories = {"a", "b", "c"};
    for (std::size_t label = 0; label < 3; ++label)
        for (int i = 0; i < 10; ++i) {
            d.images.push_back(solid(4, static_cast<float>(label) * 0.1f + static_cast<float>(i) * 0.01f));
            d.labels.push_back(label);
        }
    const auto sel = select_categories(d, {2, 0});
    CHECK(sel.categories == std::vector<std::string>{"c", "a"});
    CHECK(sel.size() == 20);
    // sample order is kept, labels follow the order of `keep`
    CHECK(sel.images[0] == d.images[0]);
    CHECK(sel.labels[0] == 1);
    CHECK(sel.labels[19] == 0);
    CHECK(sel.images[19] == d.images[29]);

    const auto [train, hold] = split_per_category(d, 0.9);
    CHECK(train.size() == 27);
    CHECK(hold.size() == 3);
    CHECK(hold.images[0] == d.images[9]);
    CHECK(hold.categories == d.categories);

    // 0.9 of 200 must not round up to 181
    LabeledImages big;
    big.categories = {"x"};
    big.images.assign(200, solid(4, 0.f));
    big.labels.assign(200, 0);
    CHECK(split_per_category(big, 1.0 - 0.1).first.size() == 180);
    CHECK(big.by_label()[0].size() == 200);
}

TEST_CASE("validate rejects inconsistent sets") {
    LabeledImages d;
    d.categories = {"a"};
    d.images = {solid(4, 0.f)};
    d.labels = {1};
    CHECK_THROWS_AS(d.validate(), ContractError);
    d.labels = {0, 0};
    CHECK_THROWS_AS(d.validate(), ContractError);
}

}
