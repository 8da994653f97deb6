#include <doctest.h>

#include <string>

#include "disco/binary_io.hpp"
#include "disco/config.hpp"
#include "disco/errors.hpp"
#include "helpers.hpp"

using namespace disco;

TEST_SUITE("config") {

TEST_CASE("parses keys, comments and blank lines") {
    const auto cfg = parse_config("# desk run\nseed = 5\n\n  image_size=16   \nvariant = unconditional  # ablation\n");
    CHECK(cfg.seed == 5);
    CHECK(cfg.image_size == 16);
    CHECK(cfg.variant == "unconditional");
    CHECK(cfg.codebook_size == 128);
}

TEST_CASE("unknown keys name their line") {
    try {
        parse_config("seed = 1\n\ncodebok_size = 4\n");
        FAIL("expected a ContractError");
    } catch (const ContractError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("line 3") != std::string::npos);
        CHECK(msg.find("codebok_size") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_config("seed 1\n"), ContractError);
    CHECK_THROWS_AS(parse_config("seed = -1\n"), ContractError);
    CHECK_THROWS_AS(parse_config("lambda_r = fast\n"), ContractError);
    CHECK_THROWS_AS(parse_config("flip_augment = maybe\n"), ContractError);
}

TEST_CASE("hash covers shared artifacts only") {
    const RunConfig base;
    auto changed = [&](const std::string& key, const std::string& value) {
        RunConfig c = base;
        c.set(key, value);
        return c.hash() != base.hash();
    };
    CHECK(changed("seed", "2"));
    CHECK(changed("codebook_size", "64"));
    CHECK(changed("lambda_vq", "0.5"));
    CHECK(changed("n_unseen", "5"));
    CHECK_FALSE(changed("stage1_lr", "0.001"));
    CHECK_FALSE(changed("stage2_steps", "10"));
    CHECK_FALSE(changed("top_k", "5"));
    CHECK_FALSE(changed("output_dir", "elsewhere"));
    CHECK(base.hash().size() == 16);
}

TEST_CASE("text form round trips") {
    RunConfig c;
    c.set("seed", "42");
    c.set("lambda_r", "0.125");
    c.set("hshot", "1,2");
    c.set("r1_penalty", "true");
    const auto back = parse_config(c.to_text());
    CHECK(back.to_map() == c.to_map());
    CHECK(back.hash() == c.hash());
    CHECK(back.hshot_values() == std::vector<std::size_t>{1, 2});
    for (const auto& key : RunConfig::keys()) CHECK(RunConfig::is_key(key));
    CHECK_FALSE(RunConfig::is_key("nope"));
}

TEST_CASE("file loading starts from a base") {
    testing::TempDir dir("config");
    io::write_text(dir / "run.cfg", "stage1_steps = 7\n");
    RunConfig base;
    base.seed = 9;
    const auto cfg = load_config(dir / "run.cfg", base);
    CHECK(cfg.stage1_steps == 7);
    CHECK(cfg.seed == 9);
    CHECK_THROWS_AS(load_config(dir / "missing.cfg"), IoError);
}

TEST_CASE("validation") {
    RunConfig c;
    CHECK_NOTHROW(c.validate());
    c.top_k = 129;
    CHECK_THROWS_AS(c.validate(), ContractError);
    c = {};
    c.holdout_fraction = 1.0;
    CHECK_THROWS_AS(c.validate(), ContractError);
    c = {};
    c.image_size = 30;
    CHECK_THROWS_AS(c.validate(), ContractError);
    c = {};
    c.ar_heads = 3;
    CHECK_THROWS_AS(c.validate(), ContractError);
    c = {};
    c.variant = "half";
    CHECK_THROWS_AS(c.validate(), ContractError);
}

TEST_CASE("derived configurations") {
    RunConfig c;
    const auto m = c.model_config();
    CHECK(m.map_side() == 8);
    CHECK(m.num_classes == 8);
    const auto a = c.ar_config();
    CHECK(a.grid_width == 8);
    CHECK(a.codebook_size == 128);
    CHECK(a.style_dim == 16);
    CHECK_NOTHROW(ar::check_compatible(a, m));
    const auto t = c.stage1_train_config();
    CHECK(t.weights.recon == 0.1);
    CHECK(t.weights.feature_match == 1.0);
    CHECK(t.weights.vq == 0.8);
    CHECK(c.synth_spec().n_seen == 8);
}

}
