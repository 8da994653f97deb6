#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "disco/binary_io.hpp"
#include "helpers.hpp"

namespace fs = std::filesystem;

namespace {

const std::string tiny_flags =
    " --n_seen 3 --n_unseen 2 --samples_per_category 6 --holdout_fraction 0.34 --image_size 8 --downsamples 1"
    " --content_dim 4 --style_dim 3 --codebook_size 8 --base_channels 4 --max_channels 4 --res_blocks 1"
    " --disc_downsamples 1 --stage1_batch 2 --top_k 8 --ar_layers 1 --ar_embed 8 --ar_heads 2";

int run(const std::string& args, const fs::path& log) {
    const std::string cmd = std::string(DISCO_CLI_PATH) + " " + args + " > '" + log.string() + "' 2>&1";
    const int status = std::system(cmd.c_str());
    REQUIRE(WIFEXITED(status));
    return WEXITSTATUS(status);
}

std::string quoted(const fs::path& p) { return "'" + p.string() + "'"; }

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("help and usage errors") {
    testing::TempDir dir("cli_usage");
    const auto log = dir / "out.txt";
    CHECK(run("--help", log) == 0);
    CHECK(run("", log) == 2);
    CHECK(run("frobnicate", log) == 2);
    CHECK(run("stage1-train --no-such-flag 3", log) == 2);
    disco::io::write_text(dir / "bad.cfg", "seed = 1\ncodebok_size = 3\n");
    CHECK(run("-c " + quoted(dir / "bad.cfg") + " make-dataset -o " + quoted(dir / "d"), log) == 2);
    CHECK(run("--top_k 500 make-dataset -o " + quoted(dir / "d"), log) == 2);
}

TEST_CASE("training, export and inspection") {
    testing::TempDir dir("cli_train");
    const auto log = dir / "out.txt";
    const auto out = dir / "run";
    CHECK(run("--output_dir " + quoted(out) + tiny_flags + " make-dataset", log) == 0);
    CHECK(fs::exists(out / "data" / "manifest.jsonl"));

    CHECK(run("--output-dir " + quoted(out) + tiny_flags + " stage1-train --steps 0", log) == 0);
    const auto ckpt = out / "stage1.ckpt";
    REQUIRE(fs::exists(ckpt));
    CHECK(run("inspect-ckpt " + quoted(ckpt), log) == 0);
    CHECK(run("export-dict --stage1 " + quoted(ckpt) + " -o " + quoted(dir / "dict.bin"), log) == 0);
    CHECK(run("inspect-ckpt " + quoted(dir / "dict.bin"), log) == 0);

    auto bytes = disco::io::read_file(ckpt);
    auto bad_magic = bytes;
    bad_magic[0] ^= 0xFF;
    disco::io::write_file(dir / "bad_magic.ckpt", bad_magic);
    CHECK(run("inspect-ckpt " + quoted(dir / "bad_magic.ckpt"), log) == 4);
    const std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + static_cast<long>(bytes.size() / 2));
    disco::io::write_file(dir / "cut.ckpt", cut);
    CHECK(run("inspect-ckpt " + quoted(dir / "cut.ckpt"), log) == 4);
    CHECK(run("export-dict --stage1 " + quoted(dir / "cut.ckpt") + " -o " + quoted(dir / "d2.bin"), log) == 4);
    CHECK(run("inspect-ckpt " + quoted(dir / "missing.ckpt"), log) == 4);

    // stage 2 refuses a checkpoint trained under another config hash
    CHECK(run("--output_dir " + quoted(dir / "s2") + tiny_flags + " --seed 7 stage2-train --stage1 " + quoted(ckpt) +
                  " --steps 1",
              log) == 2);
}

}
