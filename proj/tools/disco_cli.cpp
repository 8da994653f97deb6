// disco: command-line front end for training, sampling and evaluation.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "disco/binary_io.hpp"
#include "disco/errors.hpp"
#include "disco/pipeline.hpp"
#include "disco/vq.hpp"

namespace fs = std::filesystem;
using namespace disco;

namespace {

std::string dashed(std::string key) {
    std::replace(key.begin(), key.end(), '_', '-');
    return key;
}

struct Overrides {
    std::string config_file;
    std::map<std::string, std::string> values;
    std::map<std::string, CLI::Option*> options;

    void attach(CLI::App& app) {
        app.add_option("-c,--config", config_file, "key = value config file used as the base")->check(CLI::ExistingFile);
        auto* group = app.add_option_group("config keys", "override any config key (file values are the base)");
        for (const auto& key : RunConfig::keys()) {
            std::string names = "--" + key;
            if (dashed(key) != key) names += ",--" + dashed(key);
            options[key] = group->add_option(names, values[key], fmt::format("default: {}", RunConfig{}.get(key)));
        }
    }

    [[nodiscard]] RunConfig resolve() const {
        RunConfig cfg = config_file.empty() ? RunConfig{} : load_config(config_file);
        for (const auto& [key, opt] : options)
            if (opt->count() > 0) cfg.set(key, values.at(key));
        cfg.validate();
        return cfg;
    }
};

std::string inspect_any(const fs::path& path) {
    const auto bytes = io::read_file(path);
    const std::string head(bytes.begin(), bytes.begin() + static_cast<long>(std::min<std::size_t>(bytes.size(), 9)));
    if (head.rfind("DISCODIC", 0) == 0) {
        const auto book = vq::decode_codebook(bytes);
        return fmt::format("file: {}\nkind: dictionary\nbytes: {}\nentries: {}\ndim: {}\n", path.string(), bytes.size(),
                           book.size, book.dim);
    }
    if (head.rfind("DISCOIDX", 0) == 0) {
        const auto map = vq::decode_index_map(bytes);
        std::string out = fmt::format("file: {}\nkind: index map\nbytes: {}\ngrid: {}x{}\n", path.string(), bytes.size(),
                                      map.width, map.height);
        for (std::size_t r = 0; r < map.height; ++r) {
            for (std::size_t c = 0; c < map.width; ++c) out += fmt::format("{:>5}", map.indices[r * map.width + c]);
            out += "\n";
        }
        return out;
    }
    return pipeline::inspect_checkpoint(path);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"disco: discrete content maps for few-shot image generation"};
    app.require_subcommand(1);
    app.fallthrough();
    Overrides ov;
    ov.attach(app);

    std::optional<std::size_t> steps;
    std::string stage1_ckpt, stage2_ckpt, out, protocol = "fid", content, variant;
    std::vector<std::string> styles;
    std::size_t samples = 9;
    std::optional<std::size_t> top_k, window_rows;
    std::optional<std::uint64_t> gen_seed;

    auto* make = app.add_subcommand("make-dataset", "render the synthetic dataset to PNG files plus a manifest");
    make->add_option("-o,--out", out, "destination directory (default: <output_dir>/data)");

    auto* s1 = app.add_subcommand("stage1-train", "train encoders, decoder, discriminator and dictionary");
    s1->add_option("--steps", steps, "alias for --stage1_steps");

    auto* s2 = app.add_subcommand("stage2-train", "train the content-map prior on a frozen stage-1 checkpoint");
    s2->add_option("--stage1", stage1_ckpt, "stage-1 checkpoint")->required()->check(CLI::ExistingFile);
    s2->add_option("--steps", steps, "alias for --stage2_steps");

    auto* tr = app.add_subcommand("translate", "render a content image in the style of other images");
    tr->add_option("--stage1", stage1_ckpt, "stage-1 checkpoint")->required()->check(CLI::ExistingFile);
    tr->add_option("--content", content, "content image");
    tr->add_option("--style", styles, "style image(s)")->required();
    tr->add_option("-o,--out", out, "output directory")->required();

    auto* gen = app.add_subcommand("generate", "sample new images for each style image");
    gen->add_option("--stage1", stage1_ckpt, "stage-1 checkpoint")->required()->check(CLI::ExistingFile);
    gen->add_option("--stage2", stage2_ckpt, "stage-2 checkpoint");
    gen->add_option("--style", styles, "style image(s)")->required();
    gen->add_option("--content", content, "content image (stage1-translate only)");
    gen->add_option("--samples", samples, "samples per style image")->check(CLI::PositiveNumber);
    gen->add_option("--mode", variant, "full | stage1-translate | unconditional")->default_val("full");
    gen->add_option("--k", top_k, "top-k override");
    gen->add_option("--window", window_rows, "sliding-window rows override (0 = full context)");
    gen->add_option("--sample-seed", gen_seed, "sampling seed (default: config seed)");
    gen->add_option("-o,--out", out, "output directory")->required();

    auto* ev = app.add_subcommand("eval", "score generated images");
    ev->add_option("--stage1", stage1_ckpt, "stage-1 checkpoint")->required()->check(CLI::ExistingFile);
    ev->add_option("--stage2", stage2_ckpt, "stage-2 checkpoint")->required()->check(CLI::ExistingFile);
    ev->add_option("--protocol", protocol, "fid | diversity | fewshot | hshot")
        ->check(CLI::IsMember({"fid", "diversity", "fewshot", "hshot"}));

    auto* ex = app.add_subcommand("export-dict", "write the dictionary of a stage-1 checkpoint");
    ex->add_option("--stage1", stage1_ckpt, "stage-1 checkpoint")->required()->check(CLI::ExistingFile);
    ex->add_option("-o,--out", out, "output DISCODIC file")->required();

    auto* in = app.add_subcommand("inspect-ckpt", "describe a checkpoint, dictionary or index map");
    std::string inspect_path;
    in->add_option("path", inspect_path, "file to inspect")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : static_cast<int>(ExitCode::Contract);
    }

    try {
        if (in->parsed()) {
            fmt::print("{}", inspect_any(inspect_path));
            return 0;
        }
        if (ex->parsed()) {
            pipeline::export_dictionary(stage1_ckpt, out);
            fmt::print("{}\n", out);
            return 0;
        }

        RunConfig cfg = ov.resolve();
        if (steps) cfg.set(s1->parsed() ? "stage1_steps" : "stage2_steps", std::to_string(*steps));
        pipeline::log(fmt::format("config hash {}", cfg.hash()));

        if (make->parsed()) {
            const fs::path root = out.empty() ? fs::path(cfg.output_dir) / "data" : fs::path(out);
            const auto ds = pipeline::make_dataset(cfg, root);
            fmt::print("{} images in {} categories under {}\n", ds.data.size(), ds.categories.size(), root.string());
        } else if (s1->parsed()) {
            const auto run = pipeline::run_stage1(cfg);
            fmt::print("{}\n{}\n", run.checkpoint.string(), run.loss_log.string());
        } else if (s2->parsed()) {
            const auto run = pipeline::run_stage2(cfg, stage1_ckpt);
            fmt::print("{}\n{}\n", run.checkpoint.string(), run.nll_log.string());
        } else if (tr->parsed() || gen->parsed()) {
            pipeline::GenerationRequest req;
            req.stage1_checkpoint = stage1_ckpt;
            req.stage2_checkpoint = stage2_ckpt;
            for (const auto& s : styles) req.style_images.emplace_back(s);
            req.content_image = content;
            req.samples_per_style = samples;
            req.variant = tr->parsed() ? "stage1-translate" : variant;
            req.output_dir = out;
            req.top_k = top_k;
            req.window_rows = window_rows;
            req.seed = gen_seed.value_or(cfg.seed);
            if (req.variant != "stage1-translate" && req.stage2_checkpoint.empty())
                throw ContractError(fmt::format("variant '{}' needs --stage2", req.variant));
            const auto res = pipeline::generate(req);
            for (const auto& p : res.grids) fmt::print("{}\n", p.string());
            for (const auto& p : res.images) fmt::print("{}\n", p.string());
            if (!res.compatibility_csv.empty()) fmt::print("{}\n", res.compatibility_csv.string());
        } else if (ev->parsed()) {
            const auto rows = pipeline::evaluate(cfg, stage1_ckpt, stage2_ckpt, protocol);
            fmt::print("{}", metrics::scores_csv(rows, cfg.hash()));
        }
        return 0;
    } catch (const Error& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return static_cast<int>(e.exit_code());
    } catch (const std::filesystem::filesystem_error& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return static_cast<int>(ExitCode::Io);
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return static_cast<int>(ExitCode::Contract);
    }
}
