#include "disco/pipeline.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>

#include <fmt/format.h>
#include <json.hpp>

#include "disco/binary_io.hpp"
#include "disco/checkpoint.hpp"
#include "disco/errors.hpp"
#include "disco/stage1_trainer.hpp"
#include "disco/vq.hpp"

namespace disco::pipeline {

using json = nlohmann::json;
using nn::Tensor;

namespace {

std::function<void(std::string_view)>& sink() {
    static std::function<void(std::string_view)> s = [](std::string_view m) {
        fmt::print(stderr, "{}\n", m);
    };
    return s;
}

json config_json(const RunConfig& config) {
    json j = json::object();
    for (const auto& [k, v] : config.to_map()) j[k] = v;
    return j;
}

json parse_metadata(const std::string& metadata, const fs::path& where) {
    try {
        return json::parse(metadata);
    } catch (const json::exception& e) {
        throw FormatError(fmt::format("{}: checkpoint metadata is not valid JSON ({})", where.string(), e.what()), 0);
    }
}

std::string require_kind(const json& meta, const char* kind, const fs::path& where) {
    const std::string found = meta.value("kind", "");
    if (found != kind)
        throw ContractError(fmt::format("{} is a '{}' checkpoint, expected '{}'", where.string(), found, kind));
    return found;
}

Image load_style_image(const fs::path& path, std::size_t size) {
    Image img = read_png(path);
    if (img.height != size || img.width != size) img = resize(img, size, size);
    return img;
}

std::size_t grid_columns(std::size_t n) {
    return static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
}

}  // namespace

void set_log_sink(std::function<void(std::string_view)> s) { sink() = std::move(s); }

void log(std::string_view message) {
    if (sink()) sink()(message);
}

OutputLock::OutputLock(const fs::path& dir) : path_(dir / "disco.lock") {
    fs::create_directories(dir);
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0)
        throw IoError(fmt::format("output directory {} is in use by another run (remove {} if it is stale)",
                                  dir.string(), path_.string()));
    const auto pid = fmt::format("{}\n", ::getpid());
    [[maybe_unused]] const auto written = ::write(fd, pid.data(), pid.size());
    ::close(fd);
}

OutputLock::~OutputLock() {
    std::error_code ec;
    fs::remove(path_, ec);
}

Splits load_splits(const RunConfig& config) {
    Splits s;
    LabeledImages all;
    std::vector<std::size_t> seen, unseen;
    if (config.dataset == "synthetic") {
        auto ds = synth::generate(config.synth_spec());
        seen = ds.seen_ids();
        unseen = ds.unseen_ids();
        all = std::move(ds.data);
    } else {
        all = load_image_folder(config.dataset, config.image_size);
        if (all.num_categories() != config.n_seen + config.n_unseen)
            throw ContractError(fmt::format("image folder {} has {} categories but n_seen + n_unseen = {}",
                                            config.dataset, all.num_categories(), config.n_seen + config.n_unseen));
        for (std::size_t c = 0; c < all.num_categories(); ++c) (c < config.n_seen ? seen : unseen).push_back(c);
    }
    auto [train, holdout] = split_per_category(select_categories(all, seen), 1.0 - config.holdout_fraction);
    s.seen_train = std::move(train);
    s.seen_holdout = std::move(holdout);
    s.unseen = select_categories(all, unseen);
    return s;
}

synth::SynthDataset make_dataset(const RunConfig& config, const fs::path& root) {
    require(config.dataset == "synthetic", "make-dataset only builds the synthetic dataset");
    return synth::build_dataset(config.synth_spec(), root, config.hash());
}

// ---- checkpoints -----------------------------------------------------------

void save_stage1(const fs::path& path, const RunConfig& config, const stage1::DisentangleModel<float>& model,
                 std::size_t step) {
    ckpt::Checkpoint c;
    c.metadata = json{{"kind", "stage1"}, {"config", config_json(config)}, {"config_hash", config.hash()}, {"step", step}}
                     .dump();
    ckpt::add_params(c, model.all_params());
    ckpt::write(path, c);
}

RunConfig config_from_metadata(const std::string& metadata) {
    const json meta = parse_metadata(metadata, "metadata");
    RunConfig config;
    if (!meta.contains("config") || !meta["config"].is_object())
        throw FormatError("checkpoint metadata has no config block", 0);
    for (const auto& [k, v] : meta["config"].items()) config.set(k, v.get<std::string>());
    return config;
}

Stage1Bundle load_stage1(const fs::path& path) {
    const auto bytes = io::read_file(path);
    const auto c = ckpt::decode(bytes);
    const json meta = parse_metadata(c.metadata, path);
    require_kind(meta, "stage1", path);
    RunConfig config = config_from_metadata(c.metadata);
    Rng rng(0);
    auto model = stage1::DisentangleModel<float>::create(config.model_config(), rng);
    ckpt::load_params(c, model.all_params());
    return {config, std::move(model), meta.value("config_hash", ""), io::hex64(io::fnv1a(bytes)),
            meta.value("step", std::size_t{0})};
}

Stage2Bundle load_stage2(const fs::path& path) {
    const auto c = ckpt::read(path);
    const json meta = parse_metadata(c.metadata, path);
    require_kind(meta, "stage2", path);
    RunConfig config = config_from_metadata(c.metadata);
    Rng rng(0);
    auto model = ar::ArModel<float>::create(config.ar_config(), rng);
    ckpt::load_params(c, model.params());
    return {config, std::move(model), meta.value("config_hash", ""), meta.value("stage1_fingerprint", ""),
            meta.value("step", std::size_t{0})};
}

// ---- training --------------------------------------------------------------

Stage1Run run_stage1(const RunConfig& config) {
    config.validate();
    const fs::path out = config.output_dir;
    OutputLock lock(out);
    const Splits splits = load_splits(config);
    Rng rng(mix_seed(config.seed));
    auto model = stage1::DisentangleModel<float>::create(config.model_config(), rng);
    stage1::Stage1Trainer trainer(model, config.stage1_train_config(), splits.seen_train);

    Stage1Run run;
    run.checkpoint = out / "stage1.ckpt";
    run.loss_log = out / "stage1_loss.csv";
    std::ofstream csv(run.loss_log, std::ios::trunc);
    if (!csv) throw IoError(fmt::format("cannot write {}", run.loss_log.string()));
    csv << "# config_hash=" << config.hash() << "\n"
        << "step,L_D,L_GD,L_R,L_FM,L_vq,L_fun,L_total,L_R_smooth200,reseeded_total\n";
    log(fmt::format("stage1: {} train / {} holdout images, {} steps, config hash {}", splits.seen_train.size(),
                    splits.seen_holdout.size(), config.stage1_steps, config.hash()));

    std::string last_good = "none";
    std::deque<double> window;
    double window_sum = 0.0;
    std::size_t reseeded = 0;
    for (std::size_t step = 1; step <= config.stage1_steps; ++step) {
        stage1::LossBreakdown b;
        try {
            b = trainer.step();
        } catch (const NumericError& e) {
            csv.flush();
            throw NumericError(fmt::format("{} at step {}; last good checkpoint: {}", e.what(), step, last_good));
        }
        run.trace.push_back(b);
        reseeded += trainer.last_reseeded();
        window.push_back(b.recon);
        window_sum += b.recon;
        if (window.size() > 200) {
            window_sum -= window.front();
            window.pop_front();
        }
        if (step % config.log_every == 0 || step == config.stage1_steps) {
            const double smooth = window_sum / static_cast<double>(window.size());
            csv << fmt::format("{},{:.8g},{:.8g},{:.8g},{:.8g},{:.8g},{:.8g},{:.8g},{:.8g},{}\n", step, b.d, b.gd,
                               b.recon, b.fm, b.vq, b.fun, b.total, smooth, reseeded);
            csv.flush();
            log(fmt::format("stage1 step {:>6}  L_D {:.4f}  L_GD {:.4f}  L_R {:.4f} (smoothed {:.4f})  L_FM {:.4f}  "
                            "L_vq {:.5f}  total {:.4f}  reseeded {}",
                            step, b.d, b.gd, b.recon, smooth, b.fm, b.vq, b.total, reseeded));
        }
        if (step % config.checkpoint_every == 0 && step != config.stage1_steps) {
            const fs::path p = out / fmt::format("stage1_step{:06d}.ckpt", step);
            save_stage1(p, config, model, step);
            last_good = p.string();
        }
    }
    save_stage1(run.checkpoint, config, model, config.stage1_steps);
    log(fmt::format("stage1: wrote {}", run.checkpoint.string()));
    return run;
}

Stage2Run run_stage2(const RunConfig& config, const fs::path& stage1_checkpoint) {
    config.validate();
    const auto s1 = load_stage1(stage1_checkpoint);
    const auto ar_cfg = config.ar_config();
    ar::check_compatible(ar_cfg, s1.model.config());
    if (s1.config_hash != config.hash())
        throw ContractError(fmt::format("stage-1 checkpoint {} was trained under config hash {}, this run has {}",
                                        stage1_checkpoint.string(), s1.config_hash, config.hash()));
    const fs::path out = config.output_dir;
    OutputLock lock(out);
    const Splits splits = load_splits(config);
    const auto train = ar::encode_dataset(s1.model, splits.seen_train, config.flip_augment);
    const auto holdout = ar::encode_dataset(s1.model, splits.seen_holdout);

    Rng rng(mix_seed(config.seed ^ 0x57A6E2));
    auto model = ar::ArModel<float>::create(ar_cfg, rng);
    ar::Stage2Trainer trainer(model, config.stage2_train_config(), train);

    Stage2Run run;
    run.checkpoint = out / fmt::format("stage2_{}.ckpt", config.variant);
    run.nll_log = out / fmt::format("stage2_{}_nll.csv", config.variant);
    std::ofstream csv(run.nll_log, std::ios::trunc);
    if (!csv) throw IoError(fmt::format("cannot write {}", run.nll_log.string()));
    csv << "# config_hash=" << config.hash() << "\n" << "step,train_nll,heldout_nll\n";
    log(fmt::format("stage2 ({}): {} train / {} holdout sequences of length {}", config.variant, train.size(),
                    holdout.size(), ar_cfg.sequence_length()));

    const auto save = [&](const fs::path& p, std::size_t step, double heldout) {
        ckpt::Checkpoint c;
        c.metadata = json{{"kind", "stage2"},
                          {"config", config_json(config)},
                          {"config_hash", config.hash()},
                          {"variant", config.variant},
                          {"stage1_fingerprint", s1.fingerprint},
                          {"step", step},
                          {"heldout_nll", heldout}}
                         .dump();
        ckpt::add_params(c, model.params());
        ckpt::write(p, c);
    };

    std::string last_good = "none";
    double heldout_nll = 0.0;
    Rng eval_rng(0);
    for (std::size_t step = 1; step <= config.stage2_steps; ++step) {
        double nll = 0.0;
        try {
            nll = trainer.step();
        } catch (const NumericError& e) {
            csv.flush();
            throw NumericError(fmt::format("{} at step {}; last good checkpoint: {}", e.what(), step, last_good));
        }
        run.train_nll.push_back(nll);
        if (step % config.log_every == 0 || step == config.stage2_steps) {
            std::string held = "";
            if (holdout.size() > 0) {
                heldout_nll = ar::mean_nll(model, holdout, ar::EvalMode::Matched, eval_rng);
                run.heldout.emplace_back(step, heldout_nll);
                held = fmt::format("{:.8g}", heldout_nll);
            }
            csv << fmt::format("{},{:.8g},{}\n", step, nll, held);
            csv.flush();
            log(fmt::format("stage2 step {:>6}  nll {:.3f}  held-out {}", step, nll, held));
        }
        if (step % config.checkpoint_every == 0 && step != config.stage2_steps) {
            const fs::path p = out / fmt::format("stage2_{}_step{:06d}.ckpt", config.variant, step);
            save(p, step, heldout_nll);
            last_good = p.string();
        }
    }
    save(run.checkpoint, config.stage2_steps, heldout_nll);
    log(fmt::format("stage2: wrote {}", run.checkpoint.string()));
    return run;
}

// ---- generation ------------------------------------------------------------

std::vector<Image> decode_maps(const stage1::DisentangleModel<float>& model,
                               const std::vector<ar::IndexSequence>& maps, const Tensor<float>& styles) {
    require(!maps.empty(), "decode_maps: no maps");
    std::vector<std::uint32_t> flat;
    for (const auto& m : maps) flat.insert(flat.end(), m.begin(), m.end());
    nn::NoGradGuard no_grad;
    const auto input = model.decoder_input_from_indices(flat, maps.size());
    return stage1::tensor_to_images(model.decode(input, styles));
}

Tensor<float> style_vectors(const stage1::DisentangleModel<float>& model, std::span<const Image> images) {
    nn::NoGradGuard no_grad;
    return model.encode_style(stage1::images_to_tensor<float>(images));
}

std::vector<Image> translate(const stage1::DisentangleModel<float>& model, std::span<const Image> content,
                             std::span<const Image> style) {
    require(content.size() == style.size(), "translate: content and style lists differ in length");
    nn::NoGradGuard no_grad;
    const auto enc = model.encode_content(stage1::images_to_tensor<float>(content));
    return stage1::tensor_to_images(model.decode(enc.decoder_input, style_vectors(model, style)));
}

std::vector<Image> generate_images(const stage1::DisentangleModel<float>& model, const ar::ArModel<float>& prior,
                                   std::span<const Image> styles, std::size_t count,
                                   const ar::SamplingOptions& sampling, Rng& rng) {
    require(!styles.empty(), "generate_images: no style images");
    const Tensor<float> s = style_vectors(model, styles);
    const std::size_t ds = s.dim(1);
    std::vector<Image> out;
    constexpr std::size_t chunk = 64;
    for (std::size_t begin = 0; begin < count; begin += chunk) {
        const std::size_t n = std::min(chunk, count - begin);
        std::vector<float> rows;
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t src = (begin + i) % styles.size();
            rows.insert(rows.end(), s.values().begin() + static_cast<long>(src * ds),
                        s.values().begin() + static_cast<long>((src + 1) * ds));
        }
        const Tensor<float> batch_styles(nn::Shape{n, ds}, std::move(rows));
        const bool conditioned = prior.config().mode == ar::ConditioningMode::StyleConditioned;
        const auto maps = ar::sample_content_maps(prior, conditioned ? batch_styles : Tensor<float>(), n, sampling, rng);
        auto imgs = decode_maps(model, maps, batch_styles);
        out.insert(out.end(), std::make_move_iterator(imgs.begin()), std::make_move_iterator(imgs.end()));
    }
    return out;
}

GenerationResult generate(const GenerationRequest& req) {
    const auto s1 = load_stage1(req.stage1_checkpoint);
    const std::size_t size = s1.model.config().image_size;
    require(!req.style_images.empty(), "generate: at least one style image is required");
    require(!req.output_dir.empty(), "generate: output directory required");
    fs::create_directories(req.output_dir);
    GenerationResult result;
    std::vector<Image> styles;
    for (const auto& p : req.style_images) styles.push_back(load_style_image(p, size));
    const std::size_t side = s1.model.config().map_side();

    if (req.variant == "stage1-translate") {
        if (req.content_image.empty()) throw ContractError("stage1-translate needs a content image (--content)");
        const Image content = load_style_image(req.content_image, size);
        for (std::size_t j = 0; j < styles.size(); ++j) {
            nn::NoGradGuard no_grad;
            const auto enc = s1.model.encode_content(stage1::images_to_tensor<float>(std::span<const Image>(&content, 1)));
            const auto img = decode_maps(s1.model, {enc.indices}, style_vectors(s1.model, std::span<const Image>(&styles[j], 1)));
            const fs::path png = req.output_dir / fmt::format("style{:02d}_translated.png", j);
            const fs::path idx = req.output_dir / fmt::format("style{:02d}_translated.idx", j);
            write_png(png, img[0]);
            vq::write_index_map(idx, vq::IndexMap{side, side, enc.indices});
            result.images.push_back(png);
            result.index_maps.push_back(idx);
        }
        return result;
    }

    if (req.variant != "full" && req.variant != "unconditional")
        throw ContractError(fmt::format("unknown generation variant '{}' (full, stage1-translate, unconditional)", req.variant));
    const auto s2 = load_stage2(req.stage2_checkpoint);
    if (s2.stage1_fingerprint != s1.fingerprint)
        throw ContractError(fmt::format("stage-2 checkpoint {} was trained on a different stage-1 checkpoint than {}",
                                        req.stage2_checkpoint.string(), req.stage1_checkpoint.string()));
    const bool conditioned = s2.model.config().mode == ar::ConditioningMode::StyleConditioned;
    if (conditioned != (req.variant == "full"))
        throw ContractError(fmt::format("variant '{}' does not match the {} stage-2 checkpoint", req.variant,
                                        ar::to_string(s2.model.config().mode)));
    ar::SamplingOptions sampling = s2.config.sampling();
    if (req.top_k) sampling.top_k = *req.top_k;
    if (req.window_rows) sampling.window_rows = *req.window_rows;
    Rng rng(mix_seed(req.seed ^ 0x6E4E));

    std::string csv = fmt::format("# config_hash={}\nstyle,sample,nll,rank\n", s2.config_hash);
    for (std::size_t j = 0; j < styles.size(); ++j) {
        const Tensor<float> s = style_vectors(s1.model, std::span<const Image>(&styles[j], 1));
        std::vector<float> rows;
        for (std::size_t i = 0; i < req.samples_per_style; ++i) rows.insert(rows.end(), s.values().begin(), s.values().end());
        const Tensor<float> batch_styles(nn::Shape{req.samples_per_style, s.dim(1)}, std::move(rows));
        const auto maps = ar::sample_content_maps(s2.model, conditioned ? batch_styles : Tensor<float>(),
                                                  req.samples_per_style, sampling, rng);
        const auto imgs = decode_maps(s1.model, maps, batch_styles);
        const auto ranked = ar::compatibility_rank(s2.model, s.values(), maps);
        std::vector<std::size_t> rank_of(maps.size());
        for (std::size_t r = 0; r < ranked.size(); ++r) rank_of[ranked[r].original_position] = r;
        for (std::size_t i = 0; i < maps.size(); ++i) {
            const fs::path png = req.output_dir / fmt::format("style{:02d}_sample{:03d}.png", j, i);
            const fs::path idx = req.output_dir / fmt::format("style{:02d}_sample{:03d}.idx", j, i);
            write_png(png, imgs[i]);
            vq::write_index_map(idx, vq::IndexMap{side, side, maps[i]});
            result.images.push_back(png);
            result.index_maps.push_back(idx);
            csv += fmt::format("{},{},{:.6f},{}\n", j, i, ranked[rank_of[i]].nll, rank_of[i]);
        }
        const fs::path grid = req.output_dir / fmt::format("style{:02d}_grid.png", j);
        write_png(grid, tile(imgs, grid_columns(imgs.size())));
        result.grids.push_back(grid);
    }
    result.compatibility_csv = req.output_dir / "compatibility.csv";
    io::write_text(result.compatibility_csv, csv);
    return result;
}

// ---- evaluation ------------------------------------------------------------

cls::SmallCnn<float> feature_extractor(const RunConfig& config, const Splits& splits) {
    const fs::path cache = fs::path(config.output_dir) / "extractor.ckpt";
    Rng rng(mix_seed(config.seed ^ 0xFEA7));
    cls::ClassifierConfig cc{config.image_size, config.n_seen, 32};
    auto model = cls::SmallCnn<float>::create(cc, rng);
    const json want{{"kind", "extractor"}, {"config_hash", config.hash()}, {"steps", config.classifier_steps}};
    if (fs::exists(cache)) {
        const auto c = ckpt::read(cache);
        if (parse_metadata(c.metadata, cache) == want) {
            ckpt::load_params(c, model.params());
            return model;
        }
    }
    cls::ClassifierTraining t;
    t.steps = config.classifier_steps;
    t.seed = config.seed;
    cls::train_classifier(model, splits.seen_train, t);
    log(fmt::format("feature extractor: held-out seen accuracy {:.3f}", cls::accuracy(model, splits.seen_holdout)));
    ckpt::Checkpoint c;
    c.metadata = want.dump();
    ckpt::add_params(c, model.params());
    fs::create_directories(config.output_dir);
    ckpt::write(cache, c);
    return model;
}

std::vector<metrics::ScoreRow> evaluate(const RunConfig& config, const fs::path& stage1_checkpoint,
                                        const fs::path& stage2_checkpoint, const std::string& protocol) {
    if (protocol != "fid" && protocol != "diversity" && protocol != "fewshot" && protocol != "hshot")
        throw ContractError(fmt::format("unknown protocol '{}' (fid, diversity, fewshot, hshot)", protocol));
    const auto s1 = load_stage1(stage1_checkpoint);
    const auto s2 = load_stage2(stage2_checkpoint);
    if (s2.stage1_fingerprint != s1.fingerprint)
        throw ContractError("evaluate: the stage-2 checkpoint was not trained on this stage-1 checkpoint");
    if (s1.config_hash != config.hash())
        throw ContractError(fmt::format("evaluate: checkpoint config hash {} differs from this config's {}",
                                        s1.config_hash, config.hash()));
    const Splits splits = load_splits(config);
    const auto extractor = feature_extractor(config, splits);
    if (extractor.config().num_classes != s1.model.config().num_classes || extractor.config().image_size != s1.model.config().image_size)
        throw ContractError("evaluate: feature extractor does not match the checkpoint's categories");
    const metrics::FeatureFn features = [&](std::span<const Image> imgs) { return cls::extract_features(extractor, imgs); };
    const auto sampling = config.sampling();
    const metrics::GeneratorFn generator = [&](std::span<const Image> styles, std::size_t count, Rng& rng) {
        return generate_images(s1.model, s2.model, styles, count, sampling, rng);
    };

    std::vector<metrics::ScoreRow> rows;
    Rng rng(mix_seed(config.seed ^ 0xE7A1));
    if (protocol == "fewshot") {
        const auto feats = features(splits.unseen.images);
        metrics::FewShotOptions opt;
        opt.ways = std::min(config.fewshot_ways, splits.unseen.num_categories());
        opt.shots = config.fewshot_shots;
        opt.episodes = config.fewshot_episodes;
        const metrics::AugmentFn augment = [&](std::size_t, std::span<const std::size_t> support, std::size_t count,
                                               Rng& r) {
            std::vector<Image> styles;
            for (auto i : support) styles.push_back(splits.unseen.images[i]);
            return features(generator(styles, count, r));
        };
        for (std::size_t n_aug : {std::size_t{0}, config.fewshot_augment}) {
            opt.augment = n_aug;
            Rng episodes(mix_seed(config.seed ^ 0xF5));
            const auto res = metrics::fewshot_accuracy(feats, splits.unseen.labels, opt, augment, episodes);
            rows.push_back({"fewshot_accuracy", fmt::format("{}-way-{}-shot-n_aug={}", opt.ways, opt.shots, n_aug),
                            res.mean_accuracy, config.seed});
            if (config.fewshot_augment == 0) break;
        }
    } else {
        const std::vector<std::size_t> hs = protocol == "hshot" ? config.hshot_values() : std::vector<std::size_t>{1};
        const auto table = metrics::hshot_sweep(features, splits.unseen, generator, hs, config.eval_per_category, rng);
        for (const auto& r : table) {
            const std::string setting = r.setting == "real-split" ? "real-split" : "generated-vs-real-" + r.setting;
            if (protocol != "diversity") rows.push_back({"fid", setting, r.fid, config.seed});
            if (protocol != "fid") rows.push_back({"diversity", setting, r.diversity, config.seed});
        }
    }
    const fs::path csv = fs::path(config.output_dir) / fmt::format("eval_{}.csv", protocol);
    metrics::write_scores_csv(csv, rows, config.hash());
    for (const auto& r : rows) log(fmt::format("{:<18} {:<32} {:.6f}", r.metric, r.setting, r.value));
    return rows;
}

void export_dictionary(const fs::path& stage1_checkpoint, const fs::path& output) {
    const auto s1 = load_stage1(stage1_checkpoint);
    const auto book = s1.model.codebook_snapshot();
    book.validate();
    vq::write_codebook(output, book);
}

std::string inspect_checkpoint(const fs::path& path) {
    const auto bytes = io::read_file(path);
    const auto c = ckpt::decode(bytes);
    std::string out = fmt::format("file: {}\nbytes: {}\nfingerprint: {}\n", path.string(), bytes.size(),
                                  io::hex64(io::fnv1a(bytes)));
    try {
        out += "metadata:\n" + json::parse(c.metadata).dump(2) + "\n";
    } catch (const json::exception&) {
        out += "metadata (raw): " + c.metadata + "\n";
    }
    std::size_t total = 0;
    out += fmt::format("tensors: {}\n", c.tensors.size());
    for (const auto& t : c.tensors) {
        out += fmt::format("  {:<32} [{}]\n", t.name, fmt::join(t.dims, ", "));
        total += t.data.size();
    }
    out += fmt::format("parameters: {}\n", total);
    return out;
}

}  // namespace disco::pipeline
