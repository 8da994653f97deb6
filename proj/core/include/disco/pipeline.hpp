#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "disco/autoregressor.hpp"
#include "disco/classifier.hpp"
#include "disco/config.hpp"
#include "disco/dataset.hpp"
#include "disco/disentangle.hpp"
#include "disco/metrics.hpp"

/// Orchestration of training, generation, evaluation and artifact I/O.
namespace disco::pipeline {

namespace fs = std::filesystem;

/// Progress messages go here (stderr by default).
void set_log_sink(std::function<void(std::string_view)> sink);
void log(std::string_view message);

/// Exclusive ownership of an output directory for the lifetime of the object.
class OutputLock {
  public:
    explicit OutputLock(const fs::path& dir);
    ~OutputLock();
    OutputLock(const OutputLock&) = delete;
    OutputLock& operator=(const OutputLock&) = delete;

  private:
    fs::path path_;
};

struct Splits {
    LabeledImages seen_train;    // labels 0..n_seen-1
    LabeledImages seen_holdout;  // same labels
    LabeledImages unseen;        // labels 0..n_unseen-1
};

/// Synthetic data is regenerated from the config; folder data is loaded with
/// its last `n_unseen` categories (lexicographic order) held out as unseen.
Splits load_splits(const RunConfig& config);

/// Writes the synthetic dataset (PNGs + manifest) under `root`.
synth::SynthDataset make_dataset(const RunConfig& config, const fs::path& root);

// ---- checkpoints -----------------------------------------------------------

struct Stage1Bundle {
    RunConfig config;
    stage1::DisentangleModel<float> model;
    std::string config_hash;
    std::string fingerprint;  // FNV-1a of the checkpoint bytes
    std::size_t step = 0;
};

struct Stage2Bundle {
    RunConfig config;
    ar::ArModel<float> model;
    std::string config_hash;
    std::string stage1_fingerprint;
    std::size_t step = 0;
};

void save_stage1(const fs::path& path, const RunConfig& config, const stage1::DisentangleModel<float>& model,
                 std::size_t step);
Stage1Bundle load_stage1(const fs::path& path);
Stage2Bundle load_stage2(const fs::path& path);

/// Parses the config echoed into a checkpoint's metadata.
RunConfig config_from_metadata(const std::string& metadata);

// ---- training --------------------------------------------------------------

struct Stage1Run {
    fs::path checkpoint;
    fs::path loss_log;
    std::vector<stage1::LossBreakdown> trace;  // every step
};

/// Trains stage 1 into config.output_dir: stage1.ckpt, periodic
/// stage1_step<N>.ckpt and stage1_loss.csv.
Stage1Run run_stage1(const RunConfig& config);

struct Stage2Run {
    fs::path checkpoint;
    fs::path nll_log;
    std::vector<double> train_nll;                       // every step
    std::vector<std::pair<std::size_t, double>> heldout; // (step, mean held-out nll)
};

/// Trains the stage-2 model selected by config.variant on top of a frozen
/// stage-1 checkpoint: stage2_<variant>.ckpt and stage2_<variant>_nll.csv.
Stage2Run run_stage2(const RunConfig& config, const fs::path& stage1_checkpoint);

// ---- generation ------------------------------------------------------------

/// Decodes index grids with per-sample styles.
std::vector<Image> decode_maps(const stage1::DisentangleModel<float>& model,
                               const std::vector<ar::IndexSequence>& maps, const nn::Tensor<float>& styles);

/// Style vectors [N, d_s] of the given images.
nn::Tensor<float> style_vectors(const stage1::DisentangleModel<float>& model, std::span<const Image> images);

/// Content of `content` rendered in the style of `style`, pairwise.
std::vector<Image> translate(const stage1::DisentangleModel<float>& model, std::span<const Image> content,
                             std::span<const Image> style);

/// `count` new images in the style of `styles` (cycled). With an AR model the
/// content maps are sampled from it (style-conditioned or not, per its mode).
std::vector<Image> generate_images(const stage1::DisentangleModel<float>& model, const ar::ArModel<float>& prior,
                                   std::span<const Image> styles, std::size_t count,
                                   const ar::SamplingOptions& sampling, Rng& rng);

struct GenerationRequest {
    fs::path stage1_checkpoint;
    fs::path stage2_checkpoint;  // unused for stage1-translate
    std::vector<fs::path> style_images;
    fs::path content_image;      // stage1-translate only
    std::size_t samples_per_style = 9;
    std::string variant = "full";  // full | stage1-translate | unconditional
    fs::path output_dir;
    std::optional<std::size_t> top_k;
    std::optional<std::size_t> window_rows;
    std::uint64_t seed = 0;
};

struct GenerationResult {
    std::vector<fs::path> grids;
    std::vector<fs::path> images;
    std::vector<fs::path> index_maps;
    fs::path compatibility_csv;
};

GenerationResult generate(const GenerationRequest& request);

// ---- evaluation ------------------------------------------------------------

/// Feature extractor trained on the seen categories (cached in the output
/// directory under the config hash).
cls::SmallCnn<float> feature_extractor(const RunConfig& config, const Splits& splits);

/// Runs one protocol (fid, diversity, fewshot, hshot) and writes
/// eval_<protocol>.csv into config.output_dir.
std::vector<metrics::ScoreRow> evaluate(const RunConfig& config, const fs::path& stage1_checkpoint,
                                        const fs::path& stage2_checkpoint, const std::string& protocol);

/// Writes the codebook of a stage-1 checkpoint as a DISCODIC file.
void export_dictionary(const fs::path& stage1_checkpoint, const fs::path& output);

/// Human-readable summary of any checkpoint.
std::string inspect_checkpoint(const fs::path& path);

}  // namespace disco::pipeline
