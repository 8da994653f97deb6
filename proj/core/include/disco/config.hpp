#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "disco/autoregressor.hpp"
#include "disco/classifier.hpp"
#include "disco/disentangle.hpp"
#include "disco/stage1_trainer.hpp"
#include "disco/synth.hpp"

namespace disco {

/// Every tunable of a run. Defaults are the desk-scale configuration.
struct RunConfig {
    std::uint64_t seed = 1;
    std::string output_dir = "runs/default";

    // data: "synthetic" or the path of an image folder
    std::string dataset = "synthetic";
    std::size_t n_seen = 8;
    std::size_t n_unseen = 2;
    std::size_t samples_per_category = 200;
    double holdout_fraction = 0.1;

    // stage-1 geometry
    std::size_t image_size = 32;
    std::size_t downsamples = 2;
    std::size_t content_dim = 64;
    std::size_t style_dim = 16;
    std::size_t codebook_size = 128;
    std::size_t base_channels = 32;
    std::size_t max_channels = 64;
    std::size_t res_blocks = 2;
    std::size_t disc_downsamples = 2;

    // stage-1 objective and optimization
    double lambda_r = 0.1;
    double lambda_f = 1.0;
    double lambda_vq = 0.8;
    double stage1_lr = 1e-4;
    std::size_t stage1_batch = 8;
    std::size_t stage1_steps = 10000;
    bool flip_augment = true;
    bool reseed_dead_codes = true;
    bool r1_penalty = false;
    double r1_gamma = 1.0;

    // stage 2
    std::string variant = "conditioned";
    std::size_t ar_layers = 4;
    std::size_t ar_embed = 128;
    std::size_t ar_heads = 4;
    double stage2_lr = 3e-4;
    std::size_t stage2_batch = 16;
    std::size_t stage2_steps = 4000;

    // sampling
    std::size_t top_k = 100;
    std::size_t window_rows = 0;

    // evaluation
    std::size_t classifier_steps = 1500;
    std::size_t fewshot_ways = 5;
    std::size_t fewshot_shots = 1;
    std::size_t fewshot_augment = 64;
    std::size_t fewshot_episodes = 10;
    std::size_t eval_per_category = 128;
    std::string hshot = "1,3,5";

    // cadence
    std::size_t log_every = 50;
    std::size_t checkpoint_every = 1000;

    /// Sets one key from its textual value. Unknown keys and unparsable values
    /// raise ContractError.
    void set(const std::string& key, const std::string& value);
    [[nodiscard]] std::string get(const std::string& key) const;
    static const std::vector<std::string>& keys();
    static bool is_key(const std::string& key);

    /// Canonical `key = value` text of every key.
    [[nodiscard]] std::string to_text() const;
    [[nodiscard]] std::map<std::string, std::string> to_map() const;

    /// FNV-1a over the keys that define artifacts shared between commands
    /// (data, seed, geometry, loss weights); optimizer, step-count, sampling
    /// and output settings are excluded.
    [[nodiscard]] std::string hash() const;

    [[nodiscard]] stage1::ModelConfig model_config() const;
    [[nodiscard]] stage1::TrainConfig stage1_train_config() const;
    [[nodiscard]] ar::ArConfig ar_config() const;
    [[nodiscard]] ar::Stage2TrainConfig stage2_train_config() const;
    [[nodiscard]] synth::SynthSpec synth_spec() const;
    [[nodiscard]] ar::SamplingOptions sampling() const;
    [[nodiscard]] std::vector<std::size_t> hshot_values() const;

    void validate() const;
};

/// Parses `key = value` lines; `#` starts a comment. Starts from `base`.
RunConfig parse_config(const std::string& text, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});

}  // namespace disco
