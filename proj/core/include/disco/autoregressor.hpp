#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "disco/dataset.hpp"
#include "disco/disentangle.hpp"
#include "disco/layers.hpp"
#include "disco/optim.hpp"
#include "disco/rng.hpp"

/// Stage 2: a GPT-2 style transformer over codebook index sequences,
/// conditioned on a style vector placed in slot 0.
namespace disco::ar {

enum class ConditioningMode { StyleConditioned, Unconditional };

const char* to_string(ConditioningMode mode);
ConditioningMode parse_mode(const std::string& text);

struct ArConfig {
    std::size_t codebook_size = 128;  // K
    std::size_t grid_width = 8;       // w
    std::size_t grid_height = 8;      // h
    std::size_t style_dim = 16;       // d_s
    std::size_t layers = 4;
    std::size_t embed_dim = 128;
    std::size_t heads = 4;
    ConditioningMode mode = ConditioningMode::StyleConditioned;
    double init_std = 0.02;

    [[nodiscard]] std::size_t sequence_length() const { return grid_width * grid_height; }
    void validate() const;
    bool operator==(const ArConfig&) const = default;
};

/// Raster-ordered codebook indices of one content map.
using IndexSequence = std::vector<std::uint32_t>;

template <typename T>
class ArModel {
  public:
    static ArModel create(const ArConfig& config, Rng& rng);

    [[nodiscard]] const ArConfig& config() const { return config_; }

    /// Teacher-forced logits. `tokens` holds B rows of L tokens (L may be 0);
    /// `positions` gives the slot index (1..N) of each token column and
    /// defaults to 1..L. Returns [B, L+1, K]: row j scores the token that
    /// follows the first j visible tokens. `style` is [B, d_s] and ignored in
    /// Unconditional mode (pass an undefined tensor there).
    nn::Tensor<T> forward(const nn::Tensor<T>& style, std::span<const std::uint32_t> tokens, std::size_t batch,
                          std::span<const std::size_t> positions = {}) const;

    /// Logits for position i = prefix.size() + 1 given s and the prefix.
    std::vector<T> conditional_logits(std::span<const T> style, std::span<const std::uint32_t> prefix) const;

    /// Per-sample -sum_i log p(c_i | s, c_<i) as a graph tensor [B], from one
    /// teacher-forced pass. `indices` holds B full sequences.
    nn::Tensor<T> sequence_nll(const nn::Tensor<T>& style, std::span<const std::uint32_t> indices,
                               std::size_t batch) const;
    /// Scalar convenience wrapper for one sequence.
    T sequence_nll(std::span<const T> style, std::span<const std::uint32_t> indices) const;

    /// Sets the output head to zero (uniform predictions).
    void zero_head();

    [[nodiscard]] nn::ParamList<T> params() const;

  private:
    struct Block {
        nn::LayerNorm<T> ln1, ln2;
        nn::Dense<T> qkv, proj, fc1, fc2;
    };
    nn::Tensor<T> slot0(const nn::Tensor<T>& style, std::size_t batch) const;
    nn::Tensor<T> style_tensor(std::span<const T> style) const;

    ArConfig config_;
    nn::Tensor<T> tok_emb_;   // [K, E]
    nn::Tensor<T> pos_emb_;   // [1 + N, E]
    nn::Dense<T> style_proj_; // d_s -> K
    nn::Tensor<T> start_;     // [K], learned start token for Unconditional mode
    std::vector<Block> blocks_;
    nn::LayerNorm<T> ln_f_;
    nn::Dense<T> head_;
};

/// Draws one index from the `k` largest logits (ties broken towards lower
/// indices), renormalized with temperature 1.
std::uint32_t sample_top_k(std::span<const float> logits, std::size_t k, Rng& rng);

struct SamplingOptions {
    std::size_t top_k = 100;
    /// Rows of visible context; 0 means the full prefix.
    std::size_t window_rows = 0;
};

/// Samples one content map per row of `styles` ([B, d_s]; ignored and may be
/// undefined in Unconditional mode, then `batch` sequences are drawn).
std::vector<IndexSequence> sample_content_maps(const ArModel<float>& model, const nn::Tensor<float>& styles,
                                               std::size_t batch, const SamplingOptions& options, Rng& rng);

struct RankedCandidate {
    IndexSequence indices;
    double nll = 0.0;
    std::size_t original_position = 0;
};

/// Candidates sorted by ascending nll under style `s` (stable).
std::vector<RankedCandidate> compatibility_rank(const ArModel<float>& model, std::span<const float> style,
                                                const std::vector<IndexSequence>& candidates);

/// Style vectors and index sequences of a dataset under a frozen stage-1 model.
struct EncodedSet {
    std::size_t style_dim = 0;
    std::size_t sequence_length = 0;
    std::vector<float> styles;           // n * d_s
    std::vector<std::uint32_t> indices;  // n * N
    std::vector<std::size_t> labels;

    [[nodiscard]] std::size_t size() const { return labels.size(); }
    [[nodiscard]] std::span<const float> style(std::size_t i) const {
        return {styles.data() + i * style_dim, style_dim};
    }
    [[nodiscard]] std::span<const std::uint32_t> sequence(std::size_t i) const {
        return {indices.data() + i * sequence_length, sequence_length};
    }
};

/// Encodes every image (and, with `with_flips`, its mirror image as well).
EncodedSet encode_dataset(const stage1::DisentangleModel<float>& stage1, const LabeledImages& data,
                          bool with_flips = false, std::size_t chunk = 32);

/// Throws ContractError naming both geometries if the AR model cannot read
/// the stage-1 model's content maps.
void check_compatible(const ArConfig& ar, const stage1::ModelConfig& s1);

enum class EvalMode {
    Matched,     // nll(C^x | s^x)
    CrossStyle,  // nll(C^x | s^y), s^y from a different image
};

/// Mean per-sequence nll over `set`. CrossStyle pairs every sequence with the
/// style of another sample via a fixed-point-free permutation drawn from `rng`.
double mean_nll(const ArModel<float>& model, const EncodedSet& set, EvalMode mode, Rng& rng,
                std::size_t chunk = 32);

struct Stage2TrainConfig {
    double learning_rate = 5e-5;
    std::size_t batch_size = 4;
    std::uint64_t seed = 0;
};

class Stage2Trainer {
  public:
    Stage2Trainer(ArModel<float>& model, const Stage2TrainConfig& config, const EncodedSet& train_set);
    /// One optimizer step on a random batch; returns the batch mean nll.
    double step();
    /// One optimizer step on the given samples.
    double step_on(std::span<const std::size_t> samples);
    [[nodiscard]] std::size_t steps_done() const { return steps_; }

  private:
    ArModel<float>* model_;
    Stage2TrainConfig config_;
    const EncodedSet* data_;
    Rng rng_;
    nn::Adam<float> opt_;
    std::size_t steps_ = 0;
};

}  // namespace disco::ar
