#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "disco/layers.hpp"
#include "disco/rng.hpp"
#include "disco/vq.hpp"

/// Stage 1: content encoder with quantization, style encoder, AdaIN decoder,
/// multi-class hinge discriminator and their losses.
namespace disco::stage1 {

struct ModelConfig {
    std::size_t image_size = 32;
    std::size_t downsamples = 2;        // content map side = image_size / 2^downsamples
    std::size_t content_dim = 64;       // d_c
    std::size_t style_dim = 16;         // d_s
    std::size_t codebook_size = 128;    // K
    std::size_t num_classes = 8;        // seen categories (discriminator outputs)
    std::size_t base_channels = 32;
    std::size_t max_channels = 64;
    std::size_t res_blocks = 2;
    std::size_t mlp_hidden = 64;
    std::size_t disc_downsamples = 2;
    double codebook_init_std = 0.02;

    [[nodiscard]] std::size_t map_side() const;
    [[nodiscard]] std::size_t channels_at(std::size_t level) const;
    /// Throws ContractError if the geometry is not realizable.
    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

struct LossWeights {
    double recon = 0.1;          // lambda_R
    double feature_match = 1.0;  // lambda_F
    double vq = 0.8;             // lambda_vq
};

/// Scalar values of every stage-1 objective term.
struct LossBreakdown {
    double d = 0.0;
    double gd = 0.0;
    double recon = 0.0;
    double fm = 0.0;
    double vq = 0.0;
    double fun = 0.0;
    double total = 0.0;
};

/// Outputs of the content path for a batch.
template <typename T>
struct ContentEncoding {
    nn::Tensor<T> continuous;          // pre-quantization 1x1 conv output, rows [N*h*w, d_c]
    std::vector<std::uint32_t> indices;
    nn::Tensor<T> quantized;           // codebook rows [N*h*w, d_c]
    nn::Tensor<T> decoder_input;       // post-quantization 1x1 conv output [N, C, h, w]
};

template <typename T>
struct DiscriminatorOutput {
    nn::Tensor<T> features;  // penultimate activations [N, C, S, S]
    nn::Tensor<T> logits;    // [N, classes, S, S]
};

template <typename T>
class DisentangleModel {
  public:
    static DisentangleModel create(const ModelConfig& config, Rng& rng);

    [[nodiscard]] const ModelConfig& config() const { return config_; }

    /// Pre-quantization content map [N, d_c, h, w].
    nn::Tensor<T> content_features(const nn::Tensor<T>& images) const;
    /// Content map -> nearest codebook rows -> straight-through -> post conv.
    /// With `use_straight_through == false` the continuous map is passed on
    /// unquantized (identity), which the gradient-equivalence check relies on.
    ContentEncoding<T> encode_content(const nn::Tensor<T>& images, bool use_straight_through = true) const;
    /// Post-quantization conv over raster rows [N*h*w, d_c].
    nn::Tensor<T> decoder_input_from_rows(const nn::Tensor<T>& rows, std::size_t batch) const;
    /// Decoder input for stored index grids (one grid of h*w per sample).
    nn::Tensor<T> decoder_input_from_indices(std::span<const std::uint32_t> indices, std::size_t batch) const;
    nn::Tensor<T> encode_style(const nn::Tensor<T>& images) const;
    nn::Tensor<T> decode(const nn::Tensor<T>& decoder_input, const nn::Tensor<T>& style) const;
    DiscriminatorOutput<T> discriminate(const nn::Tensor<T>& images) const;

    [[nodiscard]] const nn::Tensor<T>& codebook() const { return codebook_; }
    [[nodiscard]] nn::Tensor<T>& codebook() { return codebook_; }
    [[nodiscard]] vq::Codebook<float> codebook_snapshot() const;

    /// E_c (with both 1x1 convs), E_s and F.
    [[nodiscard]] nn::ParamList<T> generator_params() const;
    [[nodiscard]] nn::ParamList<T> discriminator_params() const;
    [[nodiscard]] nn::ParamList<T> codebook_params() const;
    [[nodiscard]] nn::ParamList<T> style_encoder_params() const;
    [[nodiscard]] nn::ParamList<T> decoder_params() const;
    /// Generator, codebook and discriminator, in checkpoint order.
    [[nodiscard]] nn::ParamList<T> all_params() const;

  private:
    struct ResBlock {
        nn::Conv2d<T> conv1, conv2;
    };
    void check_images(const nn::Tensor<T>& images, const char* where) const;
    nn::Tensor<T> content_trunk(const nn::Tensor<T>& images) const;

    ModelConfig config_;
    // content encoder
    nn::Conv2d<T> c_stem_;
    std::vector<nn::Conv2d<T>> c_down_;
    std::vector<ResBlock> c_res_;
    nn::Conv2d<T> c_pre_quant_;
    nn::Conv2d<T> c_post_quant_;
    nn::Tensor<T> codebook_;
    // style encoder
    nn::Conv2d<T> s_stem_;
    std::vector<nn::Conv2d<T>> s_down_;
    nn::Dense<T> s_out_;
    // decoder
    nn::Dense<T> mlp1_, mlp2_;
    std::vector<ResBlock> f_res_;
    std::vector<nn::Conv2d<T>> f_up_;
    nn::Conv2d<T> f_out_;
    // discriminator
    nn::Conv2d<T> d_stem_;
    std::vector<nn::Conv2d<T>> d_down_;
    nn::Conv2d<T> d_head_;
};

/// L_D = E[max(0, 1 + D^y(fake))] + E[max(0, 1 - D^y(real))] and
/// L_GD = -E[D^y(fake)], from per-sample label-channel scores.
template <typename T>
struct HingeLosses {
    nn::Tensor<T> d;
    nn::Tensor<T> gd;
};
template <typename T>
HingeLosses<T> hinge_losses(const nn::Tensor<T>& real_scores, const nn::Tensor<T>& fake_scores);

/// D^y: label-channel logits averaged over the discriminator's output grid.
template <typename T>
nn::Tensor<T> label_scores(const DiscriminatorOutput<T>& out, std::span<const std::size_t> labels);

/// Mean absolute error.
template <typename T>
nn::Tensor<T> l1_loss(const nn::Tensor<T>& a, const nn::Tensor<T>& b);

/// Per-element mean of the two-sided VQ loss for a batch encoding.
template <typename T>
nn::Tensor<T> batch_vq_loss(const ContentEncoding<T>& enc, const nn::Tensor<T>& codebook);

/// One translation pair batch: content images x (labels lx) and style images
/// y (labels ly), with lx[i] != ly[i].
template <typename T>
struct PairBatch {
    nn::Tensor<T> x;
    std::vector<std::size_t> lx;
    nn::Tensor<T> y;
    std::vector<std::size_t> ly;
};

/// The full stage-1 graph for one batch.
template <typename T>
struct Stage1Graph {
    nn::Tensor<T> l_d;
    nn::Tensor<T> l_gd;
    nn::Tensor<T> l_r;
    nn::Tensor<T> l_fm;
    nn::Tensor<T> l_vq;
    /// L_GD + lambda_R L_R + lambda_F L_FM + lambda_vq L_vq (the generator step objective).
    nn::Tensor<T> generator_objective;
    /// lambda_vq L_vq + L_D + L_GD + lambda_R L_R + lambda_F L_FM.
    nn::Tensor<T> total;
    ContentEncoding<T> content;
    nn::Tensor<T> translated;
    nn::Tensor<T> reconstructed;
    LossBreakdown values;
};

template <typename T>
Stage1Graph<T> stage1_losses(const DisentangleModel<T>& model, const PairBatch<T>& batch, const LossWeights& weights,
                             bool use_straight_through = true);

/// Recombines weighted terms; shared by logging and tests.
LossBreakdown combine(double d, double gd, double recon, double fm, double vq, const LossWeights& weights);

}  // namespace disco::stage1
