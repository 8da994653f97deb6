#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <vector>

#include "disco/dataset.hpp"
#include "disco/disentangle.hpp"
#include "disco/optim.hpp"
#include "disco/rng.hpp"

namespace disco::stage1 {

struct TrainConfig {
    double learning_rate = 1e-4;
    std::size_t batch_size = 8;
    LossWeights weights;
    bool flip_augment = true;
    /// Re-seed codebook entries that went unused for a whole epoch.
    bool reseed_dead_codes = true;
    /// Real-image gradient penalty, approximated by a finite difference along
    /// a random direction (off by default).
    bool r1_penalty = false;
    double r1_gamma = 1.0;
    double r1_probe = 1e-2;
    std::uint64_t seed = 0;
};

/// Samples translation pairs: x uniformly from the training set, y from a
/// uniformly chosen different category.
class PairSampler {
  public:
    PairSampler(const LabeledImages& data, std::size_t batch_size, bool flip, Rng rng);
    PairBatch<float> next();

  private:
    const LabeledImages* data_;
    std::vector<std::vector<std::size_t>> by_label_;
    std::size_t batch_size_;
    bool flip_;
    Rng rng_;
};

/// Alternating D/G optimization of a DisentangleModel<float>.
class Stage1Trainer {
  public:
    Stage1Trainer(DisentangleModel<float>& model, const TrainConfig& config, const LabeledImages& train_set);

    /// One alternation: a discriminator step on L_D, then a generator step.
    /// Returns the breakdown measured in the generator step. Throws
    /// NumericError if any loss is non-finite.
    LossBreakdown step();

    /// Discriminator step alone on a given batch; returns L_D.
    double discriminator_step(const PairBatch<float>& batch);
    /// Generator (E_c, E_s, F, codebook) step alone on a given batch.
    LossBreakdown generator_step(const PairBatch<float>& batch);

    [[nodiscard]] std::size_t steps_done() const { return steps_; }
    /// Entries re-seeded at the most recent epoch boundary.
    [[nodiscard]] std::size_t last_reseeded() const { return last_reseeded_; }
    [[nodiscard]] std::size_t steps_per_epoch() const { return steps_per_epoch_; }

  private:
    DisentangleModel<float>* model_;
    TrainConfig config_;
    PairSampler sampler_;
    Rng reseed_rng_;
    Rng r1_rng_;
    nn::Adam<float> g_opt_;
    nn::Adam<float> d_opt_;
    vq::UsageTracker usage_;
    nn::Tensor<float> last_rows_;
    std::size_t steps_ = 0;
    std::size_t steps_per_epoch_ = 1;
    std::size_t last_reseeded_ = 0;
};

/// Stacks images into an [N, 3, H, W] tensor.
template <typename T>
nn::Tensor<T> images_to_tensor(std::span<const Image> images);
/// Splits an [N, 3, H, W] tensor back into images (values clamped to [-1, 1]).
std::vector<Image> tensor_to_images(const nn::Tensor<float>& t);

}  // namespace disco::stage1
