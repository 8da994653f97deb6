#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "disco/dataset.hpp"
#include "disco/layers.hpp"
#include "disco/rng.hpp"

/// Small CNN classifier. With its last layer removed it serves as the frozen
/// feature extractor for the evaluation metrics; trained on every category it
/// is the style oracle that checks translation results.
namespace disco::cls {

struct ClassifierConfig {
    std::size_t image_size = 32;
    std::size_t num_classes = 8;
    std::size_t width = 32;  // channels of the first layer, doubled once

    bool operator==(const ClassifierConfig&) const = default;
};

struct ClassifierTraining {
    std::size_t steps = 1500;
    std::size_t batch_size = 32;
    double learning_rate = 1e-3;
    /// Std of Gaussian pixel noise added during training ([-1, 1] scale).
    double noise_std = 0.1;
    bool flip = true;
    std::uint64_t seed = 0;
};

template <typename T>
class SmallCnn {
  public:
    static SmallCnn create(const ClassifierConfig& config, Rng& rng);

    [[nodiscard]] const ClassifierConfig& config() const { return config_; }
    [[nodiscard]] std::size_t feature_dim() const { return 2 * config_.width; }

    /// Penultimate features [N, feature_dim].
    nn::Tensor<T> features(const nn::Tensor<T>& images) const;
    /// Class logits [N, num_classes].
    nn::Tensor<T> logits(const nn::Tensor<T>& images) const;

    [[nodiscard]] nn::ParamList<T> params() const;

  private:
    ClassifierConfig config_;
    std::vector<nn::Conv2d<T>> convs_;
    nn::Dense<T> head_;
};

/// Trains with cross-entropy and Adam; returns the final-step loss.
double train_classifier(SmallCnn<float>& model, const LabeledImages& data, const ClassifierTraining& options);

std::vector<std::size_t> predict(const SmallCnn<float>& model, std::span<const Image> images, std::size_t chunk = 64);
double accuracy(const SmallCnn<float>& model, const LabeledImages& data);

/// Frozen features of every image, one row per image.
Eigen::MatrixXd extract_features(const SmallCnn<float>& model, std::span<const Image> images,
                                 std::size_t chunk = 64);

}  // namespace disco::cls
