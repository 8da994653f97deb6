#include "disco/classifier.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "disco/errors.hpp"
#include "disco/ops.hpp"
#include "disco/optim.hpp"
#include "disco/stage1_trainer.hpp"

namespace disco::cls {

using nn::Tensor;

template <typename T>
SmallCnn<T> SmallCnn<T>::create(const ClassifierConfig& config, Rng& rng) {
    require(config.num_classes >= 2, "classifier: need at least two classes");
    require(config.width >= 1, "classifier: width must be positive");
    if (config.image_size < 8 || config.image_size % 8 != 0)
        throw ContractError(fmt::format("classifier: image size {} must be a multiple of 8", config.image_size));
    SmallCnn m;
    m.config_ = config;
    const std::size_t w = config.width;
    const nn::Conv2dSpec same{1, 1, nn::PadMode::Zero}, down{2, 1, nn::PadMode::Zero};
    m.convs_.push_back(nn::Conv2d<T>::make(3, w, 3, same, rng));
    m.convs_.push_back(nn::Conv2d<T>::make(w, w, 3, down, rng));
    m.convs_.push_back(nn::Conv2d<T>::make(w, 2 * w, 3, down, rng));
    m.convs_.push_back(nn::Conv2d<T>::make(2 * w, 2 * w, 3, down, rng));
    m.head_ = nn::Dense<T>::make(2 * w, config.num_classes, rng);
    return m;
}

template <typename T>
Tensor<T> SmallCnn<T>::features(const Tensor<T>& images) const {
    if (images.rank() != 4 || images.dim(1) != 3 || images.dim(2) != config_.image_size ||
        images.dim(3) != config_.image_size)
        throw ContractError(fmt::format("classifier: expected images [N, 3, {0}, {0}], got {1}", config_.image_size,
                                        nn::shape_str(images.shape())));
    Tensor<T> h = images;
    for (const auto& conv : convs_) h = nn::relu(conv(h));
    return nn::global_mean_pool(h);
}

template <typename T>
Tensor<T> SmallCnn<T>::logits(const Tensor<T>& images) const {
    return head_(features(images));
}

template <typename T>
nn::ParamList<T> SmallCnn<T>::params() const {
    nn::ParamList<T> p;
    for (std::size_t i = 0; i < convs_.size(); ++i) convs_[i].collect(p, fmt::format("cls.conv{}", i));
    head_.collect(p, "cls.head");
    return p;
}

template class SmallCnn<float>;
template class SmallCnn<double>;

double train_classifier(SmallCnn<float>& model, const LabeledImages& data, const ClassifierTraining& options) {
    data.validate();
    require(data.size() >= 1 && options.batch_size >= 1, "train_classifier: empty data or batch");
    for (auto l : data.labels)
        require(l < model.config().num_classes, "train_classifier: label exceeds the classifier's class count");
    Rng rng(mix_seed(options.seed ^ 0xC1A55));
    nn::Adam<float> opt(nn::tensors_of(model.params()), nn::AdamHyper{options.learning_rate, 0.9, 0.999, 1e-8});
    double last = 0.0;
    std::vector<Image> batch;
    std::vector<std::uint32_t> targets;
    for (std::size_t step = 0; step < options.steps; ++step) {
        batch.clear();
        targets.clear();
        for (std::size_t b = 0; b < options.batch_size; ++b) {
            const std::size_t i = rng.below(data.size());
            Image img = options.flip && rng.bernoulli(0.5) ? flip_horizontal(data.images[i]) : data.images[i];
            if (options.noise_std > 0.0)
                for (auto& v : img.chw) v = std::clamp(v + static_cast<float>(rng.normal(0.0, options.noise_std)), -1.0f, 1.0f);
            batch.push_back(std::move(img));
            targets.push_back(static_cast<std::uint32_t>(data.labels[i]));
        }
        opt.zero_grad();
        Tensor<float> loss = nn::mean(nn::cross_entropy(model.logits(stage1::images_to_tensor<float>(batch)), targets));
        last = loss.item();
        if (!std::isfinite(last)) throw NumericError("classifier training diverged");
        loss.backward();
        opt.step();
    }
    return last;
}

std::vector<std::size_t> predict(const SmallCnn<float>& model, std::span<const Image> images, std::size_t chunk) {
    nn::NoGradGuard no_grad;
    std::vector<std::size_t> out;
    const std::size_t k = model.config().num_classes;
    for (std::size_t begin = 0; begin < images.size(); begin += chunk) {
        const std::size_t end = std::min(images.size(), begin + chunk);
        const auto logits = model.logits(stage1::images_to_tensor<float>(images.subspan(begin, end - begin)));
        for (std::size_t r = 0; r < end - begin; ++r) {
            const float* row = logits.values().data() + r * k;
            out.push_back(static_cast<std::size_t>(std::max_element(row, row + k) - row));
        }
    }
    return out;
}

double accuracy(const SmallCnn<float>& model, const LabeledImages& data) {
    require(data.size() >= 1, "accuracy: empty data");
    const auto pred = predict(model, data.images);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == data.labels[i];
    return static_cast<double>(hits) / static_cast<double>(pred.size());
}

Eigen::MatrixXd extract_features(const SmallCnn<float>& model, std::span<const Image> images, std::size_t chunk) {
    require(!images.empty(), "extract_features: no images");
    nn::NoGradGuard no_grad;
    const std::size_t d = model.feature_dim();
    Eigen::MatrixXd out(static_cast<Eigen::Index>(images.size()), static_cast<Eigen::Index>(d));
    for (std::size_t begin = 0; begin < images.size(); begin += chunk) {
        const std::size_t end = std::min(images.size(), begin + chunk);
        const auto f = model.features(stage1::images_to_tensor<float>(images.subspan(begin, end - begin)));
        for (std::size_t r = 0; r < end - begin; ++r)
            for (std::size_t c = 0; c < d; ++c)
                out(static_cast<Eigen::Index>(begin + r), static_cast<Eigen::Index>(c)) = f.values()[r * d + c];
    }
    return out;
}

}  // namespace disco::cls
