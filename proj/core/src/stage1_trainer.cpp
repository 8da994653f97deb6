#include "disco/stage1_trainer.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "disco/errors.hpp"
#include "disco/ops.hpp"

namespace disco::stage1 {

using nn::Tensor;

template <typename T>
Tensor<T> images_to_tensor(std::span<const Image> images) {
    require(!images.empty(), "images_to_tensor: no images");
    const std::size_t h = images[0].height, w = images[0].width;
    for (const auto& img : images)
        require(img.height == h && img.width == w, "images_to_tensor: images differ in size");
    return Tensor<T>(nn::Shape{images.size(), 3, h, w}, stack_images<T>(images));
}

std::vector<Image> tensor_to_images(const Tensor<float>& t) {
    require(t.rank() == 4 && t.dim(1) == 3, "tensor_to_images: expected [N, 3, H, W]");
    const std::size_t n = t.dim(0), h = t.dim(2), w = t.dim(3), plane = 3 * h * w;
    std::vector<Image> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Image img(h, w);
        for (std::size_t j = 0; j < plane; ++j) img.chw[j] = std::clamp(t.values()[i * plane + j], -1.0f, 1.0f);
        out.push_back(std::move(img));
    }
    return out;
}

PairSampler::PairSampler(const LabeledImages& data, std::size_t batch_size, bool flip, Rng rng)
    : data_(&data), by_label_(data.by_label()), batch_size_(batch_size), flip_(flip), rng_(std::move(rng)) {
    data.validate();
    require(batch_size >= 1, "pair sampler: batch size must be at least 1");
    std::size_t populated = 0;
    for (const auto& members : by_label_) populated += !members.empty();
    require(populated >= 2, "pair sampler: translation pairs need at least two non-empty categories");
}

PairBatch<float> PairSampler::next() {
    std::vector<Image> xs, ys;
    PairBatch<float> b;
    for (std::size_t i = 0; i < batch_size_; ++i) {
        const std::size_t xi = rng_.below(data_->size());
        const std::size_t lx = data_->labels[xi];
        std::size_t ly = 0;
        do {
            ly = rng_.below(by_label_.size());
        } while (ly == lx || by_label_[ly].empty());
        const std::size_t yi = by_label_[ly][rng_.below(by_label_[ly].size())];
        const bool fx = flip_ && rng_.bernoulli(0.5);
        const bool fy = flip_ && rng_.bernoulli(0.5);
        xs.push_back(fx ? flip_horizontal(data_->images[xi]) : data_->images[xi]);
        ys.push_back(fy ? flip_horizontal(data_->images[yi]) : data_->images[yi]);
        b.lx.push_back(lx);
        b.ly.push_back(ly);
    }
    b.x = images_to_tensor<float>(xs);
    b.y = images_to_tensor<float>(ys);
    return b;
}

namespace {

std::vector<Tensor<float>> generator_side(const DisentangleModel<float>& m) {
    auto params = nn::tensors_of(m.generator_params());
    params.push_back(m.codebook());
    return params;
}

void require_finite(double v, const char* what) {
    if (!std::isfinite(v)) throw NumericError(fmt::format("stage-1 training: {} is not finite", what));
}

}  // namespace

Stage1Trainer::Stage1Trainer(DisentangleModel<float>& model, const TrainConfig& config,
                             const LabeledImages& train_set)
    : model_(&model),
      config_(config),
      sampler_(train_set, config.batch_size, config.flip_augment, Rng(mix_seed(config.seed ^ 0x5A17))),
      reseed_rng_(mix_seed(config.seed ^ 0xC0DE)),
      r1_rng_(mix_seed(config.seed ^ 0x0071)),
      g_opt_(generator_side(model), nn::AdamHyper{config.learning_rate, 0.9, 0.999, 1e-8}),
      d_opt_(nn::tensors_of(model.discriminator_params()), nn::AdamHyper{config.learning_rate, 0.9, 0.999, 1e-8}),
      usage_(model.config().codebook_size) {
    steps_per_epoch_ = std::max<std::size_t>(1, (train_set.size() + config.batch_size - 1) / config.batch_size);
}

double Stage1Trainer::discriminator_step(const PairBatch<float>& batch) {
    Tensor<float> fake;
    {
        nn::NoGradGuard no_grad;
        const auto enc = model_->encode_content(batch.x);
        fake = model_->decode(enc.decoder_input, model_->encode_style(batch.y));
    }
    d_opt_.zero_grad();
    const auto real_out = model_->discriminate(batch.y);
    const Tensor<float> real_scores = label_scores(real_out, batch.ly);
    const auto hinge = hinge_losses(real_scores, label_scores(model_->discriminate(fake), batch.ly));
    Tensor<float> loss = hinge.d;
    if (config_.r1_penalty) {
        // E_v[((D(y + h v) - D(y)) / h)^2] approximates ||grad_y D(y)||^2 for v ~ N(0, I)
        Tensor<float> probe = batch.y.clone();
        for (auto& v : probe.values()) v += static_cast<float>(config_.r1_probe * r1_rng_.normal());
        const Tensor<float> diff = nn::scale(nn::sub(label_scores(model_->discriminate(probe), batch.ly), real_scores),
                                             static_cast<float>(1.0 / config_.r1_probe));
        loss = nn::add(loss, nn::scale(nn::mean(nn::square(diff)), static_cast<float>(0.5 * config_.r1_gamma)));
    }
    const double value = hinge.d.item();
    require_finite(loss.item(), "L_D");
    loss.backward();
    d_opt_.step();
    return value;
}

LossBreakdown Stage1Trainer::generator_step(const PairBatch<float>& batch) {
    const auto d_params = model_->discriminator_params();
    nn::set_trainable(d_params, false);
    g_opt_.zero_grad();
    LossBreakdown values;
    try {
        auto graph = stage1_losses(*model_, batch, config_.weights);
        values = graph.values;
        require_finite(values.total, "L_total");
        graph.generator_objective.backward();
        usage_.record(graph.content.indices);
        last_rows_ = graph.content.continuous.detach();
    } catch (...) {
        nn::set_trainable(d_params, true);
        throw;
    }
    g_opt_.step();
    nn::set_trainable(d_params, true);
    return values;
}

LossBreakdown Stage1Trainer::step() {
    const auto batch = sampler_.next();
    discriminator_step(batch);
    const LossBreakdown values = generator_step(batch);
    ++steps_;
    last_reseeded_ = 0;
    if (config_.reseed_dead_codes && steps_ % steps_per_epoch_ == 0 && last_rows_.defined())
        last_reseeded_ = usage_.reseed(model_->codebook(), last_rows_, reseed_rng_);
    return values;
}

template Tensor<float> images_to_tensor(std::span<const Image>);
template Tensor<double> images_to_tensor(std::span<const Image>);

}  // namespace disco::stage1
