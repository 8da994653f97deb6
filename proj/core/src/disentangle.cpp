#include "disco/disentangle.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "disco/errors.hpp"
#include "disco/ops.hpp"

namespace disco::stage1 {

using nn::Conv2dSpec;
using nn::PadMode;
using nn::Tensor;

std::size_t ModelConfig::map_side() const { return image_size >> downsamples; }

std::size_t ModelConfig::channels_at(std::size_t level) const {
    return std::min(base_channels << level, max_channels);
}

void ModelConfig::validate() const {
    require(image_size >= 2 && base_channels >= 1 && max_channels >= 1 && content_dim >= 1 && style_dim >= 1 &&
                mlp_hidden >= 1,
            "model config: sizes must be positive");
    require(codebook_size >= 1 && codebook_size <= 65536, "model config: codebook size must be in [1, 65536]");
    require(num_classes >= 1, "model config: need at least one seen category");
    require(downsamples < 16 && disc_downsamples < 16, "model config: too many downsampling steps");
    if (image_size % (std::size_t{1} << downsamples) != 0 || map_side() < 1)
        throw ContractError(
            fmt::format("model config: image size {} is not divisible by 2^{}", image_size, downsamples));
    if (image_size % (std::size_t{1} << disc_downsamples) != 0 || (image_size >> disc_downsamples) < 1)
        throw ContractError(fmt::format("model config: image size {} is not divisible by 2^{} (discriminator)",
                                        image_size, disc_downsamples));
}

namespace {

constexpr Conv2dSpec same3{1, 1, PadMode::Reflect};
constexpr Conv2dSpec down3{2, 1, PadMode::Reflect};
constexpr Conv2dSpec point{1, 0, PadMode::Zero};

template <typename T>
Tensor<T> adain_params(const Tensor<T>& table, std::size_t block, std::size_t which, std::size_t ch,
                       Tensor<T>* shift) {
    // layout per block: [scale1, shift1, scale2, shift2], each ch wide
    const std::size_t base = (block * 4 + which * 2) * ch;
    *shift = nn::slice_cols(table, base + ch, ch);
    return nn::add_scalar(nn::slice_cols(table, base, ch), T(1));
}

/// Per-sample normalization over C, H and W. Unlike instance norm it keeps the
/// relative channel statistics that AdaIN put in.
template <typename T>
Tensor<T> sample_norm(const Tensor<T>& x) {
    const std::size_t n = x.dim(0), rest = x.numel() / n;
    const Tensor<T> ones(nn::Shape{rest}, std::vector<T>(rest, T(1)));
    const Tensor<T> zeros(nn::Shape{rest}, std::vector<T>(rest, T(0)));
    return nn::reshape(nn::layer_norm(nn::reshape(x, {n, rest}), ones, zeros), x.shape());
}

}  // namespace

template <typename T>
DisentangleModel<T> DisentangleModel<T>::create(const ModelConfig& config, Rng& rng) {
    config.validate();
    DisentangleModel m;
    m.config_ = config;
    const auto ch = [&](std::size_t l) { return config.channels_at(l); };
    const std::size_t nd = config.downsamples, top = ch(nd);

    m.c_stem_ = nn::Conv2d<T>::make(3, ch(0), 3, same3, rng);
    for (std::size_t l = 1; l <= nd; ++l) m.c_down_.push_back(nn::Conv2d<T>::make(ch(l - 1), ch(l), 3, down3, rng));
    for (std::size_t r = 0; r < config.res_blocks; ++r)
        m.c_res_.push_back({nn::Conv2d<T>::make(top, top, 3, same3, rng), nn::Conv2d<T>::make(top, top, 3, same3, rng)});
    m.c_pre_quant_ = nn::Conv2d<T>::make(top, config.content_dim, 1, point, rng, 1.0);
    m.c_post_quant_ = nn::Conv2d<T>::make(config.content_dim, top, 1, point, rng, 1.0);
    m.codebook_ = nn::randn<T>({config.codebook_size, config.content_dim}, config.codebook_init_std, rng);
    m.codebook_.set_requires_grad(true);

    m.s_stem_ = nn::Conv2d<T>::make(3, ch(0), 3, same3, rng);
    for (std::size_t l = 1; l <= nd; ++l) m.s_down_.push_back(nn::Conv2d<T>::make(ch(l - 1), ch(l), 3, down3, rng));
    m.s_out_ = nn::Dense<T>::make(top, config.style_dim, rng);

    m.mlp1_ = nn::Dense<T>::make(config.style_dim, config.mlp_hidden, rng);
    m.mlp2_ = nn::Dense<T>::make(config.mlp_hidden, 4 * top * config.res_blocks, rng,
                                 0.1 / std::sqrt(static_cast<double>(config.mlp_hidden)));
    for (std::size_t r = 0; r < config.res_blocks; ++r)
        m.f_res_.push_back({nn::Conv2d<T>::make(top, top, 3, same3, rng), nn::Conv2d<T>::make(top, top, 3, same3, rng)});
    for (std::size_t l = nd; l >= 1; --l) m.f_up_.push_back(nn::Conv2d<T>::make(ch(l), ch(l - 1), 3, same3, rng));
    m.f_out_ = nn::Conv2d<T>::make(ch(0), 3, 3, same3, rng, 1.0);

    const std::size_t dd = config.disc_downsamples;
    m.d_stem_ = nn::Conv2d<T>::make(3, ch(0), 3, same3, rng);
    for (std::size_t l = 1; l <= dd; ++l) m.d_down_.push_back(nn::Conv2d<T>::make(ch(l - 1), ch(l), 3, down3, rng));
    m.d_head_ = nn::Conv2d<T>::make(ch(dd), config.num_classes, 1, point, rng, 1.0);
    return m;
}

template <typename T>
void DisentangleModel<T>::check_images(const Tensor<T>& images, const char* where) const {
    if (images.rank() != 4 || images.dim(1) != 3 || images.dim(2) != config_.image_size ||
        images.dim(3) != config_.image_size)
        throw ContractError(fmt::format("{}: expected images [N, 3, {}, {}], got {}", where, config_.image_size,
                                        config_.image_size, nn::shape_str(images.shape())));
}

template <typename T>
Tensor<T> DisentangleModel<T>::content_trunk(const Tensor<T>& images) const {
    check_images(images, "content encoder");
    Tensor<T> h = nn::relu(nn::instance_norm(c_stem_(images)));
    for (const auto& conv : c_down_) h = nn::relu(nn::instance_norm(conv(h)));
    for (const auto& rb : c_res_) {
        Tensor<T> r = nn::relu(nn::instance_norm(rb.conv1(h)));
        h = nn::add(h, nn::instance_norm(rb.conv2(r)));
    }
    return h;
}

template <typename T>
Tensor<T> DisentangleModel<T>::content_features(const Tensor<T>& images) const {
    return c_pre_quant_(content_trunk(images));
}

template <typename T>
ContentEncoding<T> DisentangleModel<T>::encode_content(const Tensor<T>& images, bool use_straight_through) const {
    const Tensor<T> pre = content_features(images);
    const std::size_t n = pre.dim(0);
    ContentEncoding<T> enc;
    enc.continuous = nn::to_channels_last(pre);
    enc.indices = vq::nearest_rows(enc.continuous, codebook_);
    enc.quantized = nn::embedding(std::span<const std::uint32_t>(enc.indices), codebook_);
    const Tensor<T> passed =
        use_straight_through ? nn::straight_through(enc.continuous, enc.quantized) : enc.continuous;
    enc.decoder_input = decoder_input_from_rows(passed, n);
    return enc;
}

template <typename T>
Tensor<T> DisentangleModel<T>::decoder_input_from_rows(const Tensor<T>& rows, std::size_t batch) const {
    const std::size_t side = config_.map_side();
    if (rows.rank() != 2 || rows.dim(0) != batch * side * side || rows.dim(1) != config_.content_dim)
        throw ContractError(fmt::format("decoder input: expected rows [{}, {}], got {}", batch * side * side,
                                        config_.content_dim, nn::shape_str(rows.shape())));
    return c_post_quant_(nn::to_channels_first(rows, batch, config_.content_dim, side, side));
}

template <typename T>
Tensor<T> DisentangleModel<T>::decoder_input_from_indices(std::span<const std::uint32_t> indices,
                                                          std::size_t batch) const {
    const std::size_t side = config_.map_side();
    if (indices.size() != batch * side * side)
        throw ContractError(fmt::format("decoder input: expected {} indices ({} grids of {}x{}), got {}",
                                        batch * side * side, batch, side, side, indices.size()));
    for (auto k : indices)
        if (k >= config_.codebook_size)
            throw ContractError(fmt::format("decoder input: index {} out of range [0, {})", k, config_.codebook_size));
    return decoder_input_from_rows(nn::embedding(indices, codebook_), batch);
}

template <typename T>
Tensor<T> DisentangleModel<T>::encode_style(const Tensor<T>& images) const {
    check_images(images, "style encoder");
    Tensor<T> h = nn::relu(s_stem_(images));
    for (const auto& conv : s_down_) h = nn::relu(conv(h));
    return s_out_(nn::global_mean_pool(h));
}

template <typename T>
Tensor<T> DisentangleModel<T>::decode(const Tensor<T>& decoder_input, const Tensor<T>& style) const {
    const std::size_t top = config_.channels_at(config_.downsamples), side = config_.map_side();
    if (decoder_input.rank() != 4 || decoder_input.dim(1) != top || decoder_input.dim(2) != side ||
        decoder_input.dim(3) != side)
        throw ContractError(fmt::format("decoder: expected content [N, {}, {}, {}], got {}", top, side, side,
                                        nn::shape_str(decoder_input.shape())));
    if (style.rank() != 2 || style.dim(1) != config_.style_dim || style.dim(0) != decoder_input.dim(0))
        throw ContractError(fmt::format("decoder: expected style [{}, {}], got {}", decoder_input.dim(0),
                                        config_.style_dim, nn::shape_str(style.shape())));
    const Tensor<T> table = mlp2_(nn::relu(mlp1_(style)));
    Tensor<T> h = decoder_input;
    for (std::size_t r = 0; r < f_res_.size(); ++r) {
        Tensor<T> sh1, sh2;
        const Tensor<T> sc1 = adain_params(table, r, 0, top, &sh1);
        const Tensor<T> sc2 = adain_params(table, r, 1, top, &sh2);
        Tensor<T> t = nn::relu(nn::adain(f_res_[r].conv1(h), sc1, sh1));
        h = nn::add(h, nn::adain(f_res_[r].conv2(t), sc2, sh2));
    }
    for (const auto& conv : f_up_) h = nn::relu(sample_norm(conv(nn::upsample_nearest2x(h))));
    return nn::tanh(f_out_(h));
}

template <typename T>
DiscriminatorOutput<T> DisentangleModel<T>::discriminate(const Tensor<T>& images) const {
    check_images(images, "discriminator");
    Tensor<T> h = d_stem_(images);
    for (const auto& conv : d_down_) h = conv(nn::leaky_relu(h));
    DiscriminatorOutput<T> out;
    out.features = nn::leaky_relu(h);
    out.logits = d_head_(out.features);
    return out;
}

template <typename T>
vq::Codebook<float> DisentangleModel<T>::codebook_snapshot() const {
    vq::Codebook<float> book{config_.codebook_size, config_.content_dim, {}};
    book.entries.assign(codebook_.values().begin(), codebook_.values().end());
    return book;
}

template <typename T>
nn::ParamList<T> DisentangleModel<T>::style_encoder_params() const {
    nn::ParamList<T> p;
    s_stem_.collect(p, "style.stem");
    for (std::size_t i = 0; i < s_down_.size(); ++i) s_down_[i].collect(p, fmt::format("style.down{}", i));
    s_out_.collect(p, "style.out");
    return p;
}

template <typename T>
nn::ParamList<T> DisentangleModel<T>::decoder_params() const {
    nn::ParamList<T> p;
    mlp1_.collect(p, "decoder.mlp1");
    mlp2_.collect(p, "decoder.mlp2");
    for (std::size_t i = 0; i < f_res_.size(); ++i) {
        f_res_[i].conv1.collect(p, fmt::format("decoder.res{}.conv1", i));
        f_res_[i].conv2.collect(p, fmt::format("decoder.res{}.conv2", i));
    }
    for (std::size_t i = 0; i < f_up_.size(); ++i) f_up_[i].collect(p, fmt::format("decoder.up{}", i));
    f_out_.collect(p, "decoder.out");
    return p;
}

template <typename T>
nn::ParamList<T> DisentangleModel<T>::generator_params() const {
    nn::ParamList<T> p;
    c_stem_.collect(p, "content.stem");
    for (std::size_t i = 0; i < c_down_.size(); ++i) c_down_[i].collect(p, fmt::format("content.down{}", i));
    for (std::size_t i = 0; i < c_res_.size(); ++i) {
        c_res_[i].conv1.collect(p, fmt::format("content.res{}.conv1", i));
        c_res_[i].conv2.collect(p, fmt::format("content.res{}.conv2", i));
    }
    c_pre_quant_.collect(p, "content.pre_quant");
    c_post_quant_.collect(p, "content.post_quant");
    for (auto& e : style_encoder_params()) p.push_back(e);
    for (auto& e : decoder_params()) p.push_back(e);
    return p;
}

template <typename T>
nn::ParamList<T> DisentangleModel<T>::codebook_params() const {
    return {{"codebook", codebook_}};
}

template <typename T>
nn::ParamList<T> DisentangleModel<T>::discriminator_params() const {
    nn::ParamList<T> p;
    d_stem_.collect(p, "disc.stem");
    for (std::size_t i = 0; i < d_down_.size(); ++i) d_down_[i].collect(p, fmt::format("disc.down{}", i));
    d_head_.collect(p, "disc.head");
    return p;
}

template <typename T>
nn::ParamList<T> DisentangleModel<T>::all_params() const {
    nn::ParamList<T> p = generator_params();
    for (auto& e : codebook_params()) p.push_back(e);
    for (auto& e : discriminator_params()) p.push_back(e);
    return p;
}

template <typename T>
HingeLosses<T> hinge_losses(const Tensor<T>& real_scores, const Tensor<T>& fake_scores) {
    require(real_scores.rank() == 1 && fake_scores.rank() == 1, "hinge_losses: expected per-sample scores");
    HingeLosses<T> h;
    const Tensor<T> fake_term = nn::mean(nn::relu(nn::add_scalar(fake_scores, T(1))));
    const Tensor<T> real_term = nn::mean(nn::relu(nn::add_scalar(nn::scale(real_scores, T(-1)), T(1))));
    h.d = nn::add(fake_term, real_term);
    h.gd = nn::scale(nn::mean(fake_scores), T(-1));
    return h;
}

template <typename T>
Tensor<T> label_scores(const DiscriminatorOutput<T>& out, std::span<const std::size_t> labels) {
    return nn::select_channel_mean(out.logits, labels);
}

template <typename T>
Tensor<T> l1_loss(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape())
        throw ContractError(
            fmt::format("l1_loss: shapes differ {} vs {}", nn::shape_str(a.shape()), nn::shape_str(b.shape())));
    return nn::mean(nn::abs(nn::sub(a, b)));
}

template <typename T>
Tensor<T> batch_vq_loss(const ContentEncoding<T>& enc, const Tensor<T>& codebook) {
    const Tensor<T> total = vq::vq_loss(enc.continuous, codebook, std::span<const std::uint32_t>(enc.indices));
    return nn::scale(total, T(1) / static_cast<T>(enc.continuous.numel()));
}

LossBreakdown combine(double d, double gd, double recon, double fm, double vq, const LossWeights& w) {
    LossBreakdown b{d, gd, recon, fm, vq, 0.0, 0.0};
    b.fun = d + gd + w.recon * recon + w.feature_match * fm;
    b.total = w.vq * vq + b.fun;
    return b;
}

template <typename T>
Stage1Graph<T> stage1_losses(const DisentangleModel<T>& model, const PairBatch<T>& batch, const LossWeights& w,
                             bool use_straight_through) {
    const std::size_t n = batch.lx.size();
    require(n >= 1 && batch.ly.size() == n && batch.x.rank() == 4 && batch.x.dim(0) == n && batch.y.rank() == 4 &&
                batch.y.dim(0) == n,
            "stage1_losses: batch images and labels disagree in size");
    for (std::size_t i = 0; i < n; ++i)
        if (batch.lx[i] == batch.ly[i])
            throw ContractError(fmt::format("stage1_losses: pair {} has content and style from the same category {}",
                                            i, batch.lx[i]));
    Stage1Graph<T> g;
    g.content = model.encode_content(batch.x, use_straight_through);
    const Tensor<T> s_y = model.encode_style(batch.y);
    const Tensor<T> s_x = model.encode_style(batch.x);
    g.translated = model.decode(g.content.decoder_input, s_y);
    g.reconstructed = model.decode(g.content.decoder_input, s_x);

    const auto d_fake = model.discriminate(g.translated);
    const auto d_real = model.discriminate(batch.y);
    const auto hinge = hinge_losses(label_scores(d_real, batch.ly), label_scores(d_fake, batch.ly));
    g.l_d = hinge.d;
    g.l_gd = hinge.gd;
    g.l_r = l1_loss(batch.x, g.reconstructed);
    g.l_fm = l1_loss(nn::global_mean_pool(d_real.features), nn::global_mean_pool(d_fake.features));
    g.l_vq = batch_vq_loss(g.content, model.codebook());

    const Tensor<T> weighted = nn::add(nn::add(nn::scale(g.l_r, static_cast<T>(w.recon)),
                                               nn::scale(g.l_fm, static_cast<T>(w.feature_match))),
                                       nn::scale(g.l_vq, static_cast<T>(w.vq)));
    g.generator_objective = nn::add(g.l_gd, weighted);
    g.total = nn::add(g.l_d, g.generator_objective);
    g.values = combine(g.l_d.item(), g.l_gd.item(), g.l_r.item(), g.l_fm.item(), g.l_vq.item(), w);
    return g;
}

#define DISCO_INSTANTIATE_STAGE1(T)                                                                              \
    template class DisentangleModel<T>;                                                                          \
    template HingeLosses<T> hinge_losses(const Tensor<T>&, const Tensor<T>&);                                    \
    template Tensor<T> label_scores(const DiscriminatorOutput<T>&, std::span<const std::size_t>);               \
    template Tensor<T> l1_loss(const Tensor<T>&, const Tensor<T>&);                                             \
    template Tensor<T> batch_vq_loss(const ContentEncoding<T>&, const Tensor<T>&);                              \
    template Stage1Graph<T> stage1_losses(const DisentangleModel<T>&, const PairBatch<T>&, const LossWeights&, \
                                          bool);

DISCO_INSTANTIATE_STAGE1(float)
DISCO_INSTANTIATE_STAGE1(double)

}  // namespace disco::stage1
