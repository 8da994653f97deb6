#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "disco/disentangle.hpp"
#include "disco/ops.hpp"
#include "disco/rng.hpp"
#include "disco/stage1_trainer.hpp"

namespace testing {

/// Small enough for finite differences over every parameter.
inline disco::stage1::ModelConfig micro_config() {
    disco::stage1::ModelConfig c;
    c.image_size = 4;
    c.downsamples = 1;
    c.content_dim = 3;
    c.style_dim = 2;
    c.codebook_size = 4;
    c.num_classes = 2;
    c.base_channels = 2;
    c.max_channels = 2;
    c.res_blocks = 1;
    c.mlp_hidden = 3;
    c.disc_downsamples = 1;
    c.codebook_init_std = 0.5;
    return c;
}

/// Moves every parameter off its initial value. Zero-initialised biases
/// combined with dead ReLUs can put activations exactly on a kink, where
/// central differences and the analytic gradient legitimately disagree.
template <typename T>
void jitter_params(const disco::stage1::DisentangleModel<T>& m, disco::Rng& rng, double amount = 0.1) {
    for (auto& [name, t] : m.all_params()) {
        auto t_mut = t;
        for (auto& v : t_mut.data()) v += static_cast<T>(rng.uniform(-amount, amount));
    }
}

/// Random pair batch in [-1, 1] with lx != ly.
template <typename T>
disco::stage1::PairBatch<T> random_pairs(const disco::stage1::ModelConfig& c, std::size_t n, disco::Rng& rng) {
    const std::size_t s = c.image_size;
    disco::stage1::PairBatch<T> b;
    std::vector<T> xv(n * 3 * s * s), yv(n * 3 * s * s);
    for (auto& v : xv) v = static_cast<T>(rng.uniform(-1.0, 1.0));
    for (auto& v : yv) v = static_cast<T>(rng.uniform(-1.0, 1.0));
    b.x = disco::nn::Tensor<T>({n, 3, s, s}, xv);
    b.y = disco::nn::Tensor<T>({n, 3, s, s}, yv);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t lx = rng.below(c.num_classes);
        b.lx.push_back(lx);
        b.ly.push_back((lx + 1 + rng.below(c.num_classes - 1)) % c.num_classes);
    }
    return b;
}

/// Decoder-side objective (L_GD + L_R + L_FM) for a given decoder input.
template <typename T>
disco::nn::Tensor<T> downstream_objective(const disco::stage1::DisentangleModel<T>& m,
                                          const disco::stage1::PairBatch<T>& b, const disco::nn::Tensor<T>& dec_in) {
    using namespace disco;
    const auto s_y = m.encode_style(b.y);
    const auto s_x = m.encode_style(b.x);
    const auto translated = m.decode(dec_in, s_y);
    const auto recon = m.decode(dec_in, s_x);
    const auto d_fake = m.discriminate(translated);
    const auto d_real = m.discriminate(b.y);
    const auto h = stage1::hinge_losses(stage1::label_scores(d_real, b.ly), stage1::label_scores(d_fake, b.ly));
    const auto l_r = stage1::l1_loss(b.x, recon);
    const auto l_fm = stage1::l1_loss(nn::global_mean_pool(d_real.features), nn::global_mean_pool(d_fake.features));
    return nn::add(nn::add(h.gd, nn::scale(l_r, T(0.1))), l_fm);
}

/// Max elementwise |dL/dC (straight-through)  -  dL/dC_hat (identity on the
/// quantized value)|, both taken at the pre-quantization output of E_c.
/// `magnitude` receives max |dL/dC_hat| so callers can rule out a vacuous match.
inline double straight_through_gap(const disco::stage1::DisentangleModel<double>& m,
                                   const disco::stage1::PairBatch<double>& b, double* magnitude = nullptr) {
    using namespace disco;
    using nn::Tensor;
    const std::size_t n = b.x.dim(0);
    Tensor<double> continuous, quantized;
    {
        nn::NoGradGuard ng;
        const auto enc = m.encode_content(b.x);
        continuous = enc.continuous.clone();
        quantized = enc.quantized.clone();
    }
    Tensor<double> c_leaf = continuous.clone();
    c_leaf.set_requires_grad(true);
    downstream_objective(m, b, m.decoder_input_from_rows(nn::straight_through(c_leaf, quantized.detach()), n))
        .backward();

    Tensor<double> q_leaf = quantized.clone();
    q_leaf.set_requires_grad(true);
    downstream_objective(m, b, m.decoder_input_from_rows(q_leaf, n)).backward();

    double gap = 0.0, mag = 0.0;
    for (std::size_t i = 0; i < c_leaf.numel(); ++i) {
        gap = std::max(gap, std::abs(c_leaf.grad()[i] - q_leaf.grad()[i]));
        mag = std::max(mag, std::abs(q_leaf.grad()[i]));
    }
    if (magnitude) *magnitude = mag;
    return gap;
}

}  // namespace testing
