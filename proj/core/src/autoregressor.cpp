#include "disco/autoregressor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "disco/errors.hpp"
#include "disco/ops.hpp"
#include "disco/stage1_trainer.hpp"

namespace disco::ar {

using nn::Tensor;

const char* to_string(ConditioningMode mode) {
    return mode == ConditioningMode::StyleConditioned ? "conditioned" : "unconditional";
}

ConditioningMode parse_mode(const std::string& text) {
    if (text == "conditioned") return ConditioningMode::StyleConditioned;
    if (text == "unconditional") return ConditioningMode::Unconditional;
    throw ContractError(fmt::format("unknown stage-2 variant '{}' (expected conditioned or unconditional)", text));
}

void ArConfig::validate() const {
    require(codebook_size >= 1 && grid_width >= 1 && grid_height >= 1 && style_dim >= 1,
            "AR config: sizes must be positive");
    require(layers >= 1 && embed_dim >= 1 && heads >= 1, "AR config: transformer sizes must be positive");
    if (embed_dim % heads != 0)
        throw ContractError(fmt::format("AR config: embed dim {} is not divisible by {} heads", embed_dim, heads));
}

template <typename T>
ArModel<T> ArModel<T>::create(const ArConfig& config, Rng& rng) {
    config.validate();
    ArModel m;
    m.config_ = config;
    const std::size_t k = config.codebook_size, e = config.embed_dim, n = config.sequence_length();
    const double std0 = config.init_std;
    const double std_res = std0 / std::sqrt(2.0 * static_cast<double>(config.layers));
    m.tok_emb_ = nn::randn<T>({k, e}, std0, rng).set_requires_grad(true);
    m.pos_emb_ = nn::randn<T>({n + 1, e}, std0, rng).set_requires_grad(true);
    m.style_proj_ = nn::Dense<T>::make(config.style_dim, k, rng, 1.0 / std::sqrt(static_cast<double>(config.style_dim)));
    m.start_ = nn::randn<T>({k}, 1.0, rng).set_requires_grad(true);
    for (std::size_t l = 0; l < config.layers; ++l) {
        Block b{nn::LayerNorm<T>::make(e), nn::LayerNorm<T>::make(e), nn::Dense<T>::make(e, 3 * e, rng, std0),
                nn::Dense<T>::make(e, e, rng, std_res), nn::Dense<T>::make(e, 4 * e, rng, std0),
                nn::Dense<T>::make(4 * e, e, rng, std_res)};
        m.blocks_.push_back(std::move(b));
    }
    m.ln_f_ = nn::LayerNorm<T>::make(e);
    m.head_ = nn::Dense<T>::make(e, k, rng, std0);
    return m;
}

template <typename T>
Tensor<T> ArModel<T>::slot0(const Tensor<T>& style, std::size_t batch) const {
    // The conditioning vector lives in token space (K wide) and goes through
    // the token embedding table like a soft one-hot token.
    Tensor<T> soft;
    if (config_.mode == ConditioningMode::StyleConditioned) {
        if (!style.defined() || style.rank() != 2 || style.dim(0) != batch || style.dim(1) != config_.style_dim)
            throw ContractError(fmt::format("AR model: expected style [{}, {}], got {}", batch, config_.style_dim,
                                            style.defined() ? nn::shape_str(style.shape()) : "none"));
        soft = style_proj_(style);
    } else {
        soft = nn::add_broadcast(Tensor<T>(nn::Shape{batch, config_.codebook_size}), start_);
    }
    return nn::matmul(soft, tok_emb_);
}

template <typename T>
Tensor<T> ArModel<T>::forward(const Tensor<T>& style, std::span<const std::uint32_t> tokens, std::size_t batch,
                              std::span<const std::size_t> positions) const {
    require(batch >= 1, "AR forward: batch must be at least 1");
    require(tokens.size() % batch == 0, "AR forward: token count is not a multiple of the batch size");
    const std::size_t len = tokens.size() / batch, n = config_.sequence_length(), e = config_.embed_dim;
    if (len >= n)
        throw ContractError(fmt::format("AR forward: prefix of {} tokens is too long for sequences of {}", len, n));
    for (auto t : tokens)
        if (t >= config_.codebook_size)
            throw ContractError(fmt::format("AR forward: index {} out of range [0, {})", t, config_.codebook_size));

    std::vector<std::uint32_t> pos_ids(len + 1, 0);
    for (std::size_t j = 0; j < len; ++j) {
        const std::size_t p = positions.empty() ? j + 1 : positions[j];
        require(p >= 1 && p <= n, "AR forward: token position out of range");
        pos_ids[j + 1] = static_cast<std::uint32_t>(p);
    }
    require(positions.empty() || positions.size() == len, "AR forward: one position per token column required");

    const Tensor<T> s0 = slot0(style, batch);
    Tensor<T> x = len == 0 ? nn::reshape(s0, {batch, 1, e})
                           : nn::prepend_slot(s0, nn::reshape(nn::embedding(tokens, tok_emb_), {batch, len, e}));
    x = nn::add_broadcast(x, nn::embedding(std::span<const std::uint32_t>(pos_ids), pos_emb_));
    for (const auto& b : blocks_) {
        x = nn::add(x, b.proj(nn::causal_attention(b.qkv(b.ln1(x)), config_.heads)));
        x = nn::add(x, b.fc2(nn::gelu(b.fc1(b.ln2(x)))));
    }
    return head_(ln_f_(x));
}

template <typename T>
Tensor<T> ArModel<T>::style_tensor(std::span<const T> style) const {
    if (config_.mode == ConditioningMode::Unconditional) return {};
    if (style.size() != config_.style_dim)
        throw ContractError(
            fmt::format("AR model: style has dimension {} but the model expects {}", style.size(), config_.style_dim));
    return Tensor<T>(nn::Shape{1, style.size()}, std::vector<T>(style.begin(), style.end()));
}

template <typename T>
std::vector<T> ArModel<T>::conditional_logits(std::span<const T> style, std::span<const std::uint32_t> prefix) const {
    nn::NoGradGuard no_grad;
    const Tensor<T> logits = forward(style_tensor(style), prefix, 1);
    const std::size_t k = config_.codebook_size;
    const auto begin = logits.values().begin() + static_cast<long>(prefix.size() * k);
    return std::vector<T>(begin, begin + static_cast<long>(k));
}

template <typename T>
Tensor<T> ArModel<T>::sequence_nll(const Tensor<T>& style, std::span<const std::uint32_t> indices,
                                   std::size_t batch) const {
    const std::size_t n = config_.sequence_length(), k = config_.codebook_size;
    if (indices.size() != batch * n)
        throw ContractError(
            fmt::format("sequence_nll: expected {} sequences of length {}, got {} indices", batch, n, indices.size()));
    std::vector<std::uint32_t> inputs;
    inputs.reserve(batch * (n - 1));
    for (std::size_t b = 0; b < batch; ++b)
        inputs.insert(inputs.end(), indices.begin() + static_cast<long>(b * n),
                      indices.begin() + static_cast<long>(b * n + n - 1));
    const Tensor<T> logits = nn::reshape(forward(style, inputs, batch), {batch * n, k});
    const Tensor<T> ce = nn::reshape(nn::cross_entropy(logits, indices), {batch, n});
    return nn::reshape(nn::matmul(ce, Tensor<T>(nn::Shape{n, 1}, T(1))), {batch});
}

template <typename T>
T ArModel<T>::sequence_nll(std::span<const T> style, std::span<const std::uint32_t> indices) const {
    nn::NoGradGuard no_grad;
    return sequence_nll(style_tensor(style), indices, 1).item();
}

template <typename T>
void ArModel<T>::zero_head() {
    std::fill(head_.weight.values().begin(), head_.weight.values().end(), T(0));
    std::fill(head_.bias.values().begin(), head_.bias.values().end(), T(0));
}

template <typename T>
nn::ParamList<T> ArModel<T>::params() const {
    nn::ParamList<T> p;
    p.emplace_back("ar.tok_emb", tok_emb_);
    p.emplace_back("ar.pos_emb", pos_emb_);
    style_proj_.collect(p, "ar.style_proj");
    p.emplace_back("ar.start", start_);
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        const auto pre = fmt::format("ar.block{}", i);
        blocks_[i].ln1.collect(p, pre + ".ln1");
        blocks_[i].qkv.collect(p, pre + ".qkv");
        blocks_[i].proj.collect(p, pre + ".proj");
        blocks_[i].ln2.collect(p, pre + ".ln2");
        blocks_[i].fc1.collect(p, pre + ".fc1");
        blocks_[i].fc2.collect(p, pre + ".fc2");
    }
    ln_f_.collect(p, "ar.ln_f");
    head_.collect(p, "ar.head");
    return p;
}

template class ArModel<float>;
template class ArModel<double>;

std::uint32_t sample_top_k(std::span<const float> logits, std::size_t k, Rng& rng) {
    const std::size_t n = logits.size();
    if (k < 1 || k > n) throw ContractError(fmt::format("top-k sampling: k={} outside [1, {}]", k, n));
    std::vector<std::uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) { return logits[a] > logits[b]; });
    if (k == 1) return order[0];
    std::vector<double> p(k);
    const double mx = logits[order[0]];
    double total = 0.0;
    for (std::size_t i = 0; i < k; ++i) total += p[i] = std::exp(static_cast<double>(logits[order[i]]) - mx);
    double u = rng.uniform() * total;
    for (std::size_t i = 0; i < k; ++i) {
        if (u < p[i]) return order[i];
        u -= p[i];
    }
    return order[k - 1];
}

std::vector<IndexSequence> sample_content_maps(const ArModel<float>& model, const Tensor<float>& styles,
                                               std::size_t batch, const SamplingOptions& options, Rng& rng) {
    const auto& cfg = model.config();
    if (options.top_k < 1 || options.top_k > cfg.codebook_size)
        throw ContractError(fmt::format("sampling: top_k={} outside [1, {}]", options.top_k, cfg.codebook_size));
    if (cfg.mode == ConditioningMode::StyleConditioned) {
        require(styles.defined() && styles.rank() == 2, "sampling: style vectors required for a conditioned model");
        batch = styles.dim(0);
    }
    require(batch >= 1, "sampling: nothing to sample");
    nn::NoGradGuard no_grad;
    const std::size_t n = cfg.sequence_length(), k = cfg.codebook_size;
    const std::size_t window = options.window_rows == 0 ? n : options.window_rows * cfg.grid_width;
    std::vector<IndexSequence> out(batch);
    std::vector<std::uint32_t> tokens;
    std::vector<std::size_t> positions;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t start = i > window ? i - window : 0;
        const std::size_t len = i - start;
        tokens.clear();
        for (std::size_t b = 0; b < batch; ++b) tokens.insert(tokens.end(), out[b].begin() + static_cast<long>(start), out[b].end());
        positions.resize(len);
        std::iota(positions.begin(), positions.end(), start + 1);
        const Tensor<float> logits = model.forward(styles, tokens, batch, positions);
        for (std::size_t b = 0; b < batch; ++b) {
            std::span<const float> row(logits.values().data() + (b * (len + 1) + len) * k, k);
            out[b].push_back(sample_top_k(row, options.top_k, rng));
        }
    }
    return out;
}

std::vector<RankedCandidate> compatibility_rank(const ArModel<float>& model, std::span<const float> style,
                                                const std::vector<IndexSequence>& candidates) {
    std::vector<RankedCandidate> ranked;
    ranked.reserve(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i)
        ranked.push_back({candidates[i], static_cast<double>(model.sequence_nll(style, candidates[i])), i});
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const RankedCandidate& a, const RankedCandidate& b) { return a.nll < b.nll; });
    return ranked;
}

EncodedSet encode_dataset(const stage1::DisentangleModel<float>& stage1, const LabeledImages& data, bool with_flips,
                          std::size_t chunk) {
    data.validate();
    require(chunk >= 1, "encode_dataset: chunk must be positive");
    const auto& cfg = stage1.config();
    EncodedSet set;
    set.style_dim = cfg.style_dim;
    set.sequence_length = cfg.map_side() * cfg.map_side();
    nn::NoGradGuard no_grad;
    const std::size_t passes = with_flips ? 2 : 1;
    for (std::size_t pass = 0; pass < passes; ++pass)
        for (std::size_t begin = 0; begin < data.size(); begin += chunk) {
            const std::size_t end = std::min(data.size(), begin + chunk);
            std::vector<Image> imgs;
            for (std::size_t i = begin; i < end; ++i)
                imgs.push_back(pass == 0 ? data.images[i] : flip_horizontal(data.images[i]));
            const auto x = stage1::images_to_tensor<float>(imgs);
            const auto enc = stage1.encode_content(x);
            const auto s = stage1.encode_style(x);
            set.indices.insert(set.indices.end(), enc.indices.begin(), enc.indices.end());
            set.styles.insert(set.styles.end(), s.values().begin(), s.values().end());
            for (std::size_t i = begin; i < end; ++i) set.labels.push_back(data.labels[i]);
        }
    return set;
}

void check_compatible(const ArConfig& ar, const stage1::ModelConfig& s1) {
    if (ar.codebook_size != s1.codebook_size || ar.grid_width != s1.map_side() || ar.grid_height != s1.map_side() ||
        ar.style_dim != s1.style_dim)
        throw ContractError(fmt::format(
            "geometry mismatch: stage-1 checkpoint has K={}, map {}x{}, d_s={} but the stage-2 model has K={}, map "
            "{}x{}, d_s={}",
            s1.codebook_size, s1.map_side(), s1.map_side(), s1.style_dim, ar.codebook_size, ar.grid_width,
            ar.grid_height, ar.style_dim));
}

namespace {

Tensor<float> gather_styles(const EncodedSet& set, std::span<const std::size_t> rows) {
    std::vector<float> v;
    v.reserve(rows.size() * set.style_dim);
    for (auto r : rows) {
        const auto s = set.style(r);
        v.insert(v.end(), s.begin(), s.end());
    }
    return Tensor<float>(nn::Shape{rows.size(), set.style_dim}, std::move(v));
}

std::vector<std::uint32_t> gather_sequences(const EncodedSet& set, std::span<const std::size_t> rows) {
    std::vector<std::uint32_t> v;
    v.reserve(rows.size() * set.sequence_length);
    for (auto r : rows) {
        const auto s = set.sequence(r);
        v.insert(v.end(), s.begin(), s.end());
    }
    return v;
}

}  // namespace

double mean_nll(const ArModel<float>& model, const EncodedSet& set, EvalMode mode, Rng& rng, std::size_t chunk) {
    require(set.size() >= 1, "mean_nll: empty set");
    std::vector<std::size_t> style_of(set.size());
    std::iota(style_of.begin(), style_of.end(), 0);
    if (mode == EvalMode::CrossStyle) {
        require(set.size() >= 2, "mean_nll: cross-style evaluation needs at least two samples");
        // Sattolo's algorithm: a single cycle, so no sample keeps its own style
        for (std::size_t i = set.size() - 1; i > 0; --i) std::swap(style_of[i], style_of[rng.below(i)]);
    }
    nn::NoGradGuard no_grad;
    double total = 0.0;
    for (std::size_t begin = 0; begin < set.size(); begin += chunk) {
        const std::size_t end = std::min(set.size(), begin + chunk);
        std::vector<std::size_t> rows(end - begin);
        std::iota(rows.begin(), rows.end(), begin);
        const std::span<const std::size_t> styles(style_of.data() + begin, end - begin);
        const Tensor<float> s = model.config().mode == ConditioningMode::StyleConditioned
                                    ? gather_styles(set, styles)
                                    : Tensor<float>();
        const auto nll = model.sequence_nll(s, gather_sequences(set, rows), rows.size());
        for (auto v : nll.values()) total += v;
    }
    return total / static_cast<double>(set.size());
}

Stage2Trainer::Stage2Trainer(ArModel<float>& model, const Stage2TrainConfig& config, const EncodedSet& train_set)
    : model_(&model),
      config_(config),
      data_(&train_set),
      rng_(mix_seed(config.seed ^ 0xA5A5)),
      opt_(nn::tensors_of(model.params()), nn::AdamHyper{config.learning_rate, 0.9, 0.999, 1e-8}) {
    require(config.batch_size >= 1, "stage-2 trainer: batch size must be at least 1");
    require(train_set.size() >= 1, "stage-2 trainer: empty training set");
    if (train_set.style_dim != model.config().style_dim ||
        train_set.sequence_length != model.config().sequence_length())
        throw ContractError("stage-2 trainer: encoded set does not match the model geometry");
}

double Stage2Trainer::step() {
    std::vector<std::size_t> rows(config_.batch_size);
    for (auto& r : rows) r = rng_.below(data_->size());
    return step_on(rows);
}

double Stage2Trainer::step_on(std::span<const std::size_t> samples) {
    opt_.zero_grad();
    const Tensor<float> s = model_->config().mode == ConditioningMode::StyleConditioned
                                ? gather_styles(*data_, samples)
                                : Tensor<float>();
    const Tensor<float> loss = nn::mean(model_->sequence_nll(s, gather_sequences(*data_, samples), samples.size()));
    const double value = loss.item();
    if (!std::isfinite(value)) throw NumericError("stage-2 training: nll is not finite");
    Tensor<float>(loss).backward();
    opt_.step();
    ++steps_;
    return value;
}

}  // namespace disco::ar
