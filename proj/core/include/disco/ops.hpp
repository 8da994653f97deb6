#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "disco/tensor.hpp"

/// Differentiable operations over Tensor<T>. Every op is instantiated for
/// float (training) and double (verification).
namespace disco::nn {

// ---- elementwise ---------------------------------------------------------

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T factor);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& a, T c);
/// x[..., trailing] + y[trailing]; y broadcast over the leading dims of x.
template <typename T> Tensor<T> add_broadcast(const Tensor<T>& x, const Tensor<T>& y);

template <typename T> Tensor<T> relu(const Tensor<T>& x);
template <typename T> Tensor<T> leaky_relu(const Tensor<T>& x, T slope = T(0.2));
template <typename T> Tensor<T> tanh(const Tensor<T>& x);
/// GPT-2 tanh approximation.
template <typename T> Tensor<T> gelu(const Tensor<T>& x);
template <typename T> Tensor<T> abs(const Tensor<T>& x);
template <typename T> Tensor<T> square(const Tensor<T>& x);

// ---- reductions / shape --------------------------------------------------

template <typename T> Tensor<T> sum(const Tensor<T>& x);
template <typename T> Tensor<T> mean(const Tensor<T>& x);
template <typename T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);
/// Columns [start, start+len) of a [M, n] matrix.
template <typename T> Tensor<T> slice_cols(const Tensor<T>& x, std::size_t start, std::size_t len);
/// [N, C, H, W] -> [N*H*W, C] with raster-ordered rows (left-to-right, top-to-bottom).
template <typename T> Tensor<T> to_channels_last(const Tensor<T>& x);
/// Inverse of to_channels_last for the given N, C, H, W.
template <typename T>
Tensor<T> to_channels_first(const Tensor<T>& rows, std::size_t n, std::size_t c, std::size_t h, std::size_t w);
/// Concatenate [B, E] in front of [B, L, E] -> [B, L+1, E].
template <typename T> Tensor<T> prepend_slot(const Tensor<T>& slot, const Tensor<T>& seq);

// ---- linear algebra -----------------------------------------------------

template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
/// x[..., in] * w[in, out] + b[out] (b may be undefined).
template <typename T> Tensor<T> dense(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);
/// Row gather: out[i] = table[ids[i]].
template <typename T> Tensor<T> embedding(std::span<const std::uint32_t> ids, const Tensor<T>& table);

// ---- convolutional -------------------------------------------------------

enum class PadMode { Zero, Reflect };

struct Conv2dSpec {
    std::size_t stride = 1;
    std::size_t padding = 0;
    PadMode pad_mode = PadMode::Reflect;
};

/// x[N, C, H, W], weight[O, C, k, k], bias[O] (may be undefined).
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, Conv2dSpec spec);
template <typename T> Tensor<T> upsample_nearest2x(const Tensor<T>& x);
/// Per-(sample, channel) normalization over H*W, no affine.
template <typename T> Tensor<T> instance_norm(const Tensor<T>& x, T eps = T(1e-5));
/// x[N, C, H, W] * scale[N, C] + shift[N, C].
template <typename T> Tensor<T> channel_affine(const Tensor<T>& x, const Tensor<T>& scale, const Tensor<T>& shift);
/// Adaptive instance normalization: instance_norm(x) * scale + shift.
template <typename T>
Tensor<T> adain(const Tensor<T>& x, const Tensor<T>& scale, const Tensor<T>& shift, T eps = T(1e-5));
/// [N, C, H, W] -> [N, C] spatial mean.
template <typename T> Tensor<T> global_mean_pool(const Tensor<T>& x);
/// For each sample n, the spatial mean of channel labels[n]: [N, C, H, W] -> [N].
template <typename T> Tensor<T> select_channel_mean(const Tensor<T>& x, std::span<const std::size_t> labels);

// ---- sequence ------------------------------------------------------------

/// Normalization over the last dim with learned gamma/beta.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps = T(1e-5));
/// Multi-head causal self-attention. qkv[B, S, 3E] packs queries, keys and
/// values; position i attends only to positions <= i. Returns [B, S, E].
template <typename T> Tensor<T> causal_attention(const Tensor<T>& qkv, std::size_t heads);
/// Row-wise softmax cross-entropy: logits[M, K], targets[M] -> per-row nll [M].
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const std::uint32_t> targets);

// ---- vector quantization -------------------------------------------------

/// Forward value is exactly `quantized`; the backward pass copies the
/// incoming gradient to `continuous` unchanged and gives `quantized` none.
template <typename T> Tensor<T> straight_through(const Tensor<T>& continuous, const Tensor<T>& quantized);

// ---- plain helpers (no graph) -------------------------------------------

template <typename T> void softmax_inplace(std::span<T> row);

}  // namespace disco::nn
