#include "disco/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include <Eigen/Core>
#include <fmt/format.h>

#include "disco/errors.hpp"

namespace disco::nn {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (a.shape() != b.shape())
        throw ContractError(fmt::format("{}: shape mismatch {} vs {}", op, shape_str(a.shape()), shape_str(b.shape())));
}

template <typename T>
void require_rank(const Tensor<T>& x, std::size_t rank, const char* op) {
    if (x.rank() != rank)
        throw ContractError(fmt::format("{}: expected rank {}, got {}", op, rank, shape_str(x.shape())));
}

// Elementwise op whose derivative is expressed through (x, y).
template <typename T, typename F, typename D>
Tensor<T> unary(const Tensor<T>& x, F f, D dfdx) {
    const auto& xv = x.values();
    std::vector<T> out(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
    Node<T>* nx = x.node().get();
    return make_op_result<T>(x.shape(), std::move(out), {x}, [nx, dfdx](Node<T>* o) {
        return [nx, o, dfdx]() {
            if (!nx->requires_grad) return;
            auto& g = nx->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i] * dfdx(nx->value[i], o->value[i]);
        };
    });
}

}  // namespace

// ---- elementwise ---------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a, b, "add");
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
    Node<T>* na = a.node().get();
    Node<T>* nb = b.node().get();
    return make_op_result<T>(a.shape(), std::move(out), {a, b}, [na, nb](Node<T>* o) {
        return [na, nb, o]() {
            accumulate_grad<T>(*na, o->grad);
            accumulate_grad<T>(*nb, o->grad);
        };
    });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a, b, "sub");
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
    Node<T>* na = a.node().get();
    Node<T>* nb = b.node().get();
    return make_op_result<T>(a.shape(), std::move(out), {a, b}, [na, nb](Node<T>* o) {
        return [na, nb, o]() {
            accumulate_grad<T>(*na, o->grad);
            if (nb->requires_grad) {
                auto& g = nb->ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] -= o->grad[i];
            }
        };
    });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a, b, "mul");
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
    Node<T>* na = a.node().get();
    Node<T>* nb = b.node().get();
    return make_op_result<T>(a.shape(), std::move(out), {a, b}, [na, nb](Node<T>* o) {
        return [na, nb, o]() {
            if (na->requires_grad) {
                auto& g = na->ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i] * nb->value[i];
            }
            if (nb->requires_grad) {
                auto& g = nb->ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i] * na->value[i];
            }
        };
    });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
    return unary(a, [factor](T v) { return v * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T c) {
    return unary(a, [c](T v) { return v + c; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> add_broadcast(const Tensor<T>& x, const Tensor<T>& y) {
    const auto& xs = x.shape();
    const auto& ys = y.shape();
    bool ok = ys.size() <= xs.size() && std::equal(ys.begin(), ys.end(), xs.end() - static_cast<long>(ys.size()));
    if (!ok)
        throw ContractError(fmt::format("add_broadcast: {} is not a trailing shape of {}", shape_str(ys), shape_str(xs)));
    const std::size_t inner = y.numel();
    std::vector<T> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i % inner];
    Node<T>* nx = x.node().get();
    Node<T>* ny = y.node().get();
    return make_op_result<T>(xs, std::move(out), {x, y}, [nx, ny, inner](Node<T>* o) {
        return [nx, ny, o, inner]() {
            accumulate_grad<T>(*nx, o->grad);
            if (ny->requires_grad) {
                auto& g = ny->ensure_grad();
                for (std::size_t i = 0; i < o->grad.size(); ++i) g[i % inner] += o->grad[i];
            }
        };
    });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    return unary(x, [](T v) { return v > T(0) ? v : T(0); }, [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope) {
    return unary(
        x, [slope](T v) { return v > T(0) ? v : slope * v; }, [slope](T v, T) { return v > T(0) ? T(1) : slope; });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
    return unary(x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
    constexpr T c = T(0.7978845608028654);  // sqrt(2/pi)
    constexpr T a = T(0.044715);
    return unary(
        x,
        [](T v) { return T(0.5) * v * (T(1) + std::tanh(c * (v + a * v * v * v))); },
        [](T v, T) {
            const T u = c * (v + a * v * v * v);
            const T t = std::tanh(u);
            const T du = c * (T(1) + T(3) * a * v * v);
            return T(0.5) * (T(1) + t) + T(0.5) * v * (T(1) - t * t) * du;
        });
}

template <typename T>
Tensor<T> abs(const Tensor<T>& x) {
    return unary(
        x, [](T v) { return std::abs(v); },
        [](T v, T) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
}

template <typename T>
Tensor<T> square(const Tensor<T>& x) {
    return unary(x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

// ---- reductions / shape --------------------------------------------------

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
    T s = T(0);
    for (T v : x.values()) s += v;
    Node<T>* nx = x.node().get();
    return make_op_result<T>(Shape{1}, std::vector<T>{s}, {x}, [nx](Node<T>* o) {
        return [nx, o]() {
            if (!nx->requires_grad) return;
            auto& g = nx->ensure_grad();
            for (auto& gi : g) gi += o->grad[0];
        };
    });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
    return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
    if (numel(shape) != x.numel())
        throw ContractError(fmt::format("reshape: {} -> {} changes element count", shape_str(x.shape()), shape_str(shape)));
    Node<T>* nx = x.node().get();
    return make_op_result<T>(std::move(shape), x.values(), {x}, [nx](Node<T>* o) {
        return [nx, o]() { accumulate_grad<T>(*nx, o->grad); };
    });
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t start, std::size_t len) {
    require_rank(x, 2, "slice_cols");
    const std::size_t m = x.dim(0), n = x.dim(1);
    require(len > 0 && start + len <= n, "slice_cols: column range out of bounds");
    std::vector<T> out(m * len);
    for (std::size_t r = 0; r < m; ++r)
        std::copy_n(x.values().begin() + static_cast<long>(r * n + start), len, out.begin() + static_cast<long>(r * len));
    Node<T>* nx = x.node().get();
    return make_op_result<T>(Shape{m, len}, std::move(out), {x}, [nx, m, n, start, len](Node<T>* o) {
        return [nx, o, m, n, start, len]() {
            if (!nx->requires_grad) return;
            auto& g = nx->ensure_grad();
            for (std::size_t r = 0; r < m; ++r)
                for (std::size_t c = 0; c < len; ++c) g[r * n + start + c] += o->grad[r * len + c];
        };
    });
}

template <typename T>
Tensor<T> to_channels_last(const Tensor<T>& x) {
    require_rank(x, 4, "to_channels_last");
    const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    std::vector<T> out(x.numel());
    const auto& xv = x.values();
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t p = 0; p < hw; ++p) out[(b * hw + p) * c + ch] = xv[(b * c + ch) * hw + p];
    Node<T>* nx = x.node().get();
    return make_op_result<T>(Shape{n * hw, c}, std::move(out), {x}, [nx, n, c, hw](Node<T>* o) {
        return [nx, o, n, c, hw]() {
            if (!nx->requires_grad) return;
            auto& g = nx->ensure_grad();
            for (std::size_t b = 0; b < n; ++b)
                for (std::size_t ch = 0; ch < c; ++ch)
                    for (std::size_t p = 0; p < hw; ++p) g[(b * c + ch) * hw + p] += o->grad[(b * hw + p) * c + ch];
        };
    });
}

template <typename T>
Tensor<T> to_channels_first(const Tensor<T>& rows, std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    require_rank(rows, 2, "to_channels_first");
    const std::size_t hw = h * w;
    require(rows.dim(0) == n * hw && rows.dim(1) == c, "to_channels_first: geometry does not match rows");
    std::vector<T> out(rows.numel());
    const auto& rv = rows.values();
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t p = 0; p < hw; ++p) out[(b * c + ch) * hw + p] = rv[(b * hw + p) * c + ch];
    Node<T>* nr = rows.node().get();
    return make_op_result<T>(Shape{n, c, h, w}, std::move(out), {rows}, [nr, n, c, hw](Node<T>* o) {
        return [nr, o, n, c, hw]() {
            if (!nr->requires_grad) return;
            auto& g = nr->ensure_grad();
            for (std::size_t b = 0; b < n; ++b)
                for (std::size_t ch = 0; ch < c; ++ch)
                    for (std::size_t p = 0; p < hw; ++p) g[(b * hw + p) * c + ch] += o->grad[(b * c + ch) * hw + p];
        };
    });
}

template <typename T>
Tensor<T> prepend_slot(const Tensor<T>& slot, const Tensor<T>& seq) {
    require_rank(slot, 2, "prepend_slot");
    require_rank(seq, 3, "prepend_slot");
    const std::size_t b = seq.dim(0), l = seq.dim(1), e = seq.dim(2);
    require(slot.dim(0) == b && slot.dim(1) == e, "prepend_slot: slot must be [B, E] matching the sequence");
    std::vector<T> out(b * (l + 1) * e);
    for (std::size_t i = 0; i < b; ++i) {
        std::copy_n(slot.values().begin() + static_cast<long>(i * e), e, out.begin() + static_cast<long>(i * (l + 1) * e));
        std::copy_n(seq.values().begin() + static_cast<long>(i * l * e), l * e,
                    out.begin() + static_cast<long>((i * (l + 1) + 1) * e));
    }
    Node<T>* ns = slot.node().get();
    Node<T>* nq = seq.node().get();
    return make_op_result<T>(Shape{b, l + 1, e}, std::move(out), {slot, seq}, [ns, nq, b, l, e](Node<T>* o) {
        return [ns, nq, o, b, l, e]() {
            for (std::size_t i = 0; i < b; ++i) {
                const T* src = o->grad.data() + i * (l + 1) * e;
                if (ns->requires_grad) {
                    auto& g = ns->ensure_grad();
                    for (std::size_t k = 0; k < e; ++k) g[i * e + k] += src[k];
                }
                if (nq->requires_grad) {
                    auto& g = nq->ensure_grad();
                    for (std::size_t k = 0; k < l * e; ++k) g[i * l * e + k] += src[e + k];
                }
            }
        };
    });
}

// ---- linear algebra -----------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    require_rank(a, 2, "matmul");
    require_rank(b, 2, "matmul");
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k)
        throw ContractError(fmt::format("matmul: inner dims differ {} x {}", shape_str(a.shape()), shape_str(b.shape())));
    std::vector<T> out(m * n);
    MapMat<T>(out.data(), m, n).noalias() = CMapMat<T>(a.values().data(), m, k) * CMapMat<T>(b.values().data(), k, n);
    Node<T>* na = a.node().get();
    Node<T>* nb = b.node().get();
    return make_op_result<T>(Shape{m, n}, std::move(out), {a, b}, [na, nb, m, k, n](Node<T>* o) {
        return [na, nb, o, m, k, n]() {
            CMapMat<T> dy(o->grad.data(), m, n);
            if (na->requires_grad)
                MapMat<T>(na->ensure_grad().data(), m, k).noalias() += dy * CMapMat<T>(nb->value.data(), k, n).transpose();
            if (nb->requires_grad)
                MapMat<T>(nb->ensure_grad().data(), k, n).noalias() += CMapMat<T>(na->value.data(), m, k).transpose() * dy;
        };
    });
}

template <typename T>
Tensor<T> dense(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    require_rank(w, 2, "dense");
    const std::size_t in = w.dim(0), outd = w.dim(1);
    if (x.shape().back() != in)
        throw ContractError(fmt::format("dense: input {} does not end in {}", shape_str(x.shape()), in));
    if (b.defined()) require(b.numel() == outd, "dense: bias length must equal output width");
    const std::size_t m = x.numel() / in;
    Shape out_shape = x.shape();
    out_shape.back() = outd;
    std::vector<T> out(m * outd);
    MapMat<T> y(out.data(), m, outd);
    y.noalias() = CMapMat<T>(x.values().data(), m, in) * CMapMat<T>(w.values().data(), in, outd);
    if (b.defined()) y.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(b.values().data(), outd);
    Node<T>* nx = x.node().get();
    Node<T>* nw = w.node().get();
    Node<T>* nb = b.defined() ? b.node().get() : nullptr;
    return make_op_result<T>(std::move(out_shape), std::move(out), {x, w, b}, [nx, nw, nb, m, in, outd](Node<T>* o) {
        return [nx, nw, nb, o, m, in, outd]() {
            CMapMat<T> dy(o->grad.data(), m, outd);
            if (nx->requires_grad)
                MapMat<T>(nx->ensure_grad().data(), m, in).noalias() +=
                    dy * CMapMat<T>(nw->value.data(), in, outd).transpose();
            if (nw->requires_grad)
                MapMat<T>(nw->ensure_grad().data(), in, outd).noalias() +=
                    CMapMat<T>(nx->value.data(), m, in).transpose() * dy;
            if (nb && nb->requires_grad)
                Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(nb->ensure_grad().data(), outd) += dy.colwise().sum();
        };
    });
}

template <typename T>
Tensor<T> embedding(std::span<const std::uint32_t> ids, const Tensor<T>& table) {
    require_rank(table, 2, "embedding");
    const std::size_t rows = table.dim(0), e = table.dim(1);
    require(!ids.empty(), "embedding: empty id list");
    std::vector<T> out(ids.size() * e);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] >= rows) throw ContractError(fmt::format("embedding: id {} out of range [0, {})", ids[i], rows));
        std::copy_n(table.values().begin() + static_cast<long>(ids[i] * e), e, out.begin() + static_cast<long>(i * e));
    }
    Node<T>* nt = table.node().get();
    auto idcopy = std::make_shared<std::vector<std::uint32_t>>(ids.begin(), ids.end());
    return make_op_result<T>(Shape{ids.size(), e}, std::move(out), {table}, [nt, idcopy, e](Node<T>* o) {
        return [nt, o, idcopy, e]() {
            if (!nt->requires_grad) return;
            auto& g = nt->ensure_grad();
            for (std::size_t i = 0; i < idcopy->size(); ++i)
                for (std::size_t k = 0; k < e; ++k) g[(*idcopy)[i] * e + k] += o->grad[i * e + k];
        };
    });
}

// ---- convolutional -------------------------------------------------------

namespace {

std::size_t reflect_index(long i, long n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
    return static_cast<std::size_t>(i);
}

// Source spatial offset for each (kernel tap, output pixel), or -1 for a zero pad.
std::vector<long> conv_source_table(std::size_t h, std::size_t w, std::size_t k, const Conv2dSpec& spec,
                                    std::size_t ho, std::size_t wo) {
    std::vector<long> table(k * k * ho * wo);
    const long pad = static_cast<long>(spec.padding);
    for (std::size_t ky = 0; ky < k; ++ky)
        for (std::size_t kx = 0; kx < k; ++kx)
            for (std::size_t oy = 0; oy < ho; ++oy)
                for (std::size_t ox = 0; ox < wo; ++ox) {
                    long iy = static_cast<long>(oy * spec.stride + ky) - pad;
                    long ix = static_cast<long>(ox * spec.stride + kx) - pad;
                    long src;
                    if (spec.pad_mode == PadMode::Reflect) {
                        src = static_cast<long>(reflect_index(iy, static_cast<long>(h)) * w +
                                                reflect_index(ix, static_cast<long>(w)));
                    } else if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(w)) {
                        src = -1;
                    } else {
                        src = iy * static_cast<long>(w) + ix;
                    }
                    table[((ky * k + kx) * ho + oy) * wo + ox] = src;
                }
    return table;
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, Conv2dSpec spec) {
    require_rank(x, 4, "conv2d");
    require_rank(weight, 4, "conv2d");
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t o = weight.dim(0), k = weight.dim(2);
    if (weight.dim(1) != c || weight.dim(3) != k)
        throw ContractError(fmt::format("conv2d: weight {} incompatible with input {}", shape_str(weight.shape()),
                                        shape_str(x.shape())));
    require(spec.stride >= 1, "conv2d: stride must be >= 1");
    if (spec.pad_mode == PadMode::Reflect)
        require(spec.padding < h && spec.padding < w, "conv2d: reflect padding must be smaller than the input");
    require(h + 2 * spec.padding >= k && w + 2 * spec.padding >= k, "conv2d: kernel larger than padded input");
    if (bias.defined()) require(bias.numel() == o, "conv2d: bias length must equal output channels");
    const std::size_t ho = (h + 2 * spec.padding - k) / spec.stride + 1;
    const std::size_t wo = (w + 2 * spec.padding - k) / spec.stride + 1;
    const std::size_t p = ho * wo, kk = k * k, ckk = c * kk, np = n * p, hw = h * w;

    const auto table = std::make_shared<std::vector<long>>(conv_source_table(h, w, k, spec, ho, wo));
    auto cols = std::make_shared<std::vector<T>>(ckk * np);
    const auto& xv = x.values();
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t t = 0; t < kk; ++t) {
            T* row = cols->data() + (ch * kk + t) * np;
            const long* src = table->data() + t * p;
            for (std::size_t b = 0; b < n; ++b) {
                const T* img = xv.data() + (b * c + ch) * hw;
                T* dst = row + b * p;
                for (std::size_t q = 0; q < p; ++q) dst[q] = src[q] < 0 ? T(0) : img[src[q]];
            }
        }

    RowMat<T> ytmp = CMapMat<T>(weight.values().data(), o, ckk) * CMapMat<T>(cols->data(), ckk, np);
    std::vector<T> out(n * o * p);
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t oc = 0; oc < o; ++oc) {
            const T bv = bias.defined() ? bias[oc] : T(0);
            const T* src = ytmp.data() + oc * np + b * p;
            T* dst = out.data() + (b * o + oc) * p;
            for (std::size_t q = 0; q < p; ++q) dst[q] = src[q] + bv;
        }

    Node<T>* nx = x.node().get();
    Node<T>* nw = weight.node().get();
    Node<T>* nb = bias.defined() ? bias.node().get() : nullptr;
    return make_op_result<T>(
        Shape{n, o, ho, wo}, std::move(out), {x, weight, bias},
        [=](Node<T>* on) {
            return [=]() {
                RowMat<T> dy(o, np);
                for (std::size_t b = 0; b < n; ++b)
                    for (std::size_t oc = 0; oc < o; ++oc)
                        std::copy_n(on->grad.data() + (b * o + oc) * p, p, dy.data() + oc * np + b * p);
                if (nw->requires_grad)
                    MapMat<T>(nw->ensure_grad().data(), o, ckk).noalias() +=
                        dy * CMapMat<T>(cols->data(), ckk, np).transpose();
                if (nb && nb->requires_grad) {
                    auto& g = nb->ensure_grad();
                    for (std::size_t oc = 0; oc < o; ++oc) g[oc] += dy.row(oc).sum();
                }
                if (nx->requires_grad) {
                    RowMat<T> dcols = CMapMat<T>(nw->value.data(), o, ckk).transpose() * dy;
                    auto& g = nx->ensure_grad();
                    for (std::size_t ch = 0; ch < c; ++ch)
                        for (std::size_t t = 0; t < kk; ++t) {
                            const T* row = dcols.data() + (ch * kk + t) * np;
                            const long* src = table->data() + t * p;
                            for (std::size_t b = 0; b < n; ++b) {
                                T* img = g.data() + (b * c + ch) * hw;
                                const T* d = row + b * p;
                                for (std::size_t q = 0; q < p; ++q)
                                    if (src[q] >= 0) img[src[q]] += d[q];
                            }
                        }
                }
            };
        });
}

template <typename T>
Tensor<T> upsample_nearest2x(const Tensor<T>& x) {
    require_rank(x, 4, "upsample_nearest2x");
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t h2 = 2 * h, w2 = 2 * w;
    std::vector<T> out(n * c * h2 * w2);
    const auto& xv = x.values();
    for (std::size_t plane = 0; plane < n * c; ++plane)
        for (std::size_t y = 0; y < h2; ++y)
            for (std::size_t xx = 0; xx < w2; ++xx) out[(plane * h2 + y) * w2 + xx] = xv[(plane * h + y / 2) * w + xx / 2];
    Node<T>* nx = x.node().get();
    return make_op_result<T>(Shape{n, c, h2, w2}, std::move(out), {x}, [nx, n, c, h, w](Node<T>* o) {
        return [nx, o, n, c, h, w]() {
            if (!nx->requires_grad) return;
            auto& g = nx->ensure_grad();
            const std::size_t h2 = 2 * h, w2 = 2 * w;
            for (std::size_t plane = 0; plane < n * c; ++plane)
                for (std::size_t y = 0; y < h2; ++y)
                    for (std::size_t xx = 0; xx < w2; ++xx)
                        g[(plane * h + y / 2) * w + xx / 2] += o->grad[(plane * h2 + y) * w2 + xx];
        };
    });
}

template <typename T>
Tensor<T> instance_norm(const Tensor<T>& x, T eps) {
    require_rank(x, 4, "instance_norm");
    const std::size_t planes = x.dim(0) * x.dim(1), hw = x.dim(2) * x.dim(3);
    std::vector<T> out(x.numel());
    auto inv_std = std::make_shared<std::vector<T>>(planes);
    const auto& xv = x.values();
    for (std::size_t pl = 0; pl < planes; ++pl) {
        const T* src = xv.data() + pl * hw;
        T mu = T(0);
        for (std::size_t i = 0; i < hw; ++i) mu += src[i];
        mu /= static_cast<T>(hw);
        T var = T(0);
        for (std::size_t i = 0; i < hw; ++i) var += (src[i] - mu) * (src[i] - mu);
        var /= static_cast<T>(hw);
        const T is = T(1) / std::sqrt(var + eps);
        (*inv_std)[pl] = is;
        for (std::size_t i = 0; i < hw; ++i) out[pl * hw + i] = (src[i] - mu) * is;
    }
    Node<T>* nx = x.node().get();
    return make_op_result<T>(x.shape(), std::move(out), {x}, [nx, inv_std, planes, hw](Node<T>* o) {
        return [nx, o, inv_std, planes, hw]() {
            if (!nx->requires_grad) return;
            auto& g = nx->ensure_grad();
            const T inv_n = T(1) / static_cast<T>(hw);
            for (std::size_t pl = 0; pl < planes; ++pl) {
                const T* dy = o->grad.data() + pl * hw;
                const T* xh = o->value.data() + pl * hw;
                T sdy = T(0), sdyx = T(0);
                for (std::size_t i = 0; i < hw; ++i) {
                    sdy += dy[i];
                    sdyx += dy[i] * xh[i];
                }
                const T is = (*inv_std)[pl];
                for (std::size_t i = 0; i < hw; ++i)
                    g[pl * hw + i] += is * (dy[i] - inv_n * sdy - xh[i] * inv_n * sdyx);
            }
        };
    });
}

template <typename T>
Tensor<T> channel_affine(const Tensor<T>& x, const Tensor<T>& scale_t, const Tensor<T>& shift) {
    require_rank(x, 4, "channel_affine");
    const std::size_t planes = x.dim(0) * x.dim(1), hw = x.dim(2) * x.dim(3);
    require(scale_t.numel() == planes && shift.numel() == planes,
            "channel_affine: scale/shift must be [N, C] for input " + shape_str(x.shape()));
    std::vector<T> out(x.numel());
    const auto& xv = x.values();
    for (std::size_t pl = 0; pl < planes; ++pl)
        for (std::size_t i = 0; i < hw; ++i) out[pl * hw + i] = xv[pl * hw + i] * scale_t[pl] + shift[pl];
    Node<T>* nx = x.node().get();
    Node<T>* ns = scale_t.node().get();
    Node<T>* nt = shift.node().get();
    return make_op_result<T>(x.shape(), std::move(out), {x, scale_t, shift}, [nx, ns, nt, planes, hw](Node<T>* o) {
        return [nx, ns, nt, o, planes, hw]() {
            for (std::size_t pl = 0; pl < planes; ++pl) {
                const T* dy = o->grad.data() + pl * hw;
                if (nx->requires_grad) {
                    auto& g = nx->ensure_grad();
                    for (std::size_t i = 0; i < hw; ++i) g[pl * hw + i] += dy[i] * ns->value[pl];
                }
                if (ns->requires_grad) {
                    T acc = T(0);
                    for (std::size_t i = 0; i < hw; ++i) acc += dy[i] * nx->value[pl * hw + i];
                    ns->ensure_grad()[pl] += acc;
                }
                if (nt->requires_grad) {
                    T acc = T(0);
                    for (std::size_t i = 0; i < hw; ++i) acc += dy[i];
                    nt->ensure_grad()[pl] += acc;
                }
            }
        };
    });
}

template <typename T>
Tensor<T> adain(const Tensor<T>& x, const Tensor<T>& scale_t, const Tensor<T>& shift, T eps) {
    return channel_affine(instance_norm(x, eps), scale_t, shift);
}

template <typename T>
Tensor<T> global_mean_pool(const Tensor<T>& x) {
    require_rank(x, 4, "global_mean_pool");
    const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    std::vector<T> out(n * c);
    for (std::size_t pl = 0; pl < n * c; ++pl) {
        T s = T(0);
        for (std::size_t i = 0; i < hw; ++i) s += x[pl * hw + i];
        out[pl] = s / static_cast<T>(hw);
    }
    Node<T>* nx = x.node().get();
    return make_op_result<T>(Shape{n, c}, std::move(out), {x}, [nx, n, c, hw](Node<T>* o) {
        return [nx, o, n, c, hw]() {
            if (!nx->requires_grad) return;
            auto& g = nx->ensure_grad();
            const T inv = T(1) / static_cast<T>(hw);
            for (std::size_t pl = 0; pl < n * c; ++pl)
                for (std::size_t i = 0; i < hw; ++i) g[pl * hw + i] += o->grad[pl] * inv;
        };
    });
}

template <typename T>
Tensor<T> select_channel_mean(const Tensor<T>& x, std::span<const std::size_t> labels) {
    require_rank(x, 4, "select_channel_mean");
    const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    require(labels.size() == n, "select_channel_mean: one label per sample required");
    std::vector<T> out(n);
    for (std::size_t b = 0; b < n; ++b) {
        if (labels[b] >= c)
            throw ContractError(fmt::format("select_channel_mean: label {} out of range [0, {})", labels[b], c));
        T s = T(0);
        for (std::size_t i = 0; i < hw; ++i) s += x[(b * c + labels[b]) * hw + i];
        out[b] = s / static_cast<T>(hw);
    }
    Node<T>* nx = x.node().get();
    auto lab = std::make_shared<std::vector<std::size_t>>(labels.begin(), labels.end());
    return make_op_result<T>(Shape{n}, std::move(out), {x}, [nx, lab, n, c, hw](Node<T>* o) {
        return [nx, o, lab, n, c, hw]() {
            if (!nx->requires_grad) return;
            auto& g = nx->ensure_grad();
            const T inv = T(1) / static_cast<T>(hw);
            for (std::size_t b = 0; b < n; ++b)
                for (std::size_t i = 0; i < hw; ++i) g[(b * c + (*lab)[b]) * hw + i] += o->grad[b] * inv;
        };
    });
}

// ---- sequence ------------------------------------------------------------

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
    const std::size_t d = x.shape().back();
    require(gamma.numel() == d && beta.numel() == d, "layer_norm: gamma/beta must match the last dim");
    const std::size_t m = x.numel() / d;
    std::vector<T> out(x.numel());
    auto xhat = std::make_shared<std::vector<T>>(x.numel());
    auto inv_std = std::make_shared<std::vector<T>>(m);
    for (std::size_t r = 0; r < m; ++r) {
        const T* src = x.values().data() + r * d;
        T mu = T(0);
        for (std::size_t i = 0; i < d; ++i) mu += src[i];
        mu /= static_cast<T>(d);
        T var = T(0);
        for (std::size_t i = 0; i < d; ++i) var += (src[i] - mu) * (src[i] - mu);
        var /= static_cast<T>(d);
        const T is = T(1) / std::sqrt(var + eps);
        (*inv_std)[r] = is;
        for (std::size_t i = 0; i < d; ++i) {
            const T xh = (src[i] - mu) * is;
            (*xhat)[r * d + i] = xh;
            out[r * d + i] = xh * gamma[i] + beta[i];
        }
    }
    Node<T>* nx = x.node().get();
    Node<T>* ng = gamma.node().get();
    Node<T>* nb = beta.node().get();
    return make_op_result<T>(x.shape(), std::move(out), {x, gamma, beta}, [=](Node<T>* o) {
        return [=]() {
            std::vector<T> dxh(d);
            for (std::size_t r = 0; r < m; ++r) {
                const T* dy = o->grad.data() + r * d;
                const T* xh = xhat->data() + r * d;
                if (ng->requires_grad) {
                    auto& g = ng->ensure_grad();
                    for (std::size_t i = 0; i < d; ++i) g[i] += dy[i] * xh[i];
                }
                if (nb->requires_grad) {
                    auto& g = nb->ensure_grad();
                    for (std::size_t i = 0; i < d; ++i) g[i] += dy[i];
                }
                if (nx->requires_grad) {
                    T s1 = T(0), s2 = T(0);
                    for (std::size_t i = 0; i < d; ++i) {
                        dxh[i] = dy[i] * ng->value[i];
                        s1 += dxh[i];
                        s2 += dxh[i] * xh[i];
                    }
                    auto& g = nx->ensure_grad();
                    const T inv_d = T(1) / static_cast<T>(d);
                    const T is = (*inv_std)[r];
                    for (std::size_t i = 0; i < d; ++i)
                        g[r * d + i] += is * (dxh[i] - inv_d * s1 - xh[i] * inv_d * s2);
                }
            }
        };
    });
}

template <typename T>
void softmax_inplace(std::span<T> row) {
    T mx = row[0];
    for (T v : row) mx = std::max(mx, v);
    T s = T(0);
    for (T& v : row) {
        v = std::exp(v - mx);
        s += v;
    }
    for (T& v : row) v /= s;
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const std::uint32_t> targets) {
    require_rank(logits, 2, "cross_entropy");
    const std::size_t m = logits.dim(0), k = logits.dim(1);
    require(targets.size() == m, "cross_entropy: one target per row required");
    auto probs = std::make_shared<std::vector<T>>(logits.values());
    auto tgt = std::make_shared<std::vector<std::uint32_t>>(targets.begin(), targets.end());
    std::vector<T> out(m);
    for (std::size_t r = 0; r < m; ++r) {
        if (targets[r] >= k) throw ContractError(fmt::format("cross_entropy: target {} out of range [0, {})", targets[r], k));
        const T* lr = logits.values().data() + r * k;
        T mx = lr[0];
        for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, lr[j]);
        T s = T(0);
        for (std::size_t j = 0; j < k; ++j) s += std::exp(lr[j] - mx);
        out[r] = (std::log(s) + mx) - lr[targets[r]];
        softmax_inplace(std::span<T>(probs->data() + r * k, k));
    }
    Node<T>* nl = logits.node().get();
    return make_op_result<T>(Shape{m}, std::move(out), {logits}, [nl, probs, tgt, m, k](Node<T>* o) {
        return [nl, o, probs, tgt, m, k]() {
            if (!nl->requires_grad) return;
            auto& g = nl->ensure_grad();
            for (std::size_t r = 0; r < m; ++r) {
                const T gr = o->grad[r];
                for (std::size_t j = 0; j < k; ++j) g[r * k + j] += gr * (*probs)[r * k + j];
                g[r * k + (*tgt)[r]] -= gr;
            }
        };
    });
}

// ---- vector quantization -------------------------------------------------

template <typename T>
Tensor<T> straight_through(const Tensor<T>& continuous, const Tensor<T>& quantized) {
    require_same_shape(continuous, quantized, "straight_through");
    Node<T>* nc = continuous.node().get();
    return make_op_result<T>(quantized.shape(), quantized.values(), {continuous}, [nc](Node<T>* o) {
        return [nc, o]() { accumulate_grad<T>(*nc, o->grad); };
    });
}

#define DISCO_INSTANTIATE_OPS(T)                                                                              \
    template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                               \
    template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                               \
    template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                               \
    template Tensor<T> scale(const Tensor<T>&, T);                                                            \
    template Tensor<T> add_scalar(const Tensor<T>&, T);                                                       \
    template Tensor<T> add_broadcast(const Tensor<T>&, const Tensor<T>&);                                     \
    template Tensor<T> relu(const Tensor<T>&);                                                                \
    template Tensor<T> leaky_relu(const Tensor<T>&, T);                                                       \
    template Tensor<T> tanh(const Tensor<T>&);                                                                \
    template Tensor<T> gelu(const Tensor<T>&);                                                                \
    template Tensor<T> abs(const Tensor<T>&);                                                                 \
    template Tensor<T> square(const Tensor<T>&);                                                              \
    template Tensor<T> sum(const Tensor<T>&);                                                                 \
    template Tensor<T> mean(const Tensor<T>&);                                                                \
    template Tensor<T> reshape(const Tensor<T>&, Shape);                                                      \
    template Tensor<T> slice_cols(const Tensor<T>&, std::size_t, std::size_t);                                \
    template Tensor<T> to_channels_last(const Tensor<T>&);                                                    \
    template Tensor<T> to_channels_first(const Tensor<T>&, std::size_t, std::size_t, std::size_t, std::size_t); \
    template Tensor<T> prepend_slot(const Tensor<T>&, const Tensor<T>&);                                      \
    template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                            \
    template Tensor<T> dense(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                           \
    template Tensor<T> embedding(std::span<const std::uint32_t>, const Tensor<T>&);                           \
    template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Conv2dSpec);              \
    template Tensor<T> upsample_nearest2x(const Tensor<T>&);                                                  \
    template Tensor<T> instance_norm(const Tensor<T>&, T);                                                    \
    template Tensor<T> channel_affine(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                  \
    template Tensor<T> adain(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);                        \
    template Tensor<T> global_mean_pool(const Tensor<T>&);                                                    \
    template Tensor<T> select_channel_mean(const Tensor<T>&, std::span<const std::size_t>);                   \
    template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);                   \
    template Tensor<T> cross_entropy(const Tensor<T>&, std::span<const std::uint32_t>);                       \
    template Tensor<T> straight_through(const Tensor<T>&, const Tensor<T>&);                                  \
    template void softmax_inplace(std::span<T>);

DISCO_INSTANTIATE_OPS(float)
DISCO_INSTANTIATE_OPS(double)

}  // namespace disco::nn
