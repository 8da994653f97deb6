#include <cmath>
#include <memory>

#include <Eigen/Core>
#include <fmt/format.h>

#include "disco/errors.hpp"
#include "disco/ops.hpp"

namespace disco::nn {

namespace {
template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
}

// Scores above the diagonal are never exponentiated: the probability matrix
// holds exact zeros there, so row i of the output is bit-stable under any
// change to positions > i.
template <typename T>
Tensor<T> causal_attention(const Tensor<T>& qkv, std::size_t heads) {
    if (qkv.rank() != 3 || qkv.dim(2) % 3 != 0)
        throw ContractError(fmt::format("causal_attention: expected [B, S, 3E], got {}", shape_str(qkv.shape())));
    const std::size_t b = qkv.dim(0), s = qkv.dim(1), e = qkv.dim(2) / 3;
    require(heads >= 1 && e % heads == 0, "causal_attention: embed dim must be divisible by head count");
    const std::size_t dh = e / heads;
    const T scale = T(1) / std::sqrt(static_cast<T>(dh));

    auto probs = std::make_shared<std::vector<T>>(b * heads * s * s, T(0));
    std::vector<T> out(b * s * e);
    const T* src = qkv.values().data();

    RowMat<T> q(s, dh), k(s, dh), v(s, dh), sc(s, s), o(s, dh);
    for (std::size_t bi = 0; bi < b; ++bi)
        for (std::size_t h = 0; h < heads; ++h) {
            for (std::size_t i = 0; i < s; ++i) {
                const T* row = src + (bi * s + i) * 3 * e;
                for (std::size_t d = 0; d < dh; ++d) {
                    q(i, d) = row[h * dh + d];
                    k(i, d) = row[e + h * dh + d];
                    v(i, d) = row[2 * e + h * dh + d];
                }
            }
            sc.noalias() = q * k.transpose();
            T* p = probs->data() + (bi * heads + h) * s * s;
            for (std::size_t i = 0; i < s; ++i) {
                T mx = sc(i, 0) * scale;
                for (std::size_t j = 1; j <= i; ++j) mx = std::max(mx, sc(i, j) * scale);
                T total = T(0);
                for (std::size_t j = 0; j <= i; ++j) {
                    p[i * s + j] = std::exp(sc(i, j) * scale - mx);
                    total += p[i * s + j];
                }
                for (std::size_t j = 0; j <= i; ++j) p[i * s + j] /= total;
            }
            o.noalias() = Eigen::Map<const RowMat<T>>(p, s, s) * v;
            for (std::size_t i = 0; i < s; ++i)
                for (std::size_t d = 0; d < dh; ++d) out[(bi * s + i) * e + h * dh + d] = o(i, d);
        }

    Node<T>* nq = qkv.node().get();
    return make_op_result<T>(Shape{b, s, e}, std::move(out), {qkv}, [=](Node<T>* on) {
        return [=]() {
            if (!nq->requires_grad) return;
            auto& g = nq->ensure_grad();
            const T* x = nq->value.data();
            RowMat<T> q(s, dh), k(s, dh), v(s, dh), dout(s, dh), dp(s, s), ds(s, s);
            for (std::size_t bi = 0; bi < b; ++bi)
                for (std::size_t h = 0; h < heads; ++h) {
                    for (std::size_t i = 0; i < s; ++i) {
                        const T* row = x + (bi * s + i) * 3 * e;
                        for (std::size_t d = 0; d < dh; ++d) {
                            q(i, d) = row[h * dh + d];
                            k(i, d) = row[e + h * dh + d];
                            v(i, d) = row[2 * e + h * dh + d];
                            dout(i, d) = on->grad[(bi * s + i) * e + h * dh + d];
                        }
                    }
                    Eigen::Map<const RowMat<T>> p(probs->data() + (bi * heads + h) * s * s, s, s);
                    RowMat<T> dv = p.transpose() * dout;
                    dp.noalias() = dout * v.transpose();
                    ds.setZero();
                    for (std::size_t i = 0; i < s; ++i) {
                        T dot = T(0);
                        for (std::size_t j = 0; j <= i; ++j) dot += p(i, j) * dp(i, j);
                        for (std::size_t j = 0; j <= i; ++j) ds(i, j) = p(i, j) * (dp(i, j) - dot) * scale;
                    }
                    RowMat<T> dq = ds * k;
                    RowMat<T> dk = ds.transpose() * q;
                    for (std::size_t i = 0; i < s; ++i) {
                        T* row = g.data() + (bi * s + i) * 3 * e;
                        for (std::size_t d = 0; d < dh; ++d) {
                            row[h * dh + d] += dq(i, d);
                            row[e + h * dh + d] += dk(i, d);
                            row[2 * e + h * dh + d] += dv(i, d);
                        }
                    }
                }
        };
    });
}

template Tensor<float> causal_attention(const Tensor<float>&, std::size_t);
template Tensor<double> causal_attention(const Tensor<double>&, std::size_t);

}  // namespace disco::nn
