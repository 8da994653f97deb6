#include "disco/vq.hpp"

#include <cmath>
#include <memory>

#include <fmt/format.h>

#include "disco/errors.hpp"

namespace disco::vq {

template <typename T>
void Codebook<T>::validate() const {
    require(size >= 1, "codebook must have at least one entry");
    require(dim >= 1, "codebook entries must have positive dimension");
    require(entries.size() == size * dim,
            fmt::format("codebook storage {} does not match K={} x d_c={}", entries.size(), size, dim));
    for (std::size_t i = 0; i < entries.size(); ++i)
        if (!std::isfinite(entries[i]))
            throw NumericError(fmt::format("codebook entry {} has a non-finite component", i / dim));
}

template <typename T>
Codebook<T> Codebook<T>::random(std::size_t size, std::size_t dim, double stddev, Rng& rng) {
    Codebook book{size, dim, std::vector<T>(size * dim)};
    for (auto& v : book.entries) v = static_cast<T>(rng.normal(0.0, stddev));
    return book;
}

template <typename T>
ContentMap<T> ContentMap<T>::from_chw(std::span<const T> chw, std::size_t channels, std::size_t height,
                                      std::size_t width) {
    require(chw.size() == channels * height * width, "ContentMap::from_chw: size does not match geometry");
    ContentMap m{width, height, channels, std::vector<T>(chw.size())};
    const std::size_t hw = height * width;
    for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t p = 0; p < hw; ++p) m.values[p * channels + c] = chw[c * hw + p];
    return m;
}

template <typename T>
std::vector<T> ContentMap<T>::to_chw() const {
    std::vector<T> out(values.size());
    const std::size_t hw = positions();
    for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t p = 0; p < hw; ++p) out[c * hw + p] = values[p * channels + c];
    return out;
}

template <typename T>
T squared_distance(std::span<const T> a, std::span<const T> b) {
    T acc = T(0);
    for (std::size_t i = 0; i < a.size(); ++i) {
        const T d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

template <typename T>
std::uint32_t nearest_index(std::span<const T> v, const Codebook<T>& book) {
    std::uint32_t best = 0;
    T best_d = squared_distance(v, book.entry(0));
    for (std::size_t k = 1; k < book.size; ++k) {
        const T d = squared_distance(v, book.entry(k));
        if (d < best_d) {
            best_d = d;
            best = static_cast<std::uint32_t>(k);
        }
    }
    return best;
}

template <typename T>
QuantizedContentMap<T> quantize(const ContentMap<T>& content, const Codebook<T>& book) {
    require(book.size >= 1, "quantize: empty codebook");
    if (content.channels != book.dim)
        throw ContractError(fmt::format("quantize: content map has d_c={} but codebook has d_c={}", content.channels,
                                        book.dim));
    require(content.values.size() == content.positions() * content.channels, "quantize: malformed content map");
    QuantizedContentMap<T> q;
    q.indices = IndexMap{content.width, content.height, std::vector<std::uint32_t>(content.positions())};
    for (std::size_t i = 0; i < content.positions(); ++i) q.indices.indices[i] = nearest_index(content.at(i), book);
    q.decoded = decode(q.indices, book);
    return q;
}

template <typename T>
ContentMap<T> decode(const IndexMap& indices, const Codebook<T>& book) {
    require(indices.indices.size() == indices.width * indices.height, "decode: index map size does not match w*h");
    ContentMap<T> m{indices.width, indices.height, book.dim, std::vector<T>(indices.indices.size() * book.dim)};
    for (std::size_t i = 0; i < indices.indices.size(); ++i) {
        const auto k = indices.indices[i];
        if (k >= book.size) throw ContractError(fmt::format("decode: index {} out of range [0, {})", k, book.size));
        std::copy_n(book.entries.begin() + static_cast<long>(k * book.dim), book.dim,
                    m.values.begin() + static_cast<long>(i * book.dim));
    }
    return m;
}

template <typename T>
T vq_loss_value(const ContentMap<T>& content, const ContentMap<T>& quantized) {
    if (content.width != quantized.width || content.height != quantized.height ||
        content.channels != quantized.channels)
        throw ContractError("vq_loss: content and quantized maps differ in shape");
    T total = T(0);
    for (std::size_t i = 0; i < content.positions(); ++i) total += squared_distance(content.at(i), quantized.at(i));
    // both stop-gradient terms have the same value
    return total + total;
}

template <typename T>
std::vector<std::uint32_t> nearest_rows(const nn::Tensor<T>& rows, const nn::Tensor<T>& codebook) {
    require(rows.rank() == 2 && codebook.rank() == 2, "nearest_rows: expected [M, d] rows and [K, d] codebook");
    if (rows.dim(1) != codebook.dim(1))
        throw ContractError(fmt::format("nearest_rows: rows have d={} but codebook has d={}", rows.dim(1), codebook.dim(1)));
    const std::size_t m = rows.dim(0), d = rows.dim(1), k = codebook.dim(0);
    std::vector<std::uint32_t> out(m);
    const auto& cb = codebook.values();
    for (std::size_t r = 0; r < m; ++r) {
        std::span<const T> v(rows.values().data() + r * d, d);
        std::uint32_t best = 0;
        T best_d = squared_distance(v, std::span<const T>(cb.data(), d));
        for (std::size_t j = 1; j < k; ++j) {
            const T dist = squared_distance(v, std::span<const T>(cb.data() + j * d, d));
            if (dist < best_d) {
                best_d = dist;
                best = static_cast<std::uint32_t>(j);
            }
        }
        out[r] = best;
    }
    return out;
}

template <typename T>
nn::Tensor<T> vq_loss(const nn::Tensor<T>& rows, const nn::Tensor<T>& codebook,
                      std::span<const std::uint32_t> indices) {
    require(rows.rank() == 2 && codebook.rank() == 2, "vq_loss: expected [M, d] rows and [K, d] codebook");
    const std::size_t m = rows.dim(0), d = rows.dim(1), k = codebook.dim(0);
    if (codebook.dim(1) != d || indices.size() != m)
        throw ContractError(fmt::format("vq_loss: shape mismatch rows {} codebook {} indices {}", nn::shape_str(rows.shape()),
                                        nn::shape_str(codebook.shape()), indices.size()));
    T total = T(0);
    for (std::size_t r = 0; r < m; ++r) {
        if (indices[r] >= k) throw ContractError(fmt::format("vq_loss: index {} out of range", indices[r]));
        total += squared_distance(std::span<const T>(rows.values().data() + r * d, d),
                                  std::span<const T>(codebook.values().data() + indices[r] * d, d));
    }
    auto idx = std::make_shared<std::vector<std::uint32_t>>(indices.begin(), indices.end());
    nn::Node<T>* nr = rows.node().get();
    nn::Node<T>* nc = codebook.node().get();
    return nn::make_op_result<T>(nn::Shape{1}, std::vector<T>{total + total}, {rows, codebook},
                                 [nr, nc, idx, m, d](nn::Node<T>* o) {
                                     return [nr, nc, o, idx, m, d]() {
                                         const T g = o->grad[0];
                                         for (std::size_t r = 0; r < m; ++r) {
                                             const T* c = nr->value.data() + r * d;
                                             const T* e = nc->value.data() + (*idx)[r] * d;
                                             if (nr->requires_grad) {
                                                 T* gc = nr->ensure_grad().data() + r * d;
                                                 for (std::size_t j = 0; j < d; ++j) gc[j] += g * T(2) * (c[j] - e[j]);
                                             }
                                             if (nc->requires_grad) {
                                                 T* ge = nc->ensure_grad().data() + (*idx)[r] * d;
                                                 for (std::size_t j = 0; j < d; ++j) ge[j] += g * T(2) * (e[j] - c[j]);
                                             }
                                         }
                                     };
                                 });
}

void UsageTracker::record(std::span<const std::uint32_t> indices) {
    for (auto k : indices)
        if (k < counts_.size()) ++counts_[k];
}

std::size_t UsageTracker::unused() const {
    std::size_t n = 0;
    for (auto c : counts_) n += (c == 0);
    return n;
}

template <typename T>
std::size_t UsageTracker::reseed(nn::Tensor<T>& codebook, const nn::Tensor<T>& candidates, Rng& rng) {
    require(codebook.rank() == 2 && candidates.rank() == 2 && codebook.dim(1) == candidates.dim(1),
            "reseed: codebook and candidate rows differ in dimension");
    require(codebook.dim(0) == counts_.size(), "reseed: tracker size does not match codebook");
    const std::size_t d = codebook.dim(1);
    std::size_t changed = 0;
    for (std::size_t k = 0; k < counts_.size(); ++k) {
        if (counts_[k] != 0) continue;
        const std::size_t r = rng.below(candidates.dim(0));
        std::copy_n(candidates.values().begin() + static_cast<long>(r * d), d,
                    codebook.values().begin() + static_cast<long>(k * d));
        ++changed;
    }
    std::fill(counts_.begin(), counts_.end(), 0);
    return changed;
}

template struct Codebook<float>;
template struct Codebook<double>;
template struct ContentMap<float>;
template struct ContentMap<double>;
template float squared_distance(std::span<const float>, std::span<const float>);
template double squared_distance(std::span<const double>, std::span<const double>);
template std::uint32_t nearest_index(std::span<const float>, const Codebook<float>&);
template std::uint32_t nearest_index(std::span<const double>, const Codebook<double>&);
template QuantizedContentMap<float> quantize(const ContentMap<float>&, const Codebook<float>&);
template QuantizedContentMap<double> quantize(const ContentMap<double>&, const Codebook<double>&);
template ContentMap<float> decode(const IndexMap&, const Codebook<float>&);
template ContentMap<double> decode(const IndexMap&, const Codebook<double>&);
template float vq_loss_value(const ContentMap<float>&, const ContentMap<float>&);
template double vq_loss_value(const ContentMap<double>&, const ContentMap<double>&);
template std::vector<std::uint32_t> nearest_rows(const nn::Tensor<float>&, const nn::Tensor<float>&);
template std::vector<std::uint32_t> nearest_rows(const nn::Tensor<double>&, const nn::Tensor<double>&);
template nn::Tensor<float> vq_loss(const nn::Tensor<float>&, const nn::Tensor<float>&, std::span<const std::uint32_t>);
template nn::Tensor<double> vq_loss(const nn::Tensor<double>&, const nn::Tensor<double>&,
                                    std::span<const std::uint32_t>);
template std::size_t UsageTracker::reseed(nn::Tensor<float>&, const nn::Tensor<float>&, Rng&);
template std::size_t UsageTracker::reseed(nn::Tensor<double>&, const nn::Tensor<double>&, Rng&);

}  // namespace disco::vq
