#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "disco/autoregressor.hpp"

namespace testing {

/// Plain-loop re-implementation of the AR forward pass, reading the weights
/// by name. Returns logits for rows 0..tokens.size(), each K wide.
class LoopTransformer {
  public:
    explicit LoopTransformer(const disco::ar::ArModel<double>& model) : cfg_(model.config()) {
        for (const auto& [name, t] : model.params()) w_[name] = t.values();
    }

    std::vector<std::vector<double>> logits(const std::vector<double>& style,
                                            const std::vector<std::uint32_t>& tokens) const {
        const std::size_t e = cfg_.embed_dim, k = cfg_.codebook_size, len = tokens.size() + 1;
        std::vector<double> soft(k);
        if (cfg_.mode == disco::ar::ConditioningMode::StyleConditioned) {
            const auto& sw = w_.at("ar.style_proj.weight");
            const auto& sb = w_.at("ar.style_proj.bias");
            for (std::size_t j = 0; j < k; ++j) {
                double acc = sb[j];
                for (std::size_t i = 0; i < style.size(); ++i) acc += style[i] * sw[i * k + j];
                soft[j] = acc;
            }
        } else {
            soft = w_.at("ar.start");
        }
        const auto& tok = w_.at("ar.tok_emb");
        const auto& pos = w_.at("ar.pos_emb");
        std::vector<std::vector<double>> x(len, std::vector<double>(e, 0.0));
        for (std::size_t c = 0; c < e; ++c) {
            double acc = 0.0;
            for (std::size_t j = 0; j < k; ++j) acc += soft[j] * tok[j * e + c];
            x[0][c] = acc + pos[c];
        }
        for (std::size_t r = 1; r < len; ++r)
            for (std::size_t c = 0; c < e; ++c) x[r][c] = tok[tokens[r - 1] * e + c] + pos[r * e + c];

        for (std::size_t l = 0; l < cfg_.layers; ++l) {
            const std::string b = "ar.block" + std::to_string(l);
            const auto qkv = linear(norm(x, b + ".ln1"), b + ".qkv");
            const auto att = linear(attention(qkv), b + ".proj");
            for (std::size_t r = 0; r < len; ++r)
                for (std::size_t c = 0; c < e; ++c) x[r][c] += att[r][c];
            auto hidden = linear(norm(x, b + ".ln2"), b + ".fc1");
            for (auto& row : hidden)
                for (auto& v : row) v = 0.5 * v * (1.0 + std::tanh(std::sqrt(2.0 / M_PI) * (v + 0.044715 * v * v * v)));
            const auto mlp = linear(hidden, b + ".fc2");
            for (std::size_t r = 0; r < len; ++r)
                for (std::size_t c = 0; c < e; ++c) x[r][c] += mlp[r][c];
        }
        return linear(norm(x, "ar.ln_f"), "ar.head");
    }

  private:
    using Rows = std::vector<std::vector<double>>;

    Rows norm(const Rows& x, const std::string& name) const {
        const auto& g = w_.at(name + ".gamma");
        const auto& b = w_.at(name + ".beta");
        Rows out = x;
        for (auto& row : out) {
            double mean = 0.0, var = 0.0;
            for (double v : row) mean += v;
            mean /= static_cast<double>(row.size());
            for (double v : row) var += (v - mean) * (v - mean);
            var /= static_cast<double>(row.size());
            for (std::size_t c = 0; c < row.size(); ++c) row[c] = (row[c] - mean) / std::sqrt(var + 1e-5) * g[c] + b[c];
        }
        return out;
    }

    Rows linear(const Rows& x, const std::string& name) const {
        const auto& wt = w_.at(name + ".weight");
        const auto& bs = w_.at(name + ".bias");
        const std::size_t in = x[0].size(), out = bs.size();
        Rows y(x.size(), std::vector<double>(out));
        for (std::size_t r = 0; r < x.size(); ++r)
            for (std::size_t o = 0; o < out; ++o) {
                double acc = bs[o];
                for (std::size_t i = 0; i < in; ++i) acc += x[r][i] * wt[i * out + o];
                y[r][o] = acc;
            }
        return y;
    }

    Rows attention(const Rows& qkv) const {
        const std::size_t e = cfg_.embed_dim, heads = cfg_.heads, dh = e / heads, len = qkv.size();
        Rows out(len, std::vector<double>(e, 0.0));
        for (std::size_t h = 0; h < heads; ++h)
            for (std::size_t i = 0; i < len; ++i) {
                std::vector<double> score(i + 1);
                double mx = -1e300;
                for (std::size_t j = 0; j <= i; ++j) {
                    double s = 0.0;
                    for (std::size_t d = 0; d < dh; ++d) s += qkv[i][h * dh + d] * qkv[j][e + h * dh + d];
                    score[j] = s / std::sqrt(static_cast<double>(dh));
                    mx = std::max(mx, score[j]);
                }
                double z = 0.0;
                for (auto& s : score) z += s = std::exp(s - mx);
                for (std::size_t j = 0; j <= i; ++j)
                    for (std::size_t d = 0; d < dh; ++d) out[i][h * dh + d] += score[j] / z * qkv[j][2 * e + h * dh + d];
            }
        return out;
    }

    disco::ar::ArConfig cfg_;
    std::map<std::string, std::vector<double>> w_;
};

/// Exact probability of a whole sequence from the loop transformer.
inline double sequence_probability(const LoopTransformer& oracle, const std::vector<double>& style,
                                   const std::vector<std::uint32_t>& seq) {
    const std::vector<std::uint32_t> inputs(seq.begin(), seq.end() - 1);
    const auto rows = oracle.logits(style, inputs);
    double logp = 0.0;
    for (std::size_t i = 0; i < seq.size(); ++i) {
        double mx = -1e300, z = 0.0;
        for (double v : rows[i]) mx = std::max(mx, v);
        for (double v : rows[i]) z += std::exp(v - mx);
        logp += rows[i][seq[i]] - mx - std::log(z);
    }
    return std::exp(logp);
}

/// Every sequence of length n over k symbols, in lexicographic order.
inline std::vector<std::vector<std::uint32_t>> all_sequences(std::size_t k, std::size_t n) {
    std::vector<std::vector<std::uint32_t>> out;
    std::vector<std::uint32_t> cur(n, 0);
    while (true) {
        out.push_back(cur);
        std::size_t i = n;
        while (i > 0 && ++cur[i - 1] == k) cur[--i] = 0;
        if (i == 0) break;
    }
    return out;
}

}  // namespace testing
