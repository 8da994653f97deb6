#include "disco/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <Eigen/Eigenvalues>
#include <fmt/format.h>

#include "disco/binary_io.hpp"
#include "disco/errors.hpp"

namespace disco::metrics {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

GaussianStats fit_gaussian(const MatrixXd& features) {
    const Index n = features.rows();
    if (n < 2) throw ContractError(fmt::format("fit_gaussian: need at least 2 samples, got {}", n));
    if (!features.allFinite()) throw NumericError("fit_gaussian: non-finite feature");
    GaussianStats g;
    g.count = static_cast<std::size_t>(n);
    g.mean = features.colwise().mean().transpose();
    const MatrixXd centered = features.rowwise() - g.mean.transpose();
    g.cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
    return g;
}

namespace {

constexpr double kClamp = 1e-6;

// Symmetric PSD square root; eigenvalues in (-1e-6, 0) are clamped.
MatrixXd psd_sqrt(const MatrixXd& m, const char* what) {
    const MatrixXd sym = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(sym);
    if (eig.info() != Eigen::Success) throw NumericError(fmt::format("frechet_distance: {} eigensolver failed", what));
    VectorXd ev = eig.eigenvalues();
    for (Index i = 0; i < ev.size(); ++i) {
        if (ev(i) < -kClamp)
            throw NumericError(fmt::format("frechet_distance: {} has eigenvalue {:.3e} below -1e-6", what, ev(i)));
        ev(i) = std::sqrt(std::max(ev(i), 0.0));
    }
    return eig.eigenvectors() * ev.asDiagonal() * eig.eigenvectors().transpose();
}

double trace_sqrt(const MatrixXd& m, const char* what) {
    const MatrixXd sym = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(sym, Eigen::EigenvaluesOnly);
    if (eig.info() != Eigen::Success) throw NumericError(fmt::format("frechet_distance: {} eigensolver failed", what));
    double t = 0.0;
    for (Index i = 0; i < eig.eigenvalues().size(); ++i) {
        const double v = eig.eigenvalues()(i);
        if (v < -kClamp)
            throw NumericError(fmt::format("frechet_distance: {} has eigenvalue {:.3e} below -1e-6", what, v));
        t += std::sqrt(std::max(v, 0.0));
    }
    return t;
}

}  // namespace

double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
    if (a.mean.size() != b.mean.size() || a.cov.rows() != b.cov.rows() || a.cov.rows() != a.mean.size())
        throw ContractError(
            fmt::format("frechet_distance: dimensions differ ({} vs {})", a.mean.size(), b.mean.size()));
    // Tr((S_a S_b)^(1/2)) = Tr((S_a^(1/2) S_b S_a^(1/2))^(1/2)), a symmetric PSD form
    const MatrixXd ra = psd_sqrt(a.cov, "first covariance");
    const double cross = trace_sqrt(ra * b.cov * ra, "covariance product");
    const double d = (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() - 2.0 * cross;
    if (!std::isfinite(d)) throw NumericError("frechet_distance: result is not finite");
    return std::max(d, 0.0);
}

double pairwise_diversity(const MatrixXd& features) {
    const Index n = features.rows();
    if (n < 2) throw ContractError(fmt::format("diversity: need at least 2 images, got {}", n));
    double total = 0.0;
    for (Index i = 0; i < n; ++i)
        for (Index j = i + 1; j < n; ++j) total += (features.row(i) - features.row(j)).norm();
    return total / (0.5 * static_cast<double>(n) * static_cast<double>(n - 1));
}

double diversity_score(const std::vector<MatrixXd>& per_category) {
    require(!per_category.empty(), "diversity: no categories");
    double total = 0.0;
    for (const auto& f : per_category) total += pairwise_diversity(f);
    return total / static_cast<double>(per_category.size());
}

std::vector<std::size_t> LinearProbe::predict(const MatrixXd& x) const {
    const MatrixXd scores = (x * weight).rowwise() + bias.transpose();
    std::vector<std::size_t> out(static_cast<std::size_t>(x.rows()));
    for (Index r = 0; r < x.rows(); ++r) {
        Index best = 0;
        scores.row(r).maxCoeff(&best);
        out[static_cast<std::size_t>(r)] = static_cast<std::size_t>(best);
    }
    return out;
}

LinearProbe fit_linear_probe(const MatrixXd& x, std::span<const std::size_t> labels, std::size_t classes,
                             const ProbeOptions& options) {
    const Index n = x.rows(), d = x.cols(), k = static_cast<Index>(classes);
    require(n >= 1 && static_cast<std::size_t>(n) == labels.size(), "linear probe: one label per row required");
    require(classes >= 1, "linear probe: need at least one class");
    MatrixXd y = MatrixXd::Zero(n, k);
    for (Index r = 0; r < n; ++r) {
        require(labels[static_cast<std::size_t>(r)] < classes, "linear probe: label out of range");
        y(r, static_cast<Index>(labels[static_cast<std::size_t>(r)])) = 1.0;
    }
    LinearProbe p{MatrixXd::Zero(d, k), VectorXd::Zero(k), 0};
    MatrixXd prob(n, k);
    for (std::size_t it = 0; it < options.max_iterations; ++it) {
        prob = (x * p.weight).rowwise() + p.bias.transpose();
        for (Index r = 0; r < n; ++r) {
            const double mx = prob.row(r).maxCoeff();
            prob.row(r) = (prob.row(r).array() - mx).exp();
            prob.row(r) /= prob.row(r).sum();
        }
        const MatrixXd g = (prob - y) / static_cast<double>(n);
        const MatrixXd gw = x.transpose() * g + options.weight_decay * p.weight;
        const VectorXd gb = g.colwise().sum().transpose();
        p.iterations = it + 1;
        if (std::max(gw.cwiseAbs().maxCoeff(), gb.cwiseAbs().maxCoeff()) < options.tolerance) break;
        p.weight -= options.learning_rate * gw;
        p.bias -= options.learning_rate * gb;
    }
    return p;
}

namespace {

MatrixXd l2_normalize_rows(MatrixXd m) {
    for (Index r = 0; r < m.rows(); ++r) {
        const double nrm = m.row(r).norm();
        if (nrm > 0.0) m.row(r) /= nrm;
    }
    return m;
}

}  // namespace

FewShotResult fewshot_accuracy(const MatrixXd& features, std::span<const std::size_t> labels,
                               const FewShotOptions& options, const AugmentFn& augment, Rng& rng) {
    require(static_cast<std::size_t>(features.rows()) == labels.size(), "fewshot: one label per feature row required");
    require(options.ways >= 2 && options.shots >= 1 && options.episodes >= 1, "fewshot: invalid protocol");
    require(options.augment == 0 || static_cast<bool>(augment), "fewshot: augmentation requested without a generator");
    std::map<std::size_t, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < labels.size(); ++i) members[labels[i]].push_back(i);
    std::vector<std::size_t> categories;
    for (const auto& [label, rows] : members)
        if (rows.size() > options.shots) categories.push_back(label);
    if (categories.size() < options.ways)
        throw ContractError(fmt::format("fewshot: {}-way {}-shot needs {} categories with more than {} images, have {}",
                                        options.ways, options.shots, options.ways, options.shots, categories.size()));
    const MatrixXd normalized = l2_normalize_rows(features);

    FewShotResult result;
    for (std::size_t ep = 0; ep < options.episodes; ++ep) {
        // separate streams keep the episode draws identical with and without augmentation
        Rng episode_rng = rng.split();
        Rng augment_rng = rng.split();
        const auto picks = episode_rng.choose(categories.size(), options.ways);
        std::vector<MatrixXd> train_blocks;
        std::vector<std::size_t> train_labels, query_rows, query_labels;
        for (std::size_t w = 0; w < options.ways; ++w) {
            const auto& rows = members[categories[picks[w]]];
            const auto chosen = episode_rng.choose(rows.size(), options.shots);
            std::vector<bool> in_support(rows.size(), false);
            std::vector<std::size_t> support;
            for (auto c : chosen) {
                in_support[c] = true;
                support.push_back(rows[c]);
            }
            MatrixXd block(static_cast<Index>(support.size()), features.cols());
            for (std::size_t s = 0; s < support.size(); ++s) block.row(static_cast<Index>(s)) = normalized.row(static_cast<Index>(support[s]));
            train_blocks.push_back(block);
            train_labels.insert(train_labels.end(), support.size(), w);
            if (options.augment > 0) {
                MatrixXd gen = augment(categories[picks[w]], support, options.augment, augment_rng);
                if (gen.rows() != static_cast<Index>(options.augment) || gen.cols() != features.cols())
                    throw ContractError("fewshot: augmentation returned features of the wrong shape");
                train_blocks.push_back(l2_normalize_rows(std::move(gen)));
                train_labels.insert(train_labels.end(), options.augment, w);
            }
            for (std::size_t j = 0; j < rows.size(); ++j)
                if (!in_support[j]) {
                    query_rows.push_back(rows[j]);
                    query_labels.push_back(w);
                }
        }
        Index total = 0;
        for (const auto& b : train_blocks) total += b.rows();
        MatrixXd train(total, features.cols());
        Index at = 0;
        for (const auto& b : train_blocks) {
            train.middleRows(at, b.rows()) = b;
            at += b.rows();
        }
        const auto probe = fit_linear_probe(train, train_labels, options.ways, options.probe);
        MatrixXd query(static_cast<Index>(query_rows.size()), features.cols());
        for (std::size_t q = 0; q < query_rows.size(); ++q) query.row(static_cast<Index>(q)) = normalized.row(static_cast<Index>(query_rows[q]));
        const auto pred = probe.predict(query);
        std::size_t hits = 0;
        for (std::size_t q = 0; q < pred.size(); ++q) hits += pred[q] == query_labels[q];
        result.episode_accuracy.push_back(static_cast<double>(hits) / static_cast<double>(pred.size()));
    }
    double sum = 0.0;
    for (auto a : result.episode_accuracy) sum += a;
    result.mean_accuracy = sum / static_cast<double>(result.episode_accuracy.size());
    return result;
}

std::vector<HShotRow> hshot_sweep(const FeatureFn& features, const LabeledImages& data, const GeneratorFn& generator,
                                  const std::vector<std::size_t>& hs, std::size_t count, Rng& rng) {
    data.validate();
    require(count >= 2, "hshot: need at least 2 generated images per category");
    std::vector<std::vector<std::size_t>> members;
    for (auto& rows : data.by_label())
        if (!rows.empty()) members.push_back(std::move(rows));
    require(!members.empty(), "hshot: no images");
    const auto real_stats = fit_gaussian(features(data.images));

    std::vector<HShotRow> table;
    for (auto h : hs) {
        require(h >= 1, "hshot: H must be at least 1");
        std::vector<Image> generated_all;
        std::vector<MatrixXd> per_category;
        for (const auto& rows : members) {
            if (h > rows.size())
                throw ContractError(fmt::format("hshot: H={} exceeds the {} images available in a category", h, rows.size()));
            std::vector<Image> styles;
            for (auto c : rng.choose(rows.size(), h)) styles.push_back(data.images[rows[c]]);
            auto gen = generator(styles, count, rng);
            require(gen.size() == count, "hshot: generator returned the wrong number of images");
            per_category.push_back(features(gen));
            generated_all.insert(generated_all.end(), gen.begin(), gen.end());
        }
        table.push_back({fmt::format("H={}", h), h, frechet_distance(fit_gaussian(features(generated_all)), real_stats),
                         diversity_score(per_category)});
    }

    std::vector<Image> half_a, half_b;
    std::vector<MatrixXd> per_category;
    for (auto rows : members) {
        rng.shuffle(rows.begin(), rows.end());
        const std::size_t cut = rows.size() / 2;
        std::vector<Image> a;
        for (std::size_t j = 0; j < rows.size(); ++j) (j < cut ? a : half_b).push_back(data.images[rows[j]]);
        if (a.size() >= 2) per_category.push_back(features(a));
        half_a.insert(half_a.end(), a.begin(), a.end());
    }
    HShotRow floor{"real-split", 0, frechet_distance(fit_gaussian(features(half_a)), fit_gaussian(features(half_b))), 0.0};
    if (!per_category.empty()) floor.diversity = diversity_score(per_category);
    table.push_back(floor);
    return table;
}

std::string scores_csv(const std::vector<ScoreRow>& rows, const std::string& config_hash) {
    std::string out;
    if (!config_hash.empty()) out += "# config_hash=" + config_hash + "\n";
    out += "metric,setting,value,seed\n";
    for (const auto& r : rows) out += fmt::format("{},{},{:.9g},{}\n", r.metric, r.setting, r.value, r.seed);
    return out;
}

void write_scores_csv(const std::filesystem::path& path, const std::vector<ScoreRow>& rows,
                      const std::string& config_hash) {
    io::write_text(path, scores_csv(rows, config_hash));
}

}  // namespace disco::metrics
