#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "disco/dataset.hpp"
#include "disco/rng.hpp"

/// Realism (Frechet distance), diversity (mean pairwise distance) and
/// episodic few-shot classification, all over frozen image features.
namespace disco::metrics {

struct GaussianStats {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
    std::size_t count = 0;
};

/// Sample mean and unbiased covariance of the rows of `features` (n x d).
GaussianStats fit_gaussian(const Eigen::MatrixXd& features);

/// ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2)).
double frechet_distance(const GaussianStats& a, const GaussianStats& b);

/// Mean L2 distance over unordered pairs of rows.
double pairwise_diversity(const Eigen::MatrixXd& features);
/// Mean of pairwise_diversity over categories.
double diversity_score(const std::vector<Eigen::MatrixXd>& per_category);

/// Maps images to feature rows.
using FeatureFn = std::function<Eigen::MatrixXd(std::span<const Image>)>;

struct ProbeOptions {
    double tolerance = 1e-6;       // stop once max |gradient| falls below this
    std::size_t max_iterations = 3000;
    double learning_rate = 1.0;
    double weight_decay = 1e-3;
};

/// Multinomial logistic regression trained by full-batch gradient descent.
struct LinearProbe {
    Eigen::MatrixXd weight;  // d x L
    Eigen::VectorXd bias;    // L
    std::size_t iterations = 0;

    [[nodiscard]] std::vector<std::size_t> predict(const Eigen::MatrixXd& x) const;
};
LinearProbe fit_linear_probe(const Eigen::MatrixXd& x, std::span<const std::size_t> labels, std::size_t classes,
                             const ProbeOptions& options = {});

/// Generated features for one episode category: (category label, feature
/// rows of its support images, number to generate, rng) -> n_aug rows.
using AugmentFn =
    std::function<Eigen::MatrixXd(std::size_t category, std::span<const std::size_t> support, std::size_t count, Rng& rng)>;

struct FewShotOptions {
    std::size_t ways = 5;      // L
    std::size_t shots = 1;     // M
    std::size_t augment = 0;   // n_aug per category
    std::size_t episodes = 10;
    ProbeOptions probe;
};

struct FewShotResult {
    double mean_accuracy = 0.0;
    std::vector<double> episode_accuracy;
};

/// Features are L2-normalized before the probe. `support` indices handed to
/// `augment` refer to rows of `features`.
FewShotResult fewshot_accuracy(const Eigen::MatrixXd& features, std::span<const std::size_t> labels,
                               const FewShotOptions& options, const AugmentFn& augment, Rng& rng);

/// Produces `count` images for one category from its H style images.
using GeneratorFn = std::function<std::vector<Image>(std::span<const Image> style_images, std::size_t count, Rng& rng)>;

struct HShotRow {
    std::string setting;  // "H=1", ..., or "real-split"
    std::size_t h = 0;
    double fid = 0.0;
    double diversity = 0.0;
};

/// For each H: per category, H random style images condition `count`
/// generated images; scores FID against all real images of `data` and mean
/// diversity. A final "real-split" row scores one half of the real images
/// against the other half.
std::vector<HShotRow> hshot_sweep(const FeatureFn& features, const LabeledImages& data, const GeneratorFn& generator,
                                  const std::vector<std::size_t>& hs, std::size_t count, Rng& rng);

struct ScoreRow {
    std::string metric;
    std::string setting;
    double value = 0.0;
    std::uint64_t seed = 0;
};

/// CSV with header `metric,setting,value,seed`, preceded by a
/// `# config_hash=...` comment line when a hash is given.
std::string scores_csv(const std::vector<ScoreRow>& rows, const std::string& config_hash = "");
void write_scores_csv(const std::filesystem::path& path, const std::vector<ScoreRow>& rows,
                      const std::string& config_hash = "");

}  // namespace disco::metrics
