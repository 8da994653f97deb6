#include "disco/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "disco/errors.hpp"

namespace disco::nn {

namespace {

double evaluate(const std::function<Tensor<double>()>& fn) {
    NoGradGuard guard;
    Tensor<double> out = fn();
    if (out.numel() != 1) throw ContractError("grad_check: function output is not scalar: " + shape_str(out.shape()));
    const double v = out.item();
    if (!std::isfinite(v)) throw NumericError("grad_check: function value is not finite");
    return v;
}

}  // namespace

double grad_check_params(const std::function<Tensor<double>()>& fn, std::vector<Tensor<double>> leaves, double eps) {
    require(eps > 0.0, "grad_check: eps must be positive");
    std::vector<bool> saved_flags;
    for (auto& leaf : leaves) {
        saved_flags.push_back(leaf.requires_grad());
        leaf.set_requires_grad(true);
        leaf.zero_grad();
    }

    Tensor<double> out = fn();
    if (out.numel() != 1) throw ContractError("grad_check: function output is not scalar: " + shape_str(out.shape()));
    if (!std::isfinite(out.item())) throw NumericError("grad_check: function value is not finite");
    out.backward();

    double worst = 0.0;
    for (auto& leaf : leaves) {
        std::vector<double> analytic = leaf.has_grad() ? std::vector<double>(leaf.grad().begin(), leaf.grad().end())
                                                       : std::vector<double>(leaf.numel(), 0.0);
        auto& vals = leaf.values();
        for (std::size_t i = 0; i < vals.size(); ++i) {
            const double orig = vals[i];
            vals[i] = orig + eps;
            const double plus = evaluate(fn);
            vals[i] = orig - eps;
            const double minus = evaluate(fn);
            vals[i] = orig;
            const double numeric = (plus - minus) / (2.0 * eps);
            worst = std::max(worst, std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i])));
        }
    }
    for (std::size_t i = 0; i < leaves.size(); ++i) {
        leaves[i].zero_grad();
        leaves[i].set_requires_grad(saved_flags[i]);
    }
    return worst;
}

double grad_check(const std::function<Tensor<double>(const Tensor<double>&)>& fn, const Tensor<double>& input,
                  double eps) {
    Tensor<double> x = input.clone();
    return grad_check_params([&] { return fn(x); }, {x}, eps);
}

}  // namespace disco::nn
