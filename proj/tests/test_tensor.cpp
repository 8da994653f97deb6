#include <doctest.h>

#include <cmath>

#include "disco/errors.hpp"
#include "disco/gradcheck.hpp"
#include "disco/ops.hpp"
#include "helpers.hpp"

using namespace disco;
using nn::Shape;
using nn::Tensor;

TEST_SUITE("tensor") {
    TEST_CASE("construction checks value count against the shape") {
        CHECK_NOTHROW(Tensor<float>(Shape{2, 3}, std::vector<float>(6, 1.0f)));
        CHECK_THROWS_AS(Tensor<float>(Shape{2, 3}, std::vector<float>(5, 1.0f)), ContractError);
        CHECK_THROWS_AS(Tensor<float>(Shape{2, 0}), ContractError);
        const Tensor<double> t(Shape{4, 5});
        CHECK(t.numel() == 20);
        CHECK(t.rank() == 2);
    }

    TEST_CASE("backward accumulates into leaves and grad has the leaf shape") {
        Tensor<double> x(Shape{3}, {1.0, 2.0, 3.0});
        x.set_requires_grad(true);
        auto y = nn::sum(nn::mul(x, x));
        y.backward();
        REQUIRE(x.has_grad());
        CHECK(x.grad().size() == x.numel());
        CHECK(x.grad()[0] == doctest::Approx(2.0));
        CHECK(x.grad()[2] == doctest::Approx(6.0));
        // a second pass accumulates
        nn::sum(x).backward();
        CHECK(x.grad()[1] == doctest::Approx(5.0));
        x.zero_grad();
        CHECK(x.grad()[1] == 0.0);
    }

    TEST_CASE("a shared subexpression receives both gradient contributions") {
        Tensor<double> x(Shape{1}, {2.0});
        x.set_requires_grad(true);
        auto y = nn::square(x);
        nn::add(y, y).backward();  // d/dx 2x^2 = 4x
        CHECK(x.grad()[0] == doctest::Approx(8.0));
    }

    TEST_CASE("NoGradGuard stops graph recording") {
        Tensor<double> x(Shape{2}, {1.0, 2.0});
        x.set_requires_grad(true);
        {
            nn::NoGradGuard guard;
            CHECK_FALSE(nn::grad_enabled());
            auto y = nn::sum(nn::square(x));
            CHECK_FALSE(y.requires_grad());
        }
        CHECK(nn::grad_enabled());
        CHECK(nn::sum(x).requires_grad());
    }

    TEST_CASE("detach cuts the graph and clone copies deeply") {
        Tensor<double> x(Shape{2}, {1.0, 2.0});
        x.set_requires_grad(true);
        auto d = x.detach();
        CHECK_FALSE(d.requires_grad());
        auto c = x.clone();
        c.values()[0] = 9.0;
        CHECK(x.values()[0] == 1.0);
    }

    TEST_CASE("non-finite values are a numeric error") {
        Tensor<double> x(Shape{2}, {1.0, std::nan("")});
        CHECK_THROWS_AS(x.check_finite("test"), NumericError);
        Tensor<double> y(Shape{1}, {-1.0});
        y.set_requires_grad(true);
        CHECK_THROWS_AS(nn::grad_check([](const Tensor<double>& t) { return nn::sum(nn::scale(t, std::nan(""))); }, y),
                        NumericError);
    }

    TEST_CASE("backward requires a single-element tensor") {
        Tensor<double> x(Shape{2}, {1.0, 2.0});
        x.set_requires_grad(true);
        CHECK_THROWS_AS(nn::square(x).backward(), ContractError);
    }

    TEST_CASE("grad_check: x^2 at 3 matches to 1e-8") {
        const Tensor<double> x(Shape{1}, {3.0});
        const double err = nn::grad_check([](const Tensor<double>& t) { return nn::sum(nn::square(t)); }, x, 1e-5);
        CHECK(err < 1e-8);
    }

    TEST_CASE("grad_check: sum is exact up to rounding") {
        Rng rng(3);
        const auto x = testing::random_tensor<double>({4, 3}, rng, 1.0, false);
        CHECK(nn::grad_check([](const Tensor<double>& t) { return nn::sum(t); }, x) < 1e-9);
    }

    TEST_CASE("grad_check: non-scalar output is a contract error") {
        const Tensor<double> x(Shape{2}, {1.0, 2.0});
        CHECK_THROWS_AS(nn::grad_check([](const Tensor<double>& t) { return nn::square(t); }, x), ContractError);
        CHECK_THROWS_AS(nn::grad_check([](const Tensor<double>& t) { return nn::sum(t); }, x, 0.0), ContractError);
    }

    TEST_CASE("grad_check detects a wrong derivative") {
        // relu at its kink: either one-sided slope is 0.5 away from the central difference
        const Tensor<double> x(Shape{1}, {0.0});
        CHECK(nn::grad_check([](const Tensor<double>& t) { return nn::sum(nn::relu(t)); }, x) > 0.4);
    }

    TEST_CASE("forward passes are deterministic") {
        Rng a(11), b(11);
        const auto x1 = testing::random_tensor<float>({2, 3, 5, 5}, a, 1.0, false);
        const auto w1 = testing::random_tensor<float>({4, 3, 3, 3}, a, 1.0, false);
        const auto x2 = testing::random_tensor<float>({2, 3, 5, 5}, b, 1.0, false);
        const auto w2 = testing::random_tensor<float>({4, 3, 3, 3}, b, 1.0, false);
        const auto y1 = nn::conv2d(x1, w1, Tensor<float>(), {1, 1, nn::PadMode::Reflect});
        const auto y2 = nn::conv2d(x2, w2, Tensor<float>(), {1, 1, nn::PadMode::Reflect});
        CHECK(y1.values() == y2.values());
    }
}
