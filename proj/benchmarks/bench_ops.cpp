#include <benchmark/benchmark.h>

#include "disco/ops.hpp"
#include "disco/rng.hpp"
#include "disco/vq.hpp"

using namespace disco;
using nn::Shape;
using nn::Tensor;

namespace {

Tensor<float> randn(Shape shape, Rng& rng, bool grad = false) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    std::vector<float> v(n);
    for (auto& x : v) x = static_cast<float>(rng.normal());
    Tensor<float> t(std::move(shape), std::move(v));
    if (grad) t.set_requires_grad(true);
    return t;
}

// args: batch, channels, side
void BM_Conv3x3Forward(benchmark::State& state) {
    Rng rng(1);
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto c = static_cast<std::size_t>(state.range(1));
    const auto s = static_cast<std::size_t>(state.range(2));
    const auto x = randn({n, c, s, s}, rng);
    const auto w = randn({c, c, 3, 3}, rng);
    const auto b = randn({c}, rng);
    nn::NoGradGuard guard;
    for (auto _ : state) benchmark::DoNotOptimize(nn::conv2d(x, w, b, {1, 1, nn::PadMode::Reflect}));
    state.SetItemsProcessed(static_cast<long>(state.iterations() * n * c * c * s * s * 9 * 2));
}
BENCHMARK(BM_Conv3x3Forward)->Args({8, 32, 32})->Args({8, 64, 16})->Args({8, 64, 8})->Unit(benchmark::kMicrosecond);

void BM_Conv3x3Backward(benchmark::State& state) {
    Rng rng(2);
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto c = static_cast<std::size_t>(state.range(1));
    const auto s = static_cast<std::size_t>(state.range(2));
    auto x = randn({n, c, s, s}, rng, true);
    auto w = randn({c, c, 3, 3}, rng, true);
    auto b = randn({c}, rng, true);
    for (auto _ : state) {
        auto loss = nn::sum(nn::conv2d(x, w, b, {1, 1, nn::PadMode::Reflect}));
        loss.backward();
        x.zero_grad();
        w.zero_grad();
        b.zero_grad();
    }
}
BENCHMARK(BM_Conv3x3Backward)->Args({8, 32, 32})->Args({8, 64, 8})->Unit(benchmark::kMicrosecond);

// args: batch, sequence length, embed (4 heads)
void BM_CausalAttention(benchmark::State& state) {
    Rng rng(3);
    const auto b = static_cast<std::size_t>(state.range(0));
    const auto s = static_cast<std::size_t>(state.range(1));
    const auto e = static_cast<std::size_t>(state.range(2));
    auto qkv = randn({b, s, 3 * e}, rng, true);
    for (auto _ : state) {
        auto loss = nn::sum(nn::causal_attention(qkv, 4));
        loss.backward();
        qkv.zero_grad();
    }
}
BENCHMARK(BM_CausalAttention)->Args({16, 65, 128})->Args({4, 257, 128})->Unit(benchmark::kMicrosecond);

// args: rows, K, d
void BM_NearestRows(benchmark::State& state) {
    Rng rng(4);
    const auto m = static_cast<std::size_t>(state.range(0));
    const auto k = static_cast<std::size_t>(state.range(1));
    const auto d = static_cast<std::size_t>(state.range(2));
    const auto rows = randn({m, d}, rng);
    const auto book = randn({k, d}, rng);
    for (auto _ : state) benchmark::DoNotOptimize(vq::nearest_rows(rows, book));
    state.SetItemsProcessed(static_cast<long>(state.iterations() * m));
}
BENCHMARK(BM_NearestRows)->Args({512, 128, 64})->Args({2048, 1024, 64})->Unit(benchmark::kMicrosecond);

void BM_QuantizeMap(benchmark::State& state) {
    Rng rng(5);
    const auto side = static_cast<std::size_t>(state.range(0));
    const auto book = vq::Codebook<float>::random(128, 64, 1.0, rng);
    vq::ContentMap<float> map;
    map.width = map.height = side;
    map.channels = 64;
    map.values.resize(side * side * 64);
    for (auto& v : map.values) v = static_cast<float>(rng.normal());
    for (auto _ : state) benchmark::DoNotOptimize(vq::quantize(map, book));
}
BENCHMARK(BM_QuantizeMap)->Arg(8)->Arg(16)->Unit(benchmark::kMicrosecond);

}  // namespace
BENCHMARK_MAIN();
