#include <benchmark/benchmark.h>

#include "disco/autoregressor.hpp"
#include "disco/stage1_trainer.hpp"
#include "disco/synth.hpp"

using namespace disco;

namespace {

// Full desk-scale alternation (D step + G step) at batch 8.
void BM_Stage1Alternation(benchmark::State& state) {
    const auto ds = synth::generate({7, 4, 1, 16, 32});
    Rng rng(1);
    auto model = stage1::DisentangleModel<float>::create(stage1::ModelConfig{}, rng);
    stage1::TrainConfig cfg;
    cfg.reseed_dead_codes = false;
    stage1::Stage1Trainer trainer(model, cfg, ds.data);
    for (auto _ : state) benchmark::DoNotOptimize(trainer.step());
}
BENCHMARK(BM_Stage1Alternation)->Unit(benchmark::kMillisecond)->MinTime(2.0);

void BM_Stage2Step(benchmark::State& state) {
    Rng rng(2);
    ar::ArConfig cfg;
    auto model = ar::ArModel<float>::create(cfg, rng);
    ar::EncodedSet set;
    set.style_dim = cfg.style_dim;
    set.sequence_length = cfg.sequence_length();
    for (std::size_t i = 0; i < 64; ++i) {
        for (std::size_t j = 0; j < cfg.style_dim; ++j) set.styles.push_back(static_cast<float>(rng.normal()));
        for (std::size_t j = 0; j < set.sequence_length; ++j)
            set.indices.push_back(static_cast<std::uint32_t>(rng.below(cfg.codebook_size)));
        set.labels.push_back(0);
    }
    ar::Stage2Trainer trainer(model, {3e-4, static_cast<std::size_t>(state.range(0)), 1}, set);
    for (auto _ : state) benchmark::DoNotOptimize(trainer.step());
}
BENCHMARK(BM_Stage2Step)->Arg(16)->Unit(benchmark::kMillisecond);

// args: samples, window rows (0 = full context)
void BM_SampleContentMaps(benchmark::State& state) {
    Rng rng(3);
    ar::ArConfig cfg;
    const auto model = ar::ArModel<float>::create(cfg, rng);
    const auto n = static_cast<std::size_t>(state.range(0));
    nn::Tensor<float> styles(nn::Shape{n, cfg.style_dim});
    for (auto& v : styles.values()) v = static_cast<float>(rng.normal());
    const ar::SamplingOptions opts{100, static_cast<std::size_t>(state.range(1))};
    for (auto _ : state) benchmark::DoNotOptimize(ar::sample_content_maps(model, styles, n, opts, rng));
}
BENCHMARK(BM_SampleContentMaps)->Args({9, 0})->Args({9, 2})->Unit(benchmark::kMillisecond);

}  // namespace
