// OpenMP kernels vs the serial double-precision reference.
// Build with -DFSSKIT_BUILD_BENCH=ON (default) and run bench/bench_kernels.

#include <benchmark/benchmark.h>

#include "fsskit/attention.hpp"
#include "fsskit/episode.hpp"
#include "fsskit/kernels.hpp"
#include "fsskit/ref/reference.hpp"
#include "fsskit/rng.hpp"

using namespace fsskit;

namespace {

Tensor random_tensor(std::uint64_t seed, Shape shape) {
    Rng rng(seed);
    Tensor t(std::move(shape));
    for (float& v : t.data()) v = static_cast<float>(rng.uniform(-1, 1));
    return t;
}

BinaryMask random_mask(std::uint64_t seed, std::size_t h, std::size_t w) {
    Rng rng(seed);
    BinaryMask m(h, w);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) m.set(y, x, rng.uniform() < 0.5);
    return m;
}

void BM_Conv1x1_Omp(benchmark::State& state) {
    const Tensor x = random_tensor(1, Shape{64, 30, 30});
    const Tensor w = random_tensor(2, Shape{64, 64});
    for (auto _ : state) {
        Tensor out = conv1x1(x, w, {});
        benchmark::DoNotOptimize(out.data().data());
    }
}
BENCHMARK(BM_Conv1x1_Omp);

void BM_Conv1x1_Serial(benchmark::State& state) {
    const Tensor x = random_tensor(1, Shape{64, 30, 30});
    const Tensor w = random_tensor(2, Shape{64, 64});
    for (auto _ : state) {
        std::vector<double> out = ref::conv1x1(x, w, {});
        benchmark::DoNotOptimize(out.data());
    }
}
BENCHMARK(BM_Conv1x1_Serial);

void BM_AttentionScores_Omp(benchmark::State& state) {
    const Tensor q = random_tensor(3, Shape{64, 30, 30});
    const Tensor s = random_tensor(4, Shape{64, 30, 30});
    const ProjectionWeights w = make_projection_weights(5, 0, 64, 64, 64);
    for (auto _ : state) {
        AttentionMap attn = cross_attention_scores(q, s, w);
        benchmark::DoNotOptimize(attn.scores.data().data());
    }
}
BENCHMARK(BM_AttentionScores_Omp);

void BM_AttentionScores_Serial(benchmark::State& state) {
    const Tensor q = random_tensor(3, Shape{64, 30, 30});
    const Tensor s = random_tensor(4, Shape{64, 30, 30});
    const ProjectionWeights w = make_projection_weights(5, 0, 64, 64, 64);
    for (auto _ : state) {
        std::vector<double> scores = ref::attention_scores(q, s, w.wq, w.wk);
        benchmark::DoNotOptimize(scores.data());
    }
}
BENCHMARK(BM_AttentionScores_Serial);

void BM_RowSoftmax_Omp(benchmark::State& state) {
    const Tensor a = random_tensor(6, Shape{900, 900});
    for (auto _ : state) {
        Tensor out = row_softmax(a);
        benchmark::DoNotOptimize(out.data().data());
    }
}
BENCHMARK(BM_RowSoftmax_Omp);

void BM_RowSoftmax_Serial(benchmark::State& state) {
    const Tensor a = random_tensor(6, Shape{900, 900});
    for (auto _ : state) {
        std::vector<double> out = ref::row_softmax(a);
        benchmark::DoNotOptimize(out.data());
    }
}
BENCHMARK(BM_RowSoftmax_Serial);

void BM_MinmaxNormalize_Omp(benchmark::State& state) {
    const Tensor v = random_tensor(7, Shape{1, 256, 256});
    const BinaryMask region = random_mask(8, 256, 256);
    for (auto _ : state) {
        Tensor out = masked_minmax_normalize(v, region);
        benchmark::DoNotOptimize(out.data().data());
    }
}
BENCHMARK(BM_MinmaxNormalize_Omp);

void BM_MinmaxNormalize_Serial(benchmark::State& state) {
    const Tensor v = random_tensor(7, Shape{1, 256, 256});
    const BinaryMask region = random_mask(8, 256, 256);
    for (auto _ : state) {
        std::vector<double> out = ref::masked_minmax_normalize(v, region);
        benchmark::DoNotOptimize(out.data());
    }
}
BENCHMARK(BM_MinmaxNormalize_Serial);

void BM_PmgmPrior_Omp(benchmark::State& state) {
    SyntheticConfig cfg;
    cfg.channels = 64;
    cfg.height = 30;
    cfg.width = 30;
    cfg.distractor = true;
    const Episode ep = generate_synthetic_episode(cfg, 0).episode;
    const Shot& shot = ep.shots[0];
    auto [s_pos, s_neg] = threshold_cam(shot.cam, 0.7f);
    auto [q_pos, q_neg] = threshold_cam(ep.query_cam, 0.7f);
    const RegionMasks regions = decompose_regions(shot.mask, s_pos, s_neg);
    const PrototypeSet protos = build_prototypes(shot.features, regions, shot.mask);
    for (auto _ : state) {
        PriorMap prior = region_cosine_prior(ep.query_features, protos, q_pos, q_neg);
        benchmark::DoNotOptimize(prior.grid.data().data());
    }
}
BENCHMARK(BM_PmgmPrior_Omp);

void BM_PmgmPrior_Serial(benchmark::State& state) {
    SyntheticConfig cfg;
    cfg.channels = 64;
    cfg.height = 30;
    cfg.width = 30;
    cfg.distractor = true;
    const Episode ep = generate_synthetic_episode(cfg, 0).episode;
    const Shot& shot = ep.shots[0];
    for (auto _ : state) {
        std::vector<double> prior =
            ref::pmgm_prior(shot.features, shot.mask, shot.cam.grid(),
                            ep.query_features, ep.query_cam.grid(), 0.7);
        benchmark::DoNotOptimize(prior.data());
    }
}
BENCHMARK(BM_PmgmPrior_Serial);

}  // namespace

BENCHMARK_MAIN();
