#include <benchmark/benchmark.h>

#include "mmfusion/fusion.hpp"
#include "mmfusion/training.hpp"

using namespace mmf;

static void bm_matmul(benchmark::State& state) {
    const auto n = std::size_t(state.range(0));
    Rng rng(1);
    const Tensor a = rng_normal(rng, {n, n}, 0.0, 1.0);
    const Tensor b = rng_normal(rng, {n, n}, 0.0, 1.0);
    for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
}
BENCHMARK(bm_matmul)->Arg(16)->Arg(64)->Arg(128);

static void bm_conv2d(benchmark::State& state) {
    Rng rng(2);
    ConvSpec spec;
    spec.w_in = spec.h_in = 6;
    spec.kernel = 3;
    spec.padding = 1;
    spec.d_out = 4;
    const Tensor img = rng_normal(rng, {1, 6, 6}, 0.0, 1.0);
    const Tensor kernels = rng_normal(rng, {4, 1, 3, 3}, 0.0, 1.0);
    const Tensor bias({4}, 0.0);
    for (auto _ : state) benchmark::DoNotOptimize(conv2d_forward(img, spec, kernels, bias));
}
BENCHMARK(bm_conv2d);

static void bm_attention(benchmark::State& state) {
    Rng rng(3);
    AttentionHead head = AttentionHead::init(16, 16, 16, rng);
    const Tensor x = rng_normal(rng, {16, 9}, 0.0, 1.0);
    for (auto _ : state) benchmark::DoNotOptimize(attention(head, x));
}
BENCHMARK(bm_attention);

static void bm_model_forward(benchmark::State& state) {
    DatasetSpec spec;
    spec.n_samples = 4;
    const Dataset ds = generate(spec);
    const MultimodalModel model = MultimodalModel::init(ModelConfig{}, ds, 7);
    for (auto _ : state) benchmark::DoNotOptimize(predict(model, ds.samples[0]));
}
BENCHMARK(bm_model_forward);

static void bm_model_backward(benchmark::State& state) {
    DatasetSpec spec;
    spec.n_samples = 4;
    const Dataset ds = generate(spec);
    const MultimodalModel model = MultimodalModel::init(ModelConfig{}, ds, 7);
    for (auto _ : state) {
        Tape t;
        const std::vector<NodeId> params = param_leaves(t, model);
        const NodeId probs = model_forward(t, model, params, ds.samples[0]);
        t.backward(ops::cross_entropy(t, probs, ds.samples[0].label));
        benchmark::DoNotOptimize(t.grad(params[0]));
    }
}
BENCHMARK(bm_model_backward);

BENCHMARK_MAIN();
