#include <benchmark/benchmark.h>

#include "softworld/autograd.hpp"
#include "softworld/nn.hpp"
#include "softworld/rng.hpp"

using namespace softworld;

namespace {

Tensor random_tensor(std::vector<int64_t> shape, Rng& rng) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.normal();
    return t;
}

void BM_MatmulForward(benchmark::State& state) {
    const int64_t n = state.range(0);
    Rng rng(1);
    const Tensor a = random_tensor({n, n}, rng);
    const Tensor b = random_tensor({n, n}, rng);
    for (auto _ : state) {
        Tensor c({n, n});
        gemm_nn(a, b, c);
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(state.iterations() * n * n * n);
}

void BM_AttentionForwardBackward(benchmark::State& state) {
    const int64_t t_len = state.range(0);
    Rng rng(2);
    ag::Parameter wqkv("wqkv", nn::scaled_normal({32, 96}, rng));
    ag::Parameter bqkv("bqkv", Tensor::zeros({96}));
    ag::Parameter wo("wo", nn::scaled_normal({32, 32}, rng));
    ag::Parameter bo("bo", Tensor::zeros({32}));
    const Tensor x = random_tensor({8, t_len, 32}, rng);
    for (auto _ : state) {
        ag::Tape tape;
        ag::Var y = ag::causal_attention(tape.input(x), tape.param(wqkv), tape.param(bqkv),
                                         tape.param(wo), tape.param(bo), 4);
        tape.backward(ag::mean_all(ag::square(y)));
        for (ag::Parameter* p : {&wqkv, &bqkv, &wo, &bo}) p->zero_grad();
    }
}

void BM_MessagePass(benchmark::State& state) {
    Rng rng(3);
    const int64_t n = 30 * 64;  // a batch of skeletons
    ag::Parameter ws("ws", nn::scaled_normal({4, 32}, rng));
    ag::Parameter wn("wn", nn::scaled_normal({4, 32}, rng));
    ag::Parameter b("b", Tensor::zeros({32}));
    const Tensor x = random_tensor({n, 4}, rng);
    std::vector<ag::Edge> edges;
    for (int64_t i = 0; i + 1 < n; ++i) {
        edges.push_back({static_cast<int32_t>(i), static_cast<int32_t>(i + 1)});
        edges.push_back({static_cast<int32_t>(i + 1), static_cast<int32_t>(i)});
    }
    for (auto _ : state) {
        ag::Tape tape(false);
        ag::Var y = ag::message_pass(tape.input(x), edges, tape.param(ws), tape.param(wn), tape.param(b));
        benchmark::DoNotOptimize(y.val().data());
    }
}

}  // namespace

BENCHMARK(BM_MatmulForward)->Arg(64)->Arg(256);
BENCHMARK(BM_AttentionForwardBackward)->Arg(8)->Arg(32)->Arg(64);
BENCHMARK(BM_MessagePass);

BENCHMARK_MAIN();
