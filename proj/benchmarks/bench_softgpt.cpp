#include <benchmark/benchmark.h>

#include "softworld/softgpt.hpp"

using namespace softworld;

namespace {

void BM_PredictNext(benchmark::State& state) {
    const int64_t history_len = state.range(0);
    gpt::SoftGPTModel model(gpt::SoftGPTConfig{}, 1);
    Rng rng(4);
    std::vector<Tensor> history;
    for (int64_t i = 0; i < history_len; ++i) {
        Tensor e({32});
        for (int64_t j = 0; j < 32; ++j) e[j] = rng.normal();
        history.push_back(std::move(e));
    }
    for (auto _ : state) {
        const Tensor pred = model.predict_next(history);
        benchmark::DoNotOptimize(pred[0]);
    }
}

}  // namespace

BENCHMARK(BM_PredictNext)->Arg(1)->Arg(16)->Arg(64);
