#include <benchmark/benchmark.h>

#include "softworld/sim.hpp"

using namespace softworld::sim;

namespace {

void BM_SimWaypoint(benchmark::State& state) {
    SimConfig cfg;
    ResetResult r = reset(Task::rolling, InitShape::ball, 1, cfg);
    const ToolSpec tool = ToolSpec::for_task(Task::rolling);
    ToolPose pose = r.tool_pose;
    int i = 0;
    for (auto _ : state) {
        const ToolPose wp = ToolPose::single({0.45 + 0.001 * (i++ % 100), 0.5, 0.12});
        const ToolPose wps[] = {wp};
        step(r.particles, tool, pose, wps, cfg);
    }
    state.SetItemsProcessed(state.iterations() * r.particles.count() * cfg.substeps);
}

void BM_Metrics(benchmark::State& state) {
    SimConfig cfg;
    ResetResult r = reset(Task::rolling, InitShape::ball, 2, cfg);
    for (auto _ : state) {
        const MetricReport m = compute_metrics(r.particles, r.target, cfg.weights, cfg);
        benchmark::DoNotOptimize(m.reward);
    }
}

void BM_SurfaceAndSkeleton(benchmark::State& state) {
    SimConfig cfg;
    ResetResult r = reset(Task::rolling, InitShape::ball, 3, cfg);
    for (auto _ : state) {
        const auto surf = surface_particles(r.particles, 30);
        benchmark::DoNotOptimize(surf.size());
    }
}

}  // namespace

BENCHMARK(BM_SimWaypoint);
BENCHMARK(BM_Metrics);
BENCHMARK(BM_SurfaceAndSkeleton);
