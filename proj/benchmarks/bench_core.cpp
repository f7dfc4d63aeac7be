#include <benchmark/benchmark.h>

#include <random>

#include "vesseltopo/distance.hpp"
#include "vesseltopo/filters.hpp"
#include "vesseltopo/msfm.hpp"
#include "vesseltopo/synth.hpp"
#include "vesseltopo/topology.hpp"

using namespace vtopo;

namespace {

VesselMask ball_mask(int n) {
    VesselMask m(Dims{n, n, n});
    const Vec3 c = Vec3::Constant((n - 1) / 2.0);
    for (std::size_t i = 0; i < m.size(); ++i) {
        m[i] = (m.grid().to_world(m.grid().voxel(i)) - c).norm() < 0.4 * n ? 1 : 0;
    }
    return m;
}

const SynthCase& synthetic_case() {
    static const SynthCase c = [] {
        SynthSpec s;
        s.seed = 1;
        return generate(s);
    }();
    return c;
}

void BM_DistanceTransform(benchmark::State& state) {
    const auto m = ball_mask(static_cast<int>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(distance_transform(m));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(m.size()));
}
BENCHMARK(BM_DistanceTransform)->Arg(32)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_Eikonal(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const SpeedMap f(Dims{n, n, n}, Vec3(1, 1, 1), Vec3::Zero(), 1.0f);
    EikonalOptions opt;
    opt.order = state.range(1) ? EikonalOrder::MultiStencilSecond : EikonalOrder::First;
    opt.source_radius = 3.0;
    for (auto _ : state) benchmark::DoNotOptimize(solve_eikonal(f, {{n / 2, n / 2, n / 2}}, opt));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.size()));
}
BENCHMARK(BM_Eikonal)->Args({32, 0})->Args({32, 1})->Args({64, 1})->Unit(benchmark::kMillisecond);

void BM_SampleParticles(benchmark::State& state) {
    const auto& c = synthetic_case();
    const auto dt = distance_transform(c.mask);
    const auto enhanced = to_float(c.mask);
    for (auto _ : state) benchmark::DoNotOptimize(sample_particles(c.mask, dt, enhanced));
}
BENCHMARK(BM_SampleParticles)->Unit(benchmark::kMillisecond);

void BM_ExtractTopology(benchmark::State& state) {
    const auto& c = synthetic_case();
    for (auto _ : state) {
        benchmark::DoNotOptimize(extract_topology(c.mask, nullptr, {c.artery_root, c.vein_root}));
    }
}
BENCHMARK(BM_ExtractTopology)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
