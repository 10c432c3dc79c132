#include <benchmark/benchmark.h>

#include "cosmix/mix.hpp"
#include "cosmix/segmenter.hpp"
#include "cosmix/toybench.hpp"

namespace {

using namespace cosmix;

const LabeledScan& source_scan() {
    static const LabeledScan scan = toybench::generate_scene(toybench::default_source_spec(1));
    return scan;
}

void BM_GenerateScene(benchmark::State& state) {
    auto spec = toybench::default_source_spec(1);
    spec.density = static_cast<double>(state.range(0)) / 100.0;
    Rng rng(1);
    for (auto _ : state) benchmark::DoNotOptimize(toybench::generate_scene(spec, rng));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(spec.point_budget()));
}
BENCHMARK(BM_GenerateScene)->Arg(50)->Arg(100)->Arg(200);

void BM_Voxelize(benchmark::State& state) {
    const auto& scan = source_scan();
    const double size = static_cast<double>(state.range(0)) / 10.0;
    for (auto _ : state) benchmark::DoNotOptimize(voxelize(scan.cloud, size));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(scan.cloud.size()));
}
BENCHMARK(BM_Voxelize)->Arg(5)->Arg(10)->Arg(40);

void BM_ComposeMix(benchmark::State& state) {
    const auto& src = source_scan();
    const auto target = toybench::generate_scene(toybench::default_target_spec(2));
    const std::vector<ClassId> picked{3, 4};
    const auto patches = extract_patches(src.cloud, src.labels, picked);
    const MixConfig cfg;
    Rng rng(3);
    for (auto _ : state) benchmark::DoNotOptimize(compose_mix(target.cloud, target.labels, patches, cfg, rng));
}
BENCHMARK(BM_ComposeMix);

void BM_ToyGrad(benchmark::State& state) {
    const auto& scan = source_scan();
    const auto classes = toybench::classes();
    const auto params = ToySegmenter::initial_params(classes.size(), 4);
    const auto cfg = toybench::segmenter_config();
    for (auto _ : state) benchmark::DoNotOptimize(toy_grad(scan.cloud, scan.labels, params, classes, cfg));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(scan.cloud.size()));
}
BENCHMARK(BM_ToyGrad);

}  // namespace

BENCHMARK_MAIN();
