#include <benchmark/benchmark.h>

#include <map>
#include <random>

#include "unic/metrics.hpp"
#include "unic/synth.hpp"

using namespace unic;

namespace {

PointCloud random_cloud(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  std::vector<Point3> pts(n);
  for (auto& p : pts) p = {u(rng), u(rng), u(rng)};
  return PointCloud(std::move(pts));
}

const FrameSample& bench_frame(int points) {
  static std::map<int, Episode> cache;
  auto it = cache.find(points);
  if (it == cache.end()) {
    SceneConfig sc;
    sc.frames = 1;
    sc.points = points;
    it = cache.emplace(points, generate_episode(sc, 1)).first;
  }
  return it->second.frames.front();
}

void BM_PredictFrame(benchmark::State& state) {
  const auto patterns = removal_patterns();
  const auto& pattern = patterns[static_cast<std::size_t>(state.range(1))];
  ModelConfig mc;
  mc.points = static_cast<int>(state.range(0));
  const UnicModel model(mc);
  const auto& frame = bench_frame(mc.points);
  for (auto _ : state) benchmark::DoNotOptimize(predict_frame(frame, pattern.presence, model));
  state.SetLabel(pattern.label);
}
BENCHMARK(BM_PredictFrame)->ArgsProduct({{256, 1024}, {0, 1, 2, 3, 4}})->Unit(benchmark::kMillisecond);

void BM_Chamfer(benchmark::State& state) {
  const auto a = random_cloud(static_cast<std::size_t>(state.range(0)), 1);
  const auto b = random_cloud(static_cast<std::size_t>(state.range(0)), 2);
  for (auto _ : state) benchmark::DoNotOptimize(chamfer_distance(a, b));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Chamfer)->RangeMultiplier(4)->Range(16, 1024)->Complexity();

void BM_GenerateAffordance(benchmark::State& state) {
  const auto cloud = random_cloud(1024, 3);
  ContactAnnotation ann{random_cloud(static_cast<std::size_t>(state.range(0)), 4)};
  for (auto _ : state) benchmark::DoNotOptimize(generate_affordance(cloud, ann, {}));
}
BENCHMARK(BM_GenerateAffordance)->Arg(1)->Arg(10)->Arg(100);

}  // namespace

BENCHMARK_MAIN();
