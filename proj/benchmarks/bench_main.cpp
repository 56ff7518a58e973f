#include <random>

#include <benchmark/benchmark.h>

#include "wtrk/dyntrack.hpp"
#include "wtrk/refine.hpp"
#include "wtrk/synth.hpp"

using namespace wtrk;

namespace {

const SynthScene& scene() {
  static const SynthScene s = [] {
    SynthConfig c;
    c.objects.push_back(SynthObject{});
    return generate(c);
  }();
  return s;
}

StaticModel truth_model(const SynthScene& s) {
  const int N = s.num_tracks(), T = s.scene.num_frames();
  StaticModel m(N, T);
  for (int i = 0; i < N; ++i) {
    m.anchors[i] = s.gt_world[static_cast<std::size_t>(i) * T];
    for (int t = 0; t < T; ++t) m.offset(i, t) = s.gt_world[static_cast<std::size_t>(i) * T + t] - m.anchors[i];
  }
  return m;
}

void BM_StaticObjective(benchmark::State& state) {
  const SynthScene& s = scene();
  const auto& sc = s.scene;
  const StaticModel m = truth_model(s);
  StaticGradient g;
  for (auto _ : state) {
    g.reset(m, s.gt_poses.size());
    benchmark::DoNotOptimize(static_objective(m, s.gt_poses, sc.tracks, sc.track_depth, sc.camera,
                                              sc.image_diagonal(), sc.config, &g));
  }
  state.SetItemsProcessed(state.iterations() * s.num_tracks() * sc.num_frames());
}
BENCHMARK(BM_StaticObjective);

void BM_BuildKnn(benchmark::State& state) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<Vec3> pts(static_cast<std::size_t>(state.range(0)));
  for (auto& p : pts) p = Vec3(g(rng), g(rng), g(rng));
  for (auto _ : state) benchmark::DoNotOptimize(build_knn(pts, 4));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_BuildKnn)->RangeMultiplier(4)->Range(64, 4096)->Complexity();

void BM_PropagateDepth(benchmark::State& state) {
  const int H = 72, W = 96;
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<float> d(1.0f, 6.0f);
  std::uniform_real_distribution<double> x(0.0, W - 1), y(0.0, H - 1);
  std::vector<float> raw(H * W);
  for (auto& v : raw) v = d(rng);
  std::vector<DepthSample> samples(static_cast<std::size_t>(state.range(0)));
  for (auto& s : samples) s = DepthSample{Vec2(x(rng), y(rng)), 1.5 * d(rng)};
  const CameraModel& cam = scene().scene.camera;
  for (auto _ : state) benchmark::DoNotOptimize(propagate_depth(raw, H, W, samples, cam, 4));
  state.SetItemsProcessed(state.iterations() * H * W);
}
BENCHMARK(BM_PropagateDepth)->Arg(100)->Arg(1000);

}  // namespace

BENCHMARK_MAIN();
