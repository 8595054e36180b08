#include <benchmark/benchmark.h>

#include <random>

#include "bcg/autodiff.hpp"
#include "bcg/model.hpp"
#include "bcg/synthetic.hpp"
#include "bcg/unmix.hpp"

using namespace bcg;

namespace {

ad::Tensor random_tensor(const ad::Shape& shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  ad::Tensor t(shape);
  for (double& v : t.values()) v = u(rng);
  return t;
}

void BM_Conv3dForward(benchmark::State& state) {
  const int ci = static_cast<int>(state.range(0)), co = static_cast<int>(state.range(1));
  const ad::Tensor x = random_tensor({7, 7, 30, ci}, 1);
  const ad::Tensor w = random_tensor({3, 3, 3, ci, co}, 2);
  const ad::Tensor b = random_tensor({co}, 3);
  for (auto _ : state) {
    ad::Graph g;
    benchmark::DoNotOptimize(ad::conv3d(g.constant(x), g.constant(w), g.constant(b)).value()[0]);
  }
}
BENCHMARK(BM_Conv3dForward)->Args({1, 4})->Args({4, 8});

void BM_Conv3dBackward(benchmark::State& state) {
  const ad::Tensor x = random_tensor({7, 7, 30, 4}, 1);
  const ad::Tensor w = random_tensor({3, 3, 3, 4, 8}, 2);
  const ad::Tensor b = random_tensor({8}, 3);
  for (auto _ : state) {
    ad::Graph g;
    const ad::Var wv = g.leaf(w);
    const ad::Var out = ad::sum(ad::conv3d(g.leaf(x), wv, g.leaf(b)));
    g.backward(out);
    benchmark::DoNotOptimize(g.grad(wv)[0]);
  }
}
BENCHMARK(BM_Conv3dBackward);

void BM_FclsCube(benchmark::State& state) {
  SynthConfig c;
  c.snr_db = 30.0;
  c.seed = 1;
  const SyntheticScene s = gen_synthetic_scene(c);
  for (auto _ : state) benchmark::DoNotOptimize(fcls_cube(s.endmembers_true, s.cube_t1).flagged.size());
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(s.cube_t1.pixel_count()));
}
BENCHMARK(BM_FclsCube)->Unit(benchmark::kMillisecond);

void BM_UuForward(benchmark::State& state) {
  const ChannelConfig ch{static_cast<int>(state.range(0)), static_cast<int>(state.range(1)),
                         static_cast<int>(state.range(1)), 32, 32};
  const BcgModel model = make_model(30, 4, 7, ch, 1);
  SynthConfig c;
  c.seed = 2;
  const SyntheticScene s = gen_synthetic_scene(c);
  const Patch px = extract_patch(s.cube_t1, 10, 10, 7), py = extract_patch(s.cube_t2, 10, 10, 7);
  for (auto _ : state) benchmark::DoNotOptimize(uu_forward(model.uu, px, py).s1[0]);
}
BENCHMARK(BM_UuForward)->Args({2, 4})->Args({4, 8});

}  // namespace

BENCHMARK_MAIN();
