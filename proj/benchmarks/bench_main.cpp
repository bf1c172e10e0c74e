#include <benchmark/benchmark.h>

#include <vector>

#include "patchage/ensemble.hpp"
#include "patchage/model.hpp"
#include "patchage/ops.hpp"
#include "patchage/patch_grid.hpp"
#include "patchage/phantom.hpp"
#include "patchage/random.hpp"
#include "patchage/tensor.hpp"

using namespace patchage;

namespace {

Tensor random_tensor(Rng& rng, Shape shape, bool requires_grad = false) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

// Args: channels, extent, algorithm (0 direct, 1 im2col).
void BM_Conv3dForward(benchmark::State& state) {
  Rng rng(1);
  const auto c = static_cast<std::size_t>(state.range(0)), e = static_cast<std::size_t>(state.range(1));
  const auto algo = state.range(2) == 0 ? ops::ConvAlgorithm::kDirect : ops::ConvAlgorithm::kIm2col;
  const Tensor x = random_tensor(rng, {2, c, e, e, e});
  const Tensor w = random_tensor(rng, {c, c, 3, 3, 3});
  const Tensor b = random_tensor(rng, {c});
  for (auto _ : state) benchmark::DoNotOptimize(ops::conv3d(x, w, b, 1, 1, algo));
  state.SetItemsProcessed(state.iterations() * 2 * static_cast<long>(c * c * 27 * e * e * e));
}
BENCHMARK(BM_Conv3dForward)->Args({8, 16, 0})->Args({8, 16, 1})->Args({16, 16, 0})->Args({16, 16, 1})
    ->Unit(benchmark::kMillisecond);

void BM_Conv3dForwardBackward(benchmark::State& state) {
  Rng rng(2);
  const auto c = static_cast<std::size_t>(state.range(0)), e = static_cast<std::size_t>(state.range(1));
  const Tensor x = random_tensor(rng, {2, c, e, e, e}, true);
  const Tensor w = random_tensor(rng, {c, c, 3, 3, 3}, true);
  const Tensor b = random_tensor(rng, {c}, true);
  for (auto _ : state) {
    Tape tape;
    TapeScope scope(tape);
    tape.backward(ops::sum(ops::conv3d(x, w, b, 1, 1)));
  }
}
BENCHMARK(BM_Conv3dForwardBackward)->Args({8, 16})->Args({16, 16})->Unit(benchmark::kMillisecond);

// One training-mode forward and backward of the default network on a batch of 32^3 patches.
void BM_ModelTrainStep(benchmark::State& state) {
  Rng rng(3);
  PatchModel model = build_model(ResNet3DConfig{}, 0);
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor x = random_tensor(rng, {n, 1, 32, 32, 32});
  const Tensor target = random_tensor(rng, {n, 1});
  for (auto _ : state) {
    Tape tape;
    TapeScope scope(tape);
    tape.backward(ops::mse_loss(forward(model, x, ops::NormMode::kTrain), target));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(n));
}
BENCHMARK(BM_ModelTrainStep)->Arg(1)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_ExtractAllPatches(benchmark::State& state) {
  const GridSpec grid = GridSpec::desk();
  const Volume v = center_crop(normalize_volume(generate_phantom(60.0, PhantomParams{}, 7)), grid.crop_dims);
  const auto refs = enumerate_patches(grid);
  for (auto _ : state) {
    for (const auto& r : refs) benchmark::DoNotOptimize(extract_patch(v, r, grid));
  }
}
BENCHMARK(BM_ExtractAllPatches)->Unit(benchmark::kMicrosecond);

void BM_GeneratePhantom(benchmark::State& state) {
  const PhantomParams params;
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(generate_phantom(60.0, params, seed++));
}
BENCHMARK(BM_GeneratePhantom)->Unit(benchmark::kMillisecond);

void BM_LinearFusionFit(benchmark::State& state) {
  Rng rng(4);
  const auto rows = static_cast<std::size_t>(state.range(0));
  PredictionTable t;
  for (long c = 0; c < 27; ++c) t.columns.push_back(c);
  for (std::size_t r = 0; r < rows; ++r) {
    t.subject_ids.push_back("s" + std::to_string(r));
    t.ages.push_back(rng.uniform(44, 73));
    for (int c = 0; c < 27; ++c) t.values.push_back(t.ages.back() + rng.normal());
  }
  const PatchSelection sel = select_patches(std::vector<double>(27, 1.0), 2.0);
  for (auto _ : state) benchmark::DoNotOptimize(fit_linear_fusion(t, sel));
}
BENCHMARK(BM_LinearFusionFit)->Arg(30)->Arg(1000);

}  // namespace

BENCHMARK_MAIN();
