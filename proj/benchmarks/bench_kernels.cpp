#include <benchmark/benchmark.h>

#include "ppgnet/autograd.hpp"
#include "ppgnet/rng.hpp"

using namespace ppgnet;
using ag::Tensor;

namespace {

Tensor random_tensor(ag::Shape shape, std::uint64_t seed, bool grad) {
  Rng rng(seed);
  auto n = ag::detail::shape_numel(shape);
  std::vector<double> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return Tensor::from(std::move(shape), std::move(v), grad);
}

void backward_scalarized(Tensor out) {
  // sum-to-scalar so backward() has a root
  std::vector<double> ones(static_cast<std::size_t>(out.size()), 1.0);
  auto coef = std::make_shared<std::vector<double>>(std::move(ones));
  Tensor loss = ag::make_op(
      {1}, {0.0}, {out}, [coef](ag::detail::Node& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += self.grad[0] * (*coef)[i];
      });
  loss.backward();
}

// Sequential-block-1 shape at a 32-window training batch.
void BM_Conv1dSeq1Forward(benchmark::State& state) {
  Tensor x = random_tensor({256, 16, 125}, 1, false);
  Tensor w = random_tensor({32, 16, 40}, 2, false);
  Tensor b = random_tensor({32}, 3, false);
  for (auto _ : state) benchmark::DoNotOptimize(ag::conv1d_same(x, w, b));
  state.SetItemsProcessed(state.iterations() * 2ll * 256 * 32 * 16 * 40 * 125);
}
BENCHMARK(BM_Conv1dSeq1Forward)->Unit(benchmark::kMillisecond);

void BM_Conv1dSeq1Train(benchmark::State& state) {
  Tensor x = random_tensor({256, 16, 125}, 1, true);
  Tensor w = random_tensor({32, 16, 40}, 2, true);
  Tensor b = random_tensor({32}, 3, true);
  for (auto _ : state) {
    x.zero_grad(); w.zero_grad(); b.zero_grad();
    backward_scalarized(ag::conv1d_same(x, w, b));
  }
  state.SetItemsProcessed(state.iterations() * 3ll * 2 * 256 * 32 * 16 * 40 * 125);
}
BENCHMARK(BM_Conv1dSeq1Train)->Unit(benchmark::kMillisecond);

// Kernel longer than the step: the wide-kernel GEMM path.
void BM_Conv1dSeq2Train(benchmark::State& state) {
  Tensor x = random_tensor({256, 32, 31}, 1, true);
  Tensor w = random_tensor({32, 32, 60}, 2, true);
  Tensor b = random_tensor({32}, 3, true);
  for (auto _ : state) {
    x.zero_grad(); w.zero_grad(); b.zero_grad();
    backward_scalarized(ag::conv1d_same(x, w, b));
  }
}
BENCHMARK(BM_Conv1dSeq2Train)->Unit(benchmark::kMillisecond);

void BM_LstmForward(benchmark::State& state) {
  const int T = 8, N = 32, D = 384, H = 80;
  Tensor x = random_tensor({T, N, D}, 1, false);
  std::vector<ag::LstmLayerParams> layers(2);
  layers[0] = {random_tensor({4 * H, D}, 2, false), random_tensor({4 * H, H}, 3, false),
               random_tensor({4 * H}, 4, false)};
  layers[1] = {random_tensor({4 * H, H}, 5, false), random_tensor({4 * H, H}, 6, false),
               random_tensor({4 * H}, 7, false)};
  for (auto _ : state) benchmark::DoNotOptimize(ag::lstm(x, layers, H));
}
BENCHMARK(BM_LstmForward)->Unit(benchmark::kMillisecond);

void BM_LstmTrain(benchmark::State& state) {
  const int T = 8, N = 32, D = 384, H = 80;
  Tensor x = random_tensor({T, N, D}, 1, true);
  std::vector<ag::LstmLayerParams> layers(2);
  layers[0] = {random_tensor({4 * H, D}, 2, true), random_tensor({4 * H, H}, 3, true),
               random_tensor({4 * H}, 4, true)};
  layers[1] = {random_tensor({4 * H, H}, 5, true), random_tensor({4 * H, H}, 6, true),
               random_tensor({4 * H}, 7, true)};
  for (auto _ : state) {
    x.zero_grad();
    for (auto& l : layers) { l.w_x.zero_grad(); l.w_h.zero_grad(); l.bias.zero_grad(); }
    backward_scalarized(ag::lstm(x, layers, H));
  }
}
BENCHMARK(BM_LstmTrain)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
