#include <benchmark/benchmark.h>

#include "ppgnet/dsp.hpp"
#include "ppgnet/groundtruth.hpp"
#include "ppgnet/model.hpp"
#include "ppgnet/prepare.hpp"
#include "ppgnet/synth.hpp"
#include "ppgnet/trainer.hpp"

using namespace ppgnet;

namespace {

WindowedDataset small_dataset() {
  const auto rec = synth::synth_recording(
      "s", 72.0, synth::HrProfile::ramp(60.0, 120.0, 72.0), 0.02, 0.05, 3);
  WindowedDataset ds;
  prepare_recording(rec, PrepareOptions{}, ds);
  ds.windows.resize(32);
  return ds;
}

void BM_BandpassDesign(benchmark::State& state) {
  for (auto _ : state)
    benchmark::DoNotOptimize(dsp::design_bandpass(0.5, 5.0, 2, 125.0));
}
BENCHMARK(BM_BandpassDesign);

void BM_ZeroPhaseFilterWindow(benchmark::State& state) {
  const auto fc = dsp::design_bandpass(0.5, 5.0, 2, 125.0);
  std::vector<double> window(1000);
  for (std::size_t i = 0; i < window.size(); ++i)
    window[i] = std::sin(0.1 * static_cast<double>(i));
  for (auto _ : state) benchmark::DoNotOptimize(dsp::filter_zero_phase(window, fc));
}
BENCHMARK(BM_ZeroPhaseFilterWindow)->Unit(benchmark::kMicrosecond);

void BM_DetectRPeaks(benchmark::State& state) {
  const auto rec = synth::synth_recording(
      "s", 300.0, synth::HrProfile::constant(75.0), 0.02, 0.0, 5);
  for (auto _ : state)
    benchmark::DoNotOptimize(gt::detect_r_peaks(rec.ecg, rec.ecg_rate_hz));
}
BENCHMARK(BM_DetectRPeaks)->Unit(benchmark::kMillisecond);

void BM_PrepareRecording(benchmark::State& state) {
  const auto rec = synth::synth_recording(
      "s", 300.0, synth::HrProfile::ramp(60.0, 120.0, 300.0), 0.05, 0.1, 7);
  for (auto _ : state) {
    WindowedDataset ds;
    benchmark::DoNotOptimize(prepare_recording(rec, PrepareOptions{}, ds));
  }
}
BENCHMARK(BM_PrepareRecording)->Unit(benchmark::kMillisecond);

void BM_ForwardBatch32(benchmark::State& state) {
  auto ds = small_dataset();
  PpgNetModel model = build_model(ModelConfig{});
  for (auto _ : state) benchmark::DoNotOptimize(predict_dataset(model, ds, 32));
}
BENCHMARK(BM_ForwardBatch32)->Unit(benchmark::kMillisecond);

void BM_TrainStepBatch32(benchmark::State& state) {
  auto ds = small_dataset();
  PpgNetModel model = build_model(ModelConfig{});
  trainer::TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 32;
  for (auto _ : state) benchmark::DoNotOptimize(trainer::train(model, ds, tc));
}
BENCHMARK(BM_TrainStepBatch32)->Unit(benchmark::kMillisecond);

}  // namespace
