#include <cmath>
#include <vector>

#include "doctest.h"
#include "ppgnet/dataio.hpp"
#include "ppgnet/prepare.hpp"
#include "ppgnet/synth.hpp"

using namespace ppgnet;

namespace {

// 60 s recording whose ECG carries beats only in the first 30 s; every
// window past the beat train has no defensible label.
Recording half_labeled_recording() {
  Recording rec;
  rec.subject_id = "gap";
  rec.ppg_rate_hz = 50.0;
  rec.ecg_rate_hz = 400.0;
  rec.ppg.resize(60 * 50);
  for (std::size_t i = 0; i < rec.ppg.size(); ++i)
    rec.ppg[i] = std::sin(2.0 * 3.14159265358979 * 1.2 * static_cast<double>(i) / 50.0);
  rec.ecg.assign(60 * 400, 0.0);
  const double sigma = 0.01;
  for (int beat = 0; beat < 30; ++beat)
    for (int j = -20; j <= 20; ++j) {
      const int idx = beat * 400 + j;
      if (idx < 0 || idx >= static_cast<int>(rec.ecg.size())) continue;
      const double dt = static_cast<double>(j) / 400.0;
      rec.ecg[static_cast<std::size_t>(idx)] += std::exp(-0.5 * dt * dt / (sigma * sigma));
    }
  return rec;
}

}  // namespace

TEST_CASE("windows without enough in-window peaks are dropped and counted") {
  const Recording rec = half_labeled_recording();
  WindowedDataset out;
  const auto stats = prepare_recording(rec, PrepareOptions{}, out);
  // 27 slots; windows starting at 30 s and later see no peaks. The last
  // beat sits at 29 s, so slot 14 ([28, 36)) still holds two peaks.
  CHECK(stats.windows_kept == 15);
  CHECK(stats.windows_dropped == 12);
  CHECK(out.windows.size() == 15);
  // kept windows keep their original time-slot indices
  for (std::size_t i = 0; i < out.windows.size(); ++i)
    CHECK(out.windows[i].window_index == i);
}

TEST_CASE("per-window normalization standardizes each window by itself") {
  const auto rec = synth::synth_recording(
      "s", 40.0, synth::HrProfile::constant(80.0), 0.01, 0.0, 9);
  PrepareOptions opt;
  opt.normalization = PrepareOptions::Normalization::PerWindow;
  WindowedDataset out;
  prepare_recording(rec, opt, out);
  REQUIRE(!out.windows.empty());
  for (const auto& w : out.windows) {
    double mean = 0.0;
    for (double v : w.samples) mean += v;
    mean /= static_cast<double>(w.samples.size());
    double var = 0.0;
    for (double v : w.samples) var += (v - mean) * (v - mean);
    var /= static_cast<double>(w.samples.size());
    CHECK(std::abs(mean) < 1e-9);
    CHECK(std::abs(std::sqrt(var) - 1.0) < 1e-9);
  }
}

TEST_CASE("a constant PPG stream cannot be normalized") {
  Recording rec;
  rec.subject_id = "flat";
  rec.ppg_rate_hz = 50.0;
  rec.ecg_rate_hz = 400.0;
  rec.ppg.assign(20 * 50, 1.0);
  rec.ecg.assign(20 * 400, 0.0);
  for (int beat = 0; beat < 20; ++beat)
    rec.ecg[static_cast<std::size_t>(beat * 400)] = 1.0;
  WindowedDataset out;
  CHECK_THROWS_AS(prepare_recording(rec, PrepareOptions{}, out), std::invalid_argument);
}
