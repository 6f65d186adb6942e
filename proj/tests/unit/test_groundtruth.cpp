#include <cmath>
#include <vector>

#include "doctest.h"
#include "ppgnet/dataio.hpp"
#include "ppgnet/groundtruth.hpp"
#include "ppgnet/rng.hpp"
#include "ppgnet/synth.hpp"

using namespace ppgnet;

TEST_CASE("peak train invariants are enforced") {
  CHECK_NOTHROW(gt::PeakTrain({0, 100, 200}, 400.0));
  CHECK_THROWS_AS(gt::PeakTrain({100, 100}, 400.0), std::invalid_argument);
  CHECK_THROWS_AS(gt::PeakTrain({0, 50}, 400.0), std::invalid_argument);  // 0.125 s gap
}

TEST_CASE("impulse train at 1 Hz is located within two samples") {
  const double fs = 400.0;
  std::vector<double> ecg(4000, 0.0);
  for (int k = 0; k < 10; ++k) ecg[static_cast<std::size_t>(k * 400)] = 1.0;
  const auto peaks = gt::detect_r_peaks(ecg, fs);
  REQUIRE(peaks.peaks.size() == 10);
  for (int k = 0; k < 10; ++k)
    CHECK(std::abs(peaks.peaks[static_cast<std::size_t>(k)] - k * 400) <= 2);
}

TEST_CASE("synthetic ECG at 72 BPM recovers the planted RR interval") {
  const auto rec = synth::synth_recording("s", 30.0, synth::HrProfile::constant(72.0),
                                          0.0, 0.0, 5);
  const auto peaks = gt::detect_r_peaks(rec.ecg, rec.ecg_rate_hz);
  REQUIRE(peaks.peaks.size() >= 30);
  const double want_rr = 60.0 / 72.0;
  for (std::size_t i = 1; i < peaks.peaks.size(); ++i) {
    const double rr = peaks.time_s(i) - peaks.time_s(i - 1);
    CHECK(std::abs(rr - want_rr) <= 1.0 / rec.ecg_rate_hz);
  }
}

TEST_CASE("white noise yields an error, never dense spurious peaks") {
  Rng rng(99);
  std::vector<double> noise(4000);
  for (auto& v : noise) v = rng.normal();
  CHECK_THROWS_AS(gt::detect_r_peaks(noise, 400.0), DataError);
}

TEST_CASE("too-short signals are rejected") {
  std::vector<double> ecg(800, 0.0);  // 2 s at 400 Hz
  CHECK_THROWS_AS(gt::detect_r_peaks(ecg, 400.0), DataError);
}

TEST_CASE("detection is invariant to positive amplitude scaling") {
  const auto rec = synth::synth_recording("s", 40.0, synth::HrProfile::constant(90.0),
                                          0.01, 0.0, 17);
  const auto base = gt::detect_r_peaks(rec.ecg, rec.ecg_rate_hz);
  for (double scale : {0.25, 4.0, 1000.0}) {
    std::vector<double> scaled(rec.ecg.size());
    for (std::size_t i = 0; i < scaled.size(); ++i) scaled[i] = scale * rec.ecg[i];
    const auto got = gt::detect_r_peaks(scaled, rec.ecg_rate_hz);
    CHECK(got.peaks == base.peaks);
  }
}

TEST_CASE("mean heart rate over a window") {
  // peaks every 0.5 s at 400 Hz
  std::vector<std::int64_t> half_second;
  for (int k = 0; k < 20; ++k) half_second.push_back(k * 200);
  const gt::PeakTrain fast(half_second, 400.0);
  CHECK(*gt::mean_hr_bpm(fast, 0.0, 8.0) == doctest::Approx(120.0).epsilon(1e-12));

  std::vector<std::int64_t> one_second;
  for (int k = 0; k < 10; ++k) one_second.push_back(k * 400);
  const gt::PeakTrain slow(one_second, 400.0);
  CHECK(*gt::mean_hr_bpm(slow, 0.0, 8.0) == doctest::Approx(60.0).epsilon(1e-12));

  // in-window RR intervals {0.5 s, 1.0 s} -> 60 / 0.75 = 80 BPM
  const gt::PeakTrain mixed({0, 200, 600}, 400.0);
  CHECK(*gt::mean_hr_bpm(mixed, 0.0, 8.0) == doctest::Approx(80.0).epsilon(1e-12));

  // fewer than two in-window peaks -> absent
  CHECK(!gt::mean_hr_bpm(slow, 8.5, 8.0).has_value());
  const gt::PeakTrain lone({400}, 400.0);
  CHECK(!gt::mean_hr_bpm(lone, 0.0, 8.0).has_value());
}

TEST_CASE("piecewise-constant profiles label interior windows within 1 BPM") {
  synth::HrProfile profile;
  profile.points = {{0.0, 70.0}, {59.0, 70.0}, {61.0, 110.0}, {120.0, 110.0}};
  const auto rec = synth::synth_recording("s", 120.0, profile, 0.0, 0.0, 3);
  const auto peaks = gt::detect_r_peaks(rec.ecg, rec.ecg_rate_hz);
  // windows fully inside the first segment
  for (double start : {0.0, 10.0, 20.0, 40.0}) {
    const auto bpm = gt::mean_hr_bpm(peaks, start, 8.0);
    REQUIRE(bpm.has_value());
    CHECK(std::abs(*bpm - 70.0) < 1.0);
  }
  // windows fully inside the second segment
  for (double start : {70.0, 90.0, 110.0}) {
    const auto bpm = gt::mean_hr_bpm(peaks, start, 8.0);
    REQUIRE(bpm.has_value());
    CHECK(std::abs(*bpm - 110.0) < 1.0);
  }
}
