#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace ppgnet::gt {

// Detected R-peak locations. Strictly increasing; consecutive peaks at
// least 0.24 s apart (a 250 BPM refractory ceiling), enforced at
// construction.
struct PeakTrain {
  std::vector<std::int64_t> peaks;  // sample indices
  double rate_hz = 0.0;

  PeakTrain(std::vector<std::int64_t> p, double rate);
  double time_s(std::size_t i) const {
    return static_cast<double>(peaks[i]) / rate_hz;
  }
};

constexpr double kRefractoryS = 0.24;

// Simplified Pan-Tompkins chain: 5-15 Hz zero-phase bandpass,
// differentiation, squaring, 150 ms moving-window integration, adaptive
// threshold with the refractory rule, then peak refinement on the
// bandpassed signal. Throws DataError when the signal is shorter than 3 s
// or when no reliable peaks emerge (e.g. pure noise).
PeakTrain detect_r_peaks(std::span<const double> ecg, double rate_hz);

// Mean heart rate of a window: 60 / mean(RR intervals whose midpoint lies
// in [start, start + len)). Absent when fewer than two peaks fall inside
// the window.
std::optional<double> mean_hr_bpm(const PeakTrain& peaks, double window_start_s,
                                  double window_len_s = 8.0);

}  // namespace ppgnet::gt
