#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ppgnet/dataio.hpp"

namespace ppgnet::synth {

// Piecewise-linear heart-rate profile; constant extrapolation outside the
// breakpoint span. Rates stay within [40, 180] BPM.
struct HrProfile {
  std::vector<std::pair<double, double>> points;  // (time_s, bpm)

  void validate() const;        // strictly increasing times, bpm in bounds
  double bpm_at(double t) const;
  // Beats elapsed by time t: integral of bpm/60 from 0 to t.
  double beats_at(double t) const;
  // Times of the k-th beat (phase crossings of whole beats), covering
  // [0, duration].
  std::vector<double> beat_times(double duration_s) const;

  static HrProfile constant(double bpm);
  static HrProfile ramp(double bpm_from, double bpm_to, double duration_s);
};

constexpr double kMinProfileBpm = 40.0;
constexpr double kMaxProfileBpm = 180.0;

// Paired PPG (50 Hz) / ECG (400 Hz) recording with a known rate profile.
// PPG: fundamental at the beat frequency plus a weaker second harmonic,
// slow baseline wander, optional band-limited (0.5-3 Hz) artifact bursts
// and white noise. ECG: 10 ms Gaussian pulses at the planted beat times.
Recording synth_recording(const std::string& subject_id, double duration_s,
                          const HrProfile& profile, double noise_sigma,
                          double artifact_level, std::uint64_t seed);

// Independent random-walk profiles per subject, derived seeds, modest
// noise and artifacts.
std::vector<Recording> synth_cohort(int n_subjects, double duration_s,
                                    std::uint64_t seed,
                                    double noise_sigma = 0.05,
                                    double artifact_level = 0.1);

}  // namespace ppgnet::synth
