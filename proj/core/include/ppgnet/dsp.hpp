#pragma once

#include <span>
#include <vector>

namespace ppgnet::dsp {

// One second-order section, a0 normalized to 1.
struct Biquad {
  double b0, b1, b2;
  double a1, a2;
};

struct FilterCoefficients {
  std::vector<Biquad> sections;
  double low_hz = 0.0;
  double high_hz = 0.0;
  int prototype_order = 0;  // lowpass prototype order; bandpass order is 2x
  double sample_rate_hz = 0.0;
};

// Butterworth bandpass via the analog prototype, lowpass-to-bandpass
// transform and prewarped bilinear transform, emitted as a cascade of
// second-order sections. Each section keeps one zero at z=1 and one at
// z=-1, so the cascade's DC and Nyquist gains are exactly zero.
FilterCoefficients design_bandpass(double low_hz, double high_hz,
                                   int prototype_order, double sample_rate_hz);

// |H(e^{j 2 pi f / fs})| of the cascade.
double magnitude_response(const FilterCoefficients& c, double freq_hz);

// Forward-backward filtering (zero net phase). The signal is extended on
// both ends by odd reflection of length 3 * (2 * prototype_order) and the
// filter starts from its step steady state, so constants map to the exact
// DC response. Requires signal length >= the extension length.
std::vector<double> filter_zero_phase(std::span<const double> signal,
                                      const FilterCoefficients& coeffs);

// Linear interpolation onto a uniform grid at to_hz. Output length is
// round(n * to_hz / from_hz); instants past the last input sample clamp to
// the final value.
std::vector<double> resample_linear(std::span<const double> signal,
                                    double from_hz, double to_hz);

// Sliding windows: floor((T - window_s) / shift_s) + 1 of them, window i
// starting at sample i * shift_s * rate_hz. Shorter-than-window signals
// yield an empty list.
std::vector<std::vector<double>> segment_windows(std::span<const double> signal,
                                                 double rate_hz,
                                                 double window_s = 8.0,
                                                 double shift_s = 2.0);

// Z-scores every sample of every window against the pooled mean and
// population standard deviation of all windows together. Throws on zero
// pooled variance.
void normalize_pooled(std::vector<std::vector<double>>& windows);

}  // namespace ppgnet::dsp
