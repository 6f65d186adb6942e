#include "ppgnet/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>

namespace ppgnet::dsp {

namespace {

using cd = std::complex<double>;
constexpr double kPi = std::numbers::pi;

// Analog Butterworth lowpass prototype poles (unit cutoff, gain 1).
std::vector<cd> butterworth_poles(int order) {
  std::vector<cd> p;
  p.reserve(static_cast<std::size_t>(order));
  for (int k = 0; k < order; ++k) {
    const double theta = kPi * (2.0 * k + order + 1.0) / (2.0 * order);
    p.emplace_back(std::cos(theta), std::sin(theta));
  }
  return p;
}

}  // namespace

FilterCoefficients design_bandpass(double low_hz, double high_hz,
                                   int prototype_order, double sample_rate_hz) {
  if (sample_rate_hz <= 0.0) throw std::invalid_argument("sample rate must be > 0");
  if (!(0.0 < low_hz && low_hz < high_hz && high_hz < sample_rate_hz / 2.0))
    throw std::invalid_argument("band edges must satisfy 0 < low < high < fs/2");
  if (prototype_order < 1) throw std::invalid_argument("prototype order must be >= 1");

  const double fs2 = 2.0 * sample_rate_hz;
  const double w1 = fs2 * std::tan(kPi * low_hz / sample_rate_hz);   // prewarped
  const double w2 = fs2 * std::tan(kPi * high_hz / sample_rate_hz);
  const double w0 = std::sqrt(w1 * w2);
  const double bw = w2 - w1;

  // Lowpass-to-bandpass: each prototype pole splits into a conjugate pair;
  // n zeros appear at s=0.
  std::vector<cd> poles;
  for (const cd& p : butterworth_poles(prototype_order)) {
    const cd t = 0.5 * bw * p;
    const cd r = std::sqrt(t * t - cd(w0 * w0, 0.0));
    poles.push_back(t + r);
    poles.push_back(t - r);
  }

  // Bilinear transform. Analog gain of the bandpass is bw^order (prototype
  // gain 1); zeros at s=0 map to z=1, the rest to z=-1.
  cd gain(std::pow(bw, prototype_order), 0.0);
  std::vector<cd> zpoles;
  for (const cd& p : poles) {
    zpoles.push_back((cd(fs2, 0.0) + p) / (cd(fs2, 0.0) - p));
    gain /= (cd(fs2, 0.0) - p);
  }
  // n zeros at z=1 contribute (fs2 - 0) each to the gain numerator.
  for (int k = 0; k < prototype_order; ++k) gain *= fs2;
  const double k_digital = gain.real();

  // Pair conjugate poles into sections; each section takes one zero at z=1
  // and one at z=-1, i.e. numerator (z-1)(z+1) = z^2 - 1.
  std::vector<cd> upper;
  for (const cd& p : zpoles)
    if (p.imag() > 0.0) upper.push_back(p);
  std::vector<cd> reals;
  for (const cd& p : zpoles)
    if (p.imag() == 0.0) reals.push_back(p);
  std::sort(upper.begin(), upper.end(),
            [](const cd& a, const cd& b) { return std::abs(a) < std::abs(b); });
  std::sort(reals.begin(), reals.end(),
            [](const cd& a, const cd& b) { return a.real() < b.real(); });

  FilterCoefficients fc;
  fc.low_hz = low_hz;
  fc.high_hz = high_hz;
  fc.prototype_order = prototype_order;
  fc.sample_rate_hz = sample_rate_hz;

  for (const cd& p : upper) {
    Biquad s{1.0, 0.0, -1.0, -2.0 * p.real(), std::norm(p)};
    fc.sections.push_back(s);
  }
  for (std::size_t i = 0; i + 1 < reals.size(); i += 2) {
    const double pa = reals[i].real(), pb = reals[i + 1].real();
    Biquad s{1.0, 0.0, -1.0, -(pa + pb), pa * pb};
    fc.sections.push_back(s);
  }
  if (fc.sections.size() != static_cast<std::size_t>(prototype_order))
    throw std::runtime_error("unexpected pole pairing in bandpass design");

  fc.sections.front().b0 *= k_digital;
  fc.sections.front().b1 *= k_digital;
  fc.sections.front().b2 *= k_digital;

  for (const Biquad& s : fc.sections)
    if (!(std::abs(s.a2) < 1.0 && std::abs(s.a1) < 1.0 + s.a2))
      throw std::runtime_error("designed section is not stable");
  return fc;
}

double magnitude_response(const FilterCoefficients& c, double freq_hz) {
  const double w = 2.0 * kPi * freq_hz / c.sample_rate_hz;
  const cd z1 = std::polar(1.0, -w);        // z^-1
  const cd z2 = z1 * z1;
  cd h(1.0, 0.0);
  for (const Biquad& s : c.sections)
    h *= (s.b0 + s.b1 * z1 + s.b2 * z2) / (1.0 + s.a1 * z1 + s.a2 * z2);
  return std::abs(h);
}

namespace {

// Steady-state (unit-step) initial conditions per section, transposed
// direct form II, scaled by the cumulative DC gain of preceding sections.
std::vector<std::array<double, 2>> step_steady_state(const FilterCoefficients& c) {
  std::vector<std::array<double, 2>> zi(c.sections.size());
  double cum_gain = 1.0;
  for (std::size_t i = 0; i < c.sections.size(); ++i) {
    const Biquad& s = c.sections[i];
    const double sum_a = 1.0 + s.a1 + s.a2;
    const double dc = sum_a != 0.0 ? (s.b0 + s.b1 + s.b2) / sum_a : 0.0;
    zi[i][0] = (dc - s.b0) * cum_gain;
    zi[i][1] = (s.b2 - s.a2 * dc) * cum_gain;
    cum_gain *= dc;
  }
  return zi;
}

void sos_filter_inplace(std::vector<double>& x, const FilterCoefficients& c,
                        std::vector<std::array<double, 2>> z) {
  for (std::size_t si = 0; si < c.sections.size(); ++si) {
    const Biquad& s = c.sections[si];
    double z1 = z[si][0], z2 = z[si][1];
    for (double& v : x) {
      const double in = v;
      const double out = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * out + z2;
      z2 = s.b2 * in - s.a2 * out;
      v = out;
    }
    z[si][0] = z1;
    z[si][1] = z2;
  }
}

}  // namespace

std::vector<double> filter_zero_phase(std::span<const double> signal,
                                      const FilterCoefficients& coeffs) {
  const std::size_t n = signal.size();
  const int min_len = 3 * (2 * coeffs.prototype_order);
  if (static_cast<int>(n) < min_len)
    throw std::invalid_argument("signal too short for zero-phase edge padding");
  // The edge transient is governed by the slowest passband pole, so the
  // extension covers 1.5 periods of the low band edge (the conventional
  // 3x-order pad leaves visible ringing for sub-hertz edges).
  const int pad = std::max(
      min_len, static_cast<int>(std::ceil(1.5 * coeffs.sample_rate_hz / coeffs.low_hz)));

  // Odd (point-reflected) extension about each endpoint. The bounce keeps
  // indices valid even when pad == n.
  auto reflect = [&](long i) {
    const long period = 2 * (static_cast<long>(n) - 1);
    long j = i % period;
    if (j < 0) j += period;
    return static_cast<std::size_t>(j < static_cast<long>(n) ? j : period - j);
  };
  std::vector<double> ext;
  ext.reserve(n + 2 * static_cast<std::size_t>(pad));
  for (int i = pad; i >= 1; --i) ext.push_back(2.0 * signal[0] - signal[reflect(i)]);
  ext.insert(ext.end(), signal.begin(), signal.end());
  for (int i = 1; i <= pad; ++i)
    ext.push_back(2.0 * signal[n - 1] - signal[reflect(static_cast<long>(n) - 1 - i)]);

  auto zi = step_steady_state(coeffs);
  auto scaled = [&](double x0) {
    auto z = zi;
    for (auto& s : z) { s[0] *= x0; s[1] *= x0; }
    return z;
  };

  sos_filter_inplace(ext, coeffs, scaled(ext.front()));
  std::reverse(ext.begin(), ext.end());
  sos_filter_inplace(ext, coeffs, scaled(ext.front()));
  std::reverse(ext.begin(), ext.end());

  return std::vector<double>(ext.begin() + pad, ext.begin() + pad + static_cast<long>(n));
}

std::vector<double> resample_linear(std::span<const double> signal,
                                    double from_hz, double to_hz) {
  if (from_hz <= 0.0 || to_hz <= 0.0) throw std::invalid_argument("rates must be > 0");
  if (signal.empty()) throw std::invalid_argument("resample of empty signal");
  const std::size_t n = signal.size();
  const auto m = static_cast<std::size_t>(
      std::llround(static_cast<double>(n) * to_hz / from_hz));
  std::vector<double> out(m);
  const double step = from_hz / to_hz;
  for (std::size_t i = 0; i < m; ++i) {
    const double pos = static_cast<double>(i) * step;
    const auto lo = static_cast<std::size_t>(pos);
    if (lo >= n - 1) {
      out[i] = signal[n - 1];
      continue;
    }
    const double frac = pos - static_cast<double>(lo);
    out[i] = signal[lo] + frac * (signal[lo + 1] - signal[lo]);
  }
  return out;
}

std::vector<std::vector<double>> segment_windows(std::span<const double> signal,
                                                 double rate_hz, double window_s,
                                                 double shift_s) {
  if (rate_hz <= 0.0 || window_s <= 0.0 || shift_s <= 0.0)
    throw std::invalid_argument("rate, window and shift must be > 0");
  const auto win = static_cast<std::size_t>(std::llround(window_s * rate_hz));
  const auto shift = static_cast<std::size_t>(std::llround(shift_s * rate_hz));
  std::vector<std::vector<double>> out;
  if (signal.size() < win) return out;
  const std::size_t count = (signal.size() - win) / shift + 1;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t start = i * shift;
    out.emplace_back(signal.begin() + static_cast<long>(start),
                     signal.begin() + static_cast<long>(start + win));
  }
  return out;
}

void normalize_pooled(std::vector<std::vector<double>>& windows) {
  if (windows.empty()) throw std::invalid_argument("no windows to normalize");
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& w : windows) {
    for (double v : w) sum += v;
    count += w.size();
  }
  if (count == 0) throw std::invalid_argument("no samples to normalize");
  const double mean = sum / static_cast<double>(count);
  double sq = 0.0;
  for (const auto& w : windows)
    for (double v : w) sq += (v - mean) * (v - mean);
  const double var = sq / static_cast<double>(count);  // population convention
  // Numerically-zero variance included: standardizing rounding noise would
  // only amplify garbage.
  if (var <= 1e-20)
    throw std::invalid_argument("zero variance signal cannot be normalized");
  const double inv_std = 1.0 / std::sqrt(var);
  for (auto& w : windows)
    for (double& v : w) v = (v - mean) * inv_std;
}

}  // namespace ppgnet::dsp
