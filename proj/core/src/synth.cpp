#include "ppgnet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "ppgnet/dsp.hpp"
#include "ppgnet/rng.hpp"

namespace ppgnet::synth {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kPpgRateHz = 50.0;
constexpr double kEcgRateHz = 400.0;
constexpr double kEcgPulseSigmaS = 0.010;
}  // namespace

void HrProfile::validate() const {
  if (points.empty()) throw std::invalid_argument("profile needs at least one breakpoint");
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (i > 0 && points[i].first <= points[i - 1].first)
      throw std::invalid_argument("profile breakpoint times must be strictly increasing");
    if (points[i].second < kMinProfileBpm || points[i].second > kMaxProfileBpm)
      throw std::invalid_argument("profile rate outside [40, 180] BPM");
  }
}

double HrProfile::bpm_at(double t) const {
  if (t <= points.front().first) return points.front().second;
  if (t >= points.back().first) return points.back().second;
  for (std::size_t i = 1; i < points.size(); ++i) {
    if (t <= points[i].first) {
      const auto& [t0, b0] = points[i - 1];
      const auto& [t1, b1] = points[i];
      return b0 + (b1 - b0) * (t - t0) / (t1 - t0);
    }
  }
  return points.back().second;
}

double HrProfile::beats_at(double t) const {
  // Piecewise-linear rate integrates segment by segment in closed form.
  double beats = 0.0;
  double prev_t = 0.0;
  auto add_span = [&](double from, double to, double f_from, double f_to) {
    if (to <= from) return;
    beats += 0.5 * (f_from + f_to) / 60.0 * (to - from);
  };
  const double first_t = points.front().first;
  if (t <= first_t) {
    return points.front().second / 60.0 * t;
  }
  add_span(0.0, first_t, points.front().second, points.front().second);
  prev_t = first_t;
  for (std::size_t i = 1; i < points.size() && prev_t < t; ++i) {
    const double seg_end = std::min(t, points[i].first);
    add_span(prev_t, seg_end, bpm_at(prev_t), bpm_at(seg_end));
    prev_t = std::max(prev_t, seg_end);
  }
  if (t > prev_t) add_span(prev_t, t, points.back().second, points.back().second);
  return beats;
}

std::vector<double> HrProfile::beat_times(double duration_s) const {
  validate();
  std::vector<double> out;
  // Beats land in [0, duration): the sampled span is half-open, so a
  // crossing at exactly the duration belongs to the next stream.
  const double total = beats_at(duration_s);
  out.reserve(static_cast<std::size_t>(total) + 2);
  // Invert beats(t) = k by bisection; beats() is strictly increasing
  // because the rate is bounded below by 40 BPM.
  double lo_t = 0.0;
  for (double k = 0.0; k < total; k += 1.0) {
    double lo = lo_t, hi = duration_s;
    if (beats_at(lo) > k) lo = 0.0;
    for (int it = 0; it < 64; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (beats_at(mid) < k) lo = mid; else hi = mid;
    }
    out.push_back(0.5 * (lo + hi));
    lo_t = out.back();
  }
  return out;
}

HrProfile HrProfile::constant(double bpm) { return HrProfile{{{0.0, bpm}}}; }

HrProfile HrProfile::ramp(double bpm_from, double bpm_to, double duration_s) {
  return HrProfile{{{0.0, bpm_from}, {duration_s, bpm_to}}};
}

Recording synth_recording(const std::string& subject_id, double duration_s,
                          const HrProfile& profile, double noise_sigma,
                          double artifact_level, std::uint64_t seed) {
  profile.validate();
  if (duration_s <= 8.0) throw std::invalid_argument("duration must exceed 8 s");
  if (noise_sigma < 0.0 || artifact_level < 0.0)
    throw std::invalid_argument("noise and artifact levels must be >= 0");
  Rng rng(seed);

  Recording rec;
  rec.subject_id = subject_id;
  rec.ppg_rate_hz = kPpgRateHz;
  rec.ecg_rate_hz = kEcgRateHz;

  const auto n_ppg = static_cast<std::size_t>(std::llround(duration_s * kPpgRateHz));
  const auto n_ecg = static_cast<std::size_t>(std::llround(duration_s * kEcgRateHz));

  // PPG: phase-exact fundamental and second harmonic, plus baseline wander.
  rec.ppg.resize(n_ppg);
  for (std::size_t i = 0; i < n_ppg; ++i) {
    const double t = static_cast<double>(i) / kPpgRateHz;
    const double phase = kTwoPi * profile.beats_at(t);
    rec.ppg[i] = std::sin(phase) + 0.3 * std::sin(2.0 * phase + 0.5) +
                 0.2 * std::sin(kTwoPi * 0.1 * t);
  }

  if (artifact_level > 0.0) {
    // Band-limited bursts: unit-RMS filtered white noise gated by
    // raised-cosine windows at random onsets (about one per 20 s).
    std::vector<double> white(n_ppg);
    for (auto& v : white) v = rng.normal();
    const auto band = dsp::design_bandpass(0.5, 3.0, 2, kPpgRateHz);
    std::vector<double> colored = dsp::filter_zero_phase(white, band);
    double rms = 0.0;
    for (double v : colored) rms += v * v;
    rms = std::sqrt(rms / static_cast<double>(colored.size()));
    if (rms > 0.0)
      for (double& v : colored) v /= rms;

    std::vector<double> envelope(n_ppg, 0.0);
    const int n_bursts = std::max(1, static_cast<int>(duration_s / 20.0));
    for (int b = 0; b < n_bursts; ++b) {
      const double len = rng.uniform(2.0, 5.0);
      const double start = rng.uniform(0.0, std::max(0.0, duration_s - len));
      const auto i0 = static_cast<std::size_t>(start * kPpgRateHz);
      const auto i1 = std::min(n_ppg, static_cast<std::size_t>((start + len) * kPpgRateHz));
      for (std::size_t i = i0; i < i1; ++i) {
        const double u = static_cast<double>(i - i0) / static_cast<double>(i1 - i0);
        envelope[i] = std::max(envelope[i], 0.5 * (1.0 - std::cos(kTwoPi * u)));
      }
    }
    for (std::size_t i = 0; i < n_ppg; ++i)
      rec.ppg[i] += artifact_level * envelope[i] * colored[i];
  }

  if (noise_sigma > 0.0)
    for (auto& v : rec.ppg) v += noise_sigma * rng.normal();

  // ECG: Gaussian pulse per planted beat.
  rec.ecg.assign(n_ecg, 0.0);
  const double support = 5.0 * kEcgPulseSigmaS;
  for (double tau : profile.beat_times(duration_s)) {
    const auto i0 = static_cast<std::int64_t>(std::floor((tau - support) * kEcgRateHz));
    const auto i1 = static_cast<std::int64_t>(std::ceil((tau + support) * kEcgRateHz));
    for (std::int64_t i = std::max<std::int64_t>(0, i0);
         i <= std::min<std::int64_t>(static_cast<std::int64_t>(n_ecg) - 1, i1); ++i) {
      const double dt = static_cast<double>(i) / kEcgRateHz - tau;
      rec.ecg[static_cast<std::size_t>(i)] +=
          std::exp(-0.5 * dt * dt / (kEcgPulseSigmaS * kEcgPulseSigmaS));
    }
  }

  rec.validate();
  return rec;
}

std::vector<Recording> synth_cohort(int n_subjects, double duration_s,
                                    std::uint64_t seed, double noise_sigma,
                                    double artifact_level) {
  if (n_subjects < 1) throw std::invalid_argument("cohort needs at least one subject");
  std::vector<Recording> out;
  out.reserve(static_cast<std::size_t>(n_subjects));
  for (int s = 0; s < n_subjects; ++s) {
    const std::uint64_t sub_seed = Rng::derive(seed, static_cast<std::uint64_t>(s));
    Rng rng(sub_seed);
    HrProfile profile;
    double bpm = rng.uniform(55.0, 110.0);
    for (double t = 0.0; t <= duration_s; t += 20.0) {
      profile.points.emplace_back(t, bpm);
      bpm = std::clamp(bpm + 8.0 * rng.normal(), 45.0, 170.0);
    }
    char name[16];
    std::snprintf(name, sizeof name, "s%02d", s + 1);
    out.push_back(synth_recording(name, duration_s, profile, noise_sigma,
                                  artifact_level, Rng::derive(sub_seed, 1)));
  }
  return out;
}

}  // namespace ppgnet::synth
