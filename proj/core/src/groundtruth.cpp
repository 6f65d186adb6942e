#include "ppgnet/groundtruth.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ppgnet/dataio.hpp"
#include "ppgnet/dsp.hpp"

namespace ppgnet::gt {

PeakTrain::PeakTrain(std::vector<std::int64_t> p, double rate)
    : peaks(std::move(p)), rate_hz(rate) {
  if (rate_hz <= 0.0) throw std::invalid_argument("peak train rate must be > 0");
  const double min_gap = kRefractoryS * rate_hz;
  for (std::size_t i = 1; i < peaks.size(); ++i) {
    if (peaks[i] <= peaks[i - 1])
      throw std::invalid_argument("peak indices must be strictly increasing");
    if (static_cast<double>(peaks[i] - peaks[i - 1]) < min_gap)
      throw std::invalid_argument("peaks violate the 0.24 s refractory bound");
  }
  if (!peaks.empty() && peaks.front() < 0)
    throw std::invalid_argument("negative peak index");
}

PeakTrain detect_r_peaks(std::span<const double> ecg, double rate_hz) {
  if (rate_hz <= 0.0) throw std::invalid_argument("rate must be > 0");
  const auto n = static_cast<std::int64_t>(ecg.size());
  if (static_cast<double>(n) / rate_hz < 3.0)
    throw DataError("ECG shorter than 3 s, cannot detect R peaks");

  // QRS energy band.
  const auto bp_coeffs = dsp::design_bandpass(5.0, 15.0, 2, rate_hz);
  const std::vector<double> bp = dsp::filter_zero_phase(ecg, bp_coeffs);

  // Five-point derivative, squared.
  std::vector<double> sq(static_cast<std::size_t>(n), 0.0);
  for (std::int64_t i = 2; i < n - 2; ++i) {
    const double d = (2.0 * bp[i + 2] + bp[i + 1] - bp[i - 1] - 2.0 * bp[i - 2]) *
                     (rate_hz / 8.0);
    sq[static_cast<std::size_t>(i)] = d * d;
  }

  // Centered moving-window integration, 150 ms, zero-padded at the edges.
  const auto mwi_w = std::max<std::int64_t>(1, std::llround(0.150 * rate_hz));
  std::vector<double> mwi(static_cast<std::size_t>(n), 0.0);
  {
    std::vector<double> prefix(static_cast<std::size_t>(n) + 1, 0.0);
    for (std::int64_t i = 0; i < n; ++i)
      prefix[static_cast<std::size_t>(i) + 1] =
          prefix[static_cast<std::size_t>(i)] + sq[static_cast<std::size_t>(i)];
    const std::int64_t half = mwi_w / 2;
    for (std::int64_t i = 0; i < n; ++i) {
      const std::int64_t lo = std::clamp<std::int64_t>(i - half, 0, n);
      const std::int64_t hi = std::clamp<std::int64_t>(i - half + mwi_w, 0, n);
      mwi[static_cast<std::size_t>(i)] =
          (prefix[static_cast<std::size_t>(hi)] - prefix[static_cast<std::size_t>(lo)]) /
          static_cast<double>(mwi_w);
    }
  }

  // Threshold seeds from robust block statistics: every 2 s block holds a
  // beat above 30 BPM, and the median of block maxima shrugs off the edge
  // artifacts the reflection padding can leave on boundary beats.
  const auto block = std::max<std::int64_t>(1, std::llround(2.0 * rate_hz));
  std::vector<double> block_max;
  for (std::int64_t at = 0; at < n; at += block) {
    double m = 0.0;
    for (std::int64_t i = at; i < std::min(n, at + block); ++i)
      m = std::max(m, mwi[static_cast<std::size_t>(i)]);
    block_max.push_back(m);
  }
  auto median_of = [](std::vector<double> v) {
    std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
    return v[v.size() / 2];
  };
  double spk = median_of(block_max);
  double npk = std::min(median_of(mwi), 0.25 * spk);

  const auto refractory = static_cast<std::int64_t>(std::ceil(kRefractoryS * rate_hz));
  const auto refine_w = std::max<std::int64_t>(1, std::llround(0.100 * rate_hz));
  std::vector<std::int64_t> accepted;
  std::int64_t last_mwi_peak = -refractory - 1;
  for (std::int64_t i = 0; i < n; ++i) {
    const double v = mwi[static_cast<std::size_t>(i)];
    const bool local_max = (i == 0 || v > mwi[static_cast<std::size_t>(i - 1)]) &&
                           (i == n - 1 || v >= mwi[static_cast<std::size_t>(i + 1)]);
    if (!local_max || v <= 0.0) continue;
    const double threshold = npk + 0.25 * (spk - npk);
    if (v >= threshold && i - last_mwi_peak >= refractory) {
      spk = 0.125 * std::min(v, 4.0 * spk) + 0.875 * spk;  // clip outliers
      last_mwi_peak = i;
      // R location: maximum of the raw signal near the energy peak.
      std::int64_t best = std::max<std::int64_t>(0, i - refine_w);
      const std::int64_t hi = std::min(n - 1, i + refine_w);
      for (std::int64_t j = best + 1; j <= hi; ++j)
        if (ecg[static_cast<std::size_t>(j)] > ecg[static_cast<std::size_t>(best)]) best = j;
      if (accepted.empty() || best - accepted.back() >= refractory)
        accepted.push_back(best);
    } else if (v < threshold) {
      npk = 0.125 * v + 0.875 * npk;
    }
  }

  if (accepted.empty()) throw DataError("no R peaks found");

  // Reject detections that are not clearly above the background level;
  // white noise produces energy peaks barely above the MWI median.
  std::vector<double> sorted(mwi);
  std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
  const double median = sorted[sorted.size() / 2];
  double peak_mean = 0.0;
  for (std::int64_t p : accepted) {
    const auto j = static_cast<std::size_t>(std::clamp(p, std::int64_t{0}, n - 1));
    peak_mean += mwi[j];
  }
  peak_mean /= static_cast<double>(accepted.size());
  if (peak_mean < 8.0 * std::max(median, 1e-300))
    throw DataError("no reliable R peaks found (signal looks like noise)");

  return PeakTrain(std::move(accepted), rate_hz);
}

std::optional<double> mean_hr_bpm(const PeakTrain& peaks, double window_start_s,
                                  double window_len_s) {
  const double lo = window_start_s, hi = window_start_s + window_len_s;
  int in_window = 0;
  for (std::size_t i = 0; i < peaks.peaks.size(); ++i) {
    const double t = peaks.time_s(i);
    if (t >= lo && t < hi) ++in_window;
  }
  if (in_window < 2) return std::nullopt;

  double rr_sum = 0.0;
  int rr_count = 0;
  for (std::size_t i = 0; i + 1 < peaks.peaks.size(); ++i) {
    const double a = peaks.time_s(i), b = peaks.time_s(i + 1);
    const double mid = 0.5 * (a + b);
    if (mid >= lo && mid < hi) {
      rr_sum += b - a;
      ++rr_count;
    }
  }
  if (rr_count == 0) return std::nullopt;
  return 60.0 / (rr_sum / static_cast<double>(rr_count));
}

}  // namespace ppgnet::gt
