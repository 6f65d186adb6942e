#include "ppgnet/prepare.hpp"

#include <cmath>

#include "ppgnet/dsp.hpp"
#include "ppgnet/groundtruth.hpp"

namespace ppgnet {

PrepareStats prepare_recording(const Recording& rec, const PrepareOptions& opt,
                               WindowedDataset& out) {
  rec.validate();
  PrepareStats stats;

  const std::vector<double> ppg =
      dsp::resample_linear(rec.ppg, rec.ppg_rate_hz, opt.target_rate_hz);
  const auto raw_windows =
      dsp::segment_windows(ppg, opt.target_rate_hz, opt.window_s, opt.shift_s);
  if (raw_windows.empty()) return stats;

  const gt::PeakTrain peaks = gt::detect_r_peaks(rec.ecg, rec.ecg_rate_hz);

  std::vector<std::vector<double>> kept;
  std::vector<std::uint32_t> kept_index;
  std::vector<double> kept_label;
  const auto band = dsp::design_bandpass(opt.band_low_hz, opt.band_high_hz,
                                         opt.filter_order, opt.target_rate_hz);
  for (std::size_t i = 0; i < raw_windows.size(); ++i) {
    const double start_s = static_cast<double>(i) * opt.shift_s;
    const auto bpm = gt::mean_hr_bpm(peaks, start_s, opt.window_s);
    if (!bpm || *bpm < kMinLabelBpm || *bpm > kMaxLabelBpm) {
      ++stats.windows_dropped;
      continue;
    }
    kept.push_back(dsp::filter_zero_phase(raw_windows[i], band));
    kept_index.push_back(static_cast<std::uint32_t>(i));
    kept_label.push_back(*bpm);
  }
  if (kept.empty()) return stats;

  if (opt.normalization == PrepareOptions::Normalization::SubjectPooled) {
    dsp::normalize_pooled(kept);
  } else {
    for (auto& w : kept) {
      std::vector<std::vector<double>> one{std::move(w)};
      dsp::normalize_pooled(one);
      w = std::move(one[0]);
    }
  }

  for (std::size_t i = 0; i < kept.size(); ++i) {
    Window w;
    w.subject_id = rec.subject_id;
    w.window_index = kept_index[i];
    w.label_bpm = kept_label[i];
    w.samples = std::move(kept[i]);
    out.add(std::move(w));
    ++stats.windows_kept;
  }
  return stats;
}

}  // namespace ppgnet
