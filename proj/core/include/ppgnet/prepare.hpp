#pragma once

#include "ppgnet/dataio.hpp"

namespace ppgnet {

// Signal conditioning pipeline: upsample the PPG to the target rate,
// segment into overlapping windows, label each window from the ECG R-peak
// train, zero-phase bandpass each window, then normalize. Windows without
// a defensible label (fewer than two in-window peaks, or a rate outside
// the physiologic band) are dropped and counted.
struct PrepareOptions {
  double band_low_hz = 0.5;
  double band_high_hz = 5.0;
  int filter_order = 2;
  double target_rate_hz = 125.0;
  double window_s = 8.0;
  double shift_s = 2.0;
  // Statistics source for the z-score: pooled over all of a subject's
  // windows (default) or each window on its own.
  enum class Normalization { SubjectPooled, PerWindow };
  Normalization normalization = Normalization::SubjectPooled;
};

struct PrepareStats {
  int windows_kept = 0;
  int windows_dropped = 0;
};

// Appends the recording's windows to `out`. Window indices are the time
// slots of the segmentation, so a dropped window leaves a gap rather than
// renumbering its successors.
PrepareStats prepare_recording(const Recording& rec, const PrepareOptions& options,
                               WindowedDataset& out);

}  // namespace ppgnet
