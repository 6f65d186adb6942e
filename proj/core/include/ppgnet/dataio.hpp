#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace ppgnet {

// File- or data-level failure (missing file, parse error, checksum
// mismatch, contract violation in an input). The CLI maps this to its
// data-error exit code.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---- raw recordings ----

struct Recording {
  std::string subject_id;
  std::vector<double> ppg;
  double ppg_rate_hz = 0.0;
  std::vector<double> ecg;
  double ecg_rate_hz = 0.0;

  double ppg_duration_s() const { return static_cast<double>(ppg.size()) / ppg_rate_hz; }
  double ecg_duration_s() const { return static_cast<double>(ecg.size()) / ecg_rate_hz; }

  // Rates positive, streams non-empty, durations equal within one sample
  // period of the slower stream. Throws DataError otherwise.
  void validate() const;
};

// Manifest: line-oriented `key = value` text with the keys subject_id,
// ppg_rate_hz, ecg_rate_hz, ppg_file, ecg_file ('#' comments allowed,
// unknown keys rejected). Signal files are single-column CSVs, one real
// per line, '.' decimal separator. Paths resolve relative to the manifest.
Recording load_recording(const std::filesystem::path& manifest_path);

void write_recording(const Recording& rec, const std::filesystem::path& dir);

// Single-column CSV helpers.
std::vector<double> read_signal_csv(const std::filesystem::path& path);
void write_signal_csv(const std::filesystem::path& path,
                      const std::vector<double>& values);

// ---- windowed datasets ----

struct Window {
  std::string subject_id;
  std::uint32_t window_index = 0;  // time-slot index within the subject
  double label_bpm = 0.0;
  std::vector<double> samples;
};

struct WindowedDataset {
  double sample_rate_hz = 125.0;
  std::uint32_t samples_per_window = 1000;
  std::vector<Window> windows;

  // Label in [20, 250] BPM, exact sample count, (subject, index) unique.
  void validate() const;
  void add(Window w);  // validates the single window against the dataset
  std::vector<std::string> subject_ids() const;  // unique, sorted
};

constexpr double kMinLabelBpm = 20.0;
constexpr double kMaxLabelBpm = 250.0;

// Binary container, little-endian, 64-bit samples, FNV-1a checksum trailer.
// Round trips are bit-exact.
void save_windowed(const WindowedDataset& d, const std::filesystem::path& path);
WindowedDataset load_windowed(const std::filesystem::path& path);

// ---- weights container ----

struct NamedArray {
  std::string block;  // one of the model block names or "BatchNormStats"
  std::string name;
  std::vector<int> shape;
  std::vector<double> values;
};

struct WeightsFile {
  std::vector<NamedArray> arrays;
};

extern const std::vector<std::string> kWeightBlockNames;

// Same container conventions as the dataset file; block names are checked
// against kWeightBlockNames on both save and load.
void save_weights(const WeightsFile& w, const std::filesystem::path& path);
WeightsFile load_weights(const std::filesystem::path& path);

// ---- shared plumbing ----

// Writes through a temp file in the same directory, then renames over the
// target, so readers never observe partial output.
void write_atomic(const std::filesystem::path& path,
                  const std::function<void(std::ostream&)>& writer);

// FNV-1a 64-bit, used as the container integrity checksum.
std::uint64_t fnv1a64(const void* data, std::size_t len,
                      std::uint64_t seed = 0xcbf29ce484222325ull);

}  // namespace ppgnet
