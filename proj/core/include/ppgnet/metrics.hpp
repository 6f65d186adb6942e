#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace ppgnet::metrics {

// Mean absolute error, (1/m) * sum |actual - predicted|.
double mae(const std::vector<double>& actual, const std::vector<double>& predicted);

// Population standard deviation (divide by m) of the absolute errors.
double sdae(const std::vector<double>& actual, const std::vector<double>& predicted);

// Pearson correlation coefficient; requires length >= 2 and nonzero
// variance on both sides.
double pcc(const std::vector<double>& actual, const std::vector<double>& predicted);

struct ReportRow {
  std::string subject_id;
  std::uint32_t window_index = 0;
  double actual_bpm = 0.0;
  double predicted_bpm = 0.0;
  int fold = 0;
};

struct Aggregate {
  std::string scope;  // "fold" or "pooled"
  int fold = -1;      // -1 for pooled
  double mae = 0.0;
  double sdae = 0.0;
  double pcc = 0.0;   // NaN when undefined (constant series)
  std::int64_t n_windows = 0;
};

// Per-window predictions plus per-fold and pooled aggregates. The pooled
// aggregates are always recomputable from the rows; loading re-derives
// them and rejects inconsistent files.
struct EvalReport {
  std::vector<ReportRow> rows;
  std::vector<Aggregate> aggregates;

  // metadata echoed into the aggregates file header
  std::string scheme;       // e.g. "loso", "kfold:5", "condition:3"
  int epochs = 0;           // training epochs behind this evaluation (0 = none)
  std::int64_t trainable_parameters = 0;
  std::int64_t total_parameters = 0;

  void recompute_aggregates();  // from rows, per fold plus pooled
};

EvalReport make_report(std::vector<ReportRow> rows, std::string scheme,
                       int epochs, std::int64_t trainable_params,
                       std::int64_t total_params);

// CSV schemas:
//   <base>_rows.csv: subject_id,window_index,actual_bpm,predicted_bpm
//   <base>_aggregates.csv: scope,fold,mae,sdae,pcc,n_windows
// plus '#' metadata comments in the aggregates file.
void write_report(const EvalReport& r, const std::filesystem::path& base_path);
EvalReport load_report(const std::filesystem::path& base_path);

}  // namespace ppgnet::metrics
