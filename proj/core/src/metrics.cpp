#include "ppgnet/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <stdexcept>

#include "ppgnet/dataio.hpp"

namespace ppgnet::metrics {

namespace {

void check_lengths(const std::vector<double>& a, const std::vector<double>& p) {
  if (a.size() != p.size()) throw std::invalid_argument("metric length mismatch");
  if (a.empty()) throw std::invalid_argument("metric of empty vectors");
}

}  // namespace

double mae(const std::vector<double>& actual, const std::vector<double>& predicted) {
  check_lengths(actual, predicted);
  double s = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) s += std::abs(actual[i] - predicted[i]);
  return s / static_cast<double>(actual.size());
}

double sdae(const std::vector<double>& actual, const std::vector<double>& predicted) {
  check_lengths(actual, predicted);
  const double m = mae(actual, predicted);
  double sq = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    const double d = std::abs(actual[i] - predicted[i]) - m;
    sq += d * d;
  }
  return std::sqrt(sq / static_cast<double>(actual.size()));
}

double pcc(const std::vector<double>& actual, const std::vector<double>& predicted) {
  check_lengths(actual, predicted);
  const auto n = static_cast<double>(actual.size());
  if (actual.size() < 2) throw std::invalid_argument("pcc needs at least two samples");
  double ma = 0.0, mp = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) { ma += actual[i]; mp += predicted[i]; }
  ma /= n; mp /= n;
  double cov = 0.0, va = 0.0, vp = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    const double da = actual[i] - ma, dp = predicted[i] - mp;
    cov += da * dp;
    va += da * da;
    vp += dp * dp;
  }
  if (va <= 0.0 || vp <= 0.0)
    throw std::invalid_argument("pcc undefined for zero-variance input");
  return cov / std::sqrt(va * vp);
}

void EvalReport::recompute_aggregates() {
  aggregates.clear();
  std::map<int, std::pair<std::vector<double>, std::vector<double>>> by_fold;
  std::vector<double> all_a, all_p;
  for (const ReportRow& r : rows) {
    by_fold[r.fold].first.push_back(r.actual_bpm);
    by_fold[r.fold].second.push_back(r.predicted_bpm);
    all_a.push_back(r.actual_bpm);
    all_p.push_back(r.predicted_bpm);
  }
  auto safe_pcc = [](const std::vector<double>& a, const std::vector<double>& p) {
    try {
      return pcc(a, p);
    } catch (const std::invalid_argument&) {
      return std::numeric_limits<double>::quiet_NaN();
    }
  };
  for (auto& [fold, ap] : by_fold) {
    Aggregate g;
    g.scope = "fold";
    g.fold = fold;
    g.mae = mae(ap.first, ap.second);
    g.sdae = sdae(ap.first, ap.second);
    g.pcc = safe_pcc(ap.first, ap.second);
    g.n_windows = static_cast<std::int64_t>(ap.first.size());
    aggregates.push_back(g);
  }
  if (!all_a.empty()) {
    Aggregate g;
    g.scope = "pooled";
    g.fold = -1;
    g.mae = mae(all_a, all_p);
    g.sdae = sdae(all_a, all_p);
    g.pcc = safe_pcc(all_a, all_p);
    g.n_windows = static_cast<std::int64_t>(all_a.size());
    aggregates.push_back(g);
  }
}

EvalReport make_report(std::vector<ReportRow> rows, std::string scheme,
                       int epochs, std::int64_t trainable_params,
                       std::int64_t total_params) {
  EvalReport r;
  r.rows = std::move(rows);
  r.scheme = std::move(scheme);
  r.epochs = epochs;
  r.trainable_parameters = trainable_params;
  r.total_parameters = total_params;
  r.recompute_aggregates();
  return r;
}

void write_report(const EvalReport& r, const std::filesystem::path& base) {
  std::filesystem::path rows_path = base;
  rows_path += "_rows.csv";
  write_atomic(rows_path, [&](std::ostream& out) {
    out << "subject_id,window_index,actual_bpm,predicted_bpm\n";
    char buf[96];
    for (const ReportRow& row : r.rows) {
      std::snprintf(buf, sizeof buf, ",%u,%.17g,%.17g\n", row.window_index,
                    row.actual_bpm, row.predicted_bpm);
      out << row.subject_id << buf;
    }
  });
  std::filesystem::path agg_path = base;
  agg_path += "_aggregates.csv";
  write_atomic(agg_path, [&](std::ostream& out) {
    out << "# scheme=" << r.scheme << " epochs=" << r.epochs
        << " trainable_parameters=" << r.trainable_parameters
        << " total_parameters=" << r.total_parameters << "\n";
    out << "scope,fold,mae,sdae,pcc,n_windows\n";
    char buf[140];
    for (const Aggregate& g : r.aggregates) {
      std::snprintf(buf, sizeof buf, ",%d,%.17g,%.17g,%.17g,%lld\n", g.fold, g.mae,
                    g.sdae, g.pcc, static_cast<long long>(g.n_windows));
      out << g.scope << buf;
    }
  });
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::size_t at = 0;
  while (true) {
    const std::size_t c = line.find(',', at);
    if (c == std::string::npos) {
      out.push_back(line.substr(at));
      break;
    }
    out.push_back(line.substr(at, c - at));
    at = c + 1;
  }
  return out;
}

double parse_double(const std::string& s, const std::string& what) {
  if (s == "nan" || s == "-nan") return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw DataError("bad number in report " + what + ": '" + s + "'");
  return v;
}

}  // namespace

EvalReport load_report(const std::filesystem::path& base) {
  EvalReport r;
  std::filesystem::path rows_path = base;
  rows_path += "_rows.csv";
  std::ifstream in(rows_path);
  if (!in) throw DataError("cannot open report rows: " + rows_path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty report rows file");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = split_csv(line);
    if (f.size() != 4) throw DataError("malformed report row: " + line);
    ReportRow row;
    row.subject_id = f[0];
    row.window_index = static_cast<std::uint32_t>(std::stoul(f[1]));
    row.actual_bpm = parse_double(f[2], "actual_bpm");
    row.predicted_bpm = parse_double(f[3], "predicted_bpm");
    r.rows.push_back(std::move(row));
  }

  std::filesystem::path agg_path = base;
  agg_path += "_aggregates.csv";
  std::ifstream ain(agg_path);
  if (!ain) throw DataError("cannot open report aggregates: " + agg_path.string());
  std::vector<Aggregate> loaded;
  while (std::getline(ain, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("scope,", 0) == 0) continue;
    auto f = split_csv(line);
    if (f.size() != 6) throw DataError("malformed aggregate row: " + line);
    Aggregate g;
    g.scope = f[0];
    g.fold = std::stoi(f[1]);
    g.mae = parse_double(f[2], "mae");
    g.sdae = parse_double(f[3], "sdae");
    g.pcc = parse_double(f[4], "pcc");
    g.n_windows = std::stoll(f[5]);
    loaded.push_back(std::move(g));
  }

  // Self-consistency: the pooled aggregates must match the rows. (Fold
  // membership is not part of the rows schema, so per-fold entries are
  // taken as stored.)
  std::vector<double> a, p;
  for (const ReportRow& row : r.rows) { a.push_back(row.actual_bpm); p.push_back(row.predicted_bpm); }
  for (const Aggregate& g : loaded) {
    if (g.scope != "pooled") continue;
    if (g.n_windows != static_cast<std::int64_t>(r.rows.size()))
      throw DataError("report aggregates inconsistent with rows (count)");
    if (!a.empty()) {
      if (std::abs(g.mae - mae(a, p)) > 1e-9 || std::abs(g.sdae - sdae(a, p)) > 1e-9)
        throw DataError("report aggregates inconsistent with rows (mae/sdae)");
    }
  }
  r.aggregates = std::move(loaded);
  return r;
}

}  // namespace ppgnet::metrics
