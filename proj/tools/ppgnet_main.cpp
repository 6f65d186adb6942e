// Command-line front end: synth, prepare, train, cv, transfer, eval,
// gradcheck, info. Exit codes: 0 ok, 1 usage, 2 data error, 3 verification
// failure. Outputs are written atomically; inputs are never modified.
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ppgnet/dataio.hpp"
#include "ppgnet/gradcheck.hpp"
#include "ppgnet/metrics.hpp"
#include "ppgnet/model.hpp"
#include "ppgnet/prepare.hpp"
#include "ppgnet/synth.hpp"
#include "ppgnet/trainer.hpp"

namespace fs = std::filesystem;
using namespace ppgnet;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitVerification = 3;

// ---- simple recursive glob: '*' and '?' inside path components ----

bool component_matches(const std::string& pattern, const std::string& name) {
  // iterative wildcard match
  std::size_t p = 0, n = 0, star = std::string::npos, star_n = 0;
  while (n < name.size()) {
    if (p < pattern.size() && (pattern[p] == '?' || pattern[p] == name[n])) {
      ++p; ++n;
    } else if (p < pattern.size() && pattern[p] == '*') {
      star = p++;
      star_n = n;
    } else if (star != std::string::npos) {
      p = star + 1;
      n = ++star_n;
    } else {
      return false;
    }
  }
  while (p < pattern.size() && pattern[p] == '*') ++p;
  return p == pattern.size();
}

std::vector<fs::path> expand_glob(const std::string& pattern) {
  if (pattern.find('*') == std::string::npos && pattern.find('?') == std::string::npos)
    return {fs::path(pattern)};

  const fs::path pat(pattern);
  std::vector<fs::path> frontier;
  frontier.push_back(pat.is_absolute() ? pat.root_path() : fs::path("."));
  const fs::path rel = pat.is_absolute() ? pat.relative_path() : pat;
  for (const fs::path& component : rel) {
    const std::string comp = component.string();
    std::vector<fs::path> next;
    for (const fs::path& base : frontier) {
      if (comp.find('*') == std::string::npos && comp.find('?') == std::string::npos) {
        if (fs::exists(base / comp)) next.push_back(base / comp);
        continue;
      }
      if (!fs::is_directory(base)) continue;
      std::vector<fs::path> found;
      for (const auto& entry : fs::directory_iterator(base))
        if (component_matches(comp, entry.path().filename().string()))
          found.push_back(entry.path());
      std::sort(found.begin(), found.end());
      next.insert(next.end(), found.begin(), found.end());
    }
    frontier = std::move(next);
  }
  return frontier;
}

// ---- shared option groups ----

void add_model_options(CLI::App* cmd, ModelConfig& cfg) {
  cmd->add_option("--inception-kernels", cfg.inception_kernels,
                  "Inception branch kernel sizes")->capture_default_str();
  cmd->add_option("--inception-channels", cfg.inception_channels,
                  "Inception branch output channels")->capture_default_str();
  cmd->add_option("--seq1-kernel", cfg.seq1_kernel)->capture_default_str();
  cmd->add_option("--seq1-out", cfg.seq1_out)->capture_default_str();
  cmd->add_option("--seq1-pool", cfg.seq1_pool)->capture_default_str();
  cmd->add_option("--seq2-kernel", cfg.seq2_kernel)->capture_default_str();
  cmd->add_option("--seq2-out", cfg.seq2_out)->capture_default_str();
  cmd->add_option("--seq2-pool", cfg.seq2_pool)->capture_default_str();
  cmd->add_option("--seq1-in", cfg.seq1_in)->capture_default_str();
  cmd->add_option("--seq2-in", cfg.seq2_in)->capture_default_str();
  cmd->add_option("--lstm1-hidden", cfg.lstm1_hidden)->capture_default_str();
  cmd->add_option("--lstm1-layers", cfg.lstm1_layers)->capture_default_str();
  cmd->add_option("--lstm2-input", cfg.lstm2_input)->capture_default_str();
  cmd->add_option("--lstm2-hidden", cfg.lstm2_hidden)->capture_default_str();
  cmd->add_option("--lstm2-layers", cfg.lstm2_layers)->capture_default_str();
  cmd->add_option("--linear-in", cfg.linear_in)->capture_default_str();
  cmd->add_option("--dropout", cfg.dropout_rate, "Dropout rate")->capture_default_str();
  cmd->add_option("--model-seed", cfg.seed, "Weight initialization seed")
      ->capture_default_str();
}

void add_train_options(CLI::App* cmd, trainer::TrainConfig& cfg) {
  cmd->add_option("--lr", cfg.learning_rate, "SGD learning rate")->capture_default_str();
  cmd->add_option("--batch-size", cfg.batch_size)->capture_default_str();
  cmd->add_option("--epochs", cfg.epochs)->capture_default_str();
  cmd->add_option("--seed", cfg.seed, "Shuffle/dropout seed")->capture_default_str();
  cmd->add_flag("--no-shuffle", [&cfg](std::int64_t) { cfg.shuffle = false; },
                "Keep the window order fixed across epochs");
  cmd->add_option("--freeze", cfg.frozen_blocks,
                  "Blocks excluded from updates (e.g. --freeze Inception LSTM1)");
}

WindowedDataset load_dataset_checked(const std::string& path) {
  WindowedDataset d = load_windowed(path);
  if (d.windows.empty()) throw DataError("dataset is empty: " + path);
  return d;
}

int run_app(int argc, char** argv) {
  CLI::App app{"Wrist-PPG heart-rate estimation: signal preparation, the "
               "CNN+LSTM regressor, cross-validation and transfer retraining"};
  app.require_subcommand(1);
  // `ppgnet --config run.ini <command>`: key = value lines, one [section]
  // per subcommand; unknown keys are rejected
  app.set_config("--config", "", "Read options from a key = value file");
  app.allow_config_extras(false);
  const auto with_config = [](CLI::App* cmd) {
    cmd->configurable();
    return cmd;
  };

  // ---- synth ----
  auto* synth_cmd = with_config(app.add_subcommand("synth", "Generate a synthetic PPG/ECG cohort"));
  std::string synth_out;
  int synth_n = 10;
  double synth_duration = 300.0;
  std::uint64_t synth_seed = 1;
  double synth_noise = 0.05, synth_artifact = 0.1;
  synth_cmd->add_option("out_dir", synth_out, "Output directory")->required();
  synth_cmd->add_option("--subjects", synth_n)->capture_default_str();
  synth_cmd->add_option("--duration", synth_duration, "Seconds per subject")
      ->capture_default_str();
  synth_cmd->add_option("--seed", synth_seed)->capture_default_str();
  synth_cmd->add_option("--noise", synth_noise, "Gaussian noise sigma")
      ->capture_default_str();
  synth_cmd->add_option("--artifact", synth_artifact, "Motion-artifact level")
      ->capture_default_str();
  synth_cmd->callback([&] {
    const auto cohort = synth::synth_cohort(synth_n, synth_duration, synth_seed,
                                            synth_noise, synth_artifact);
    for (const Recording& rec : cohort)
      write_recording(rec, fs::path(synth_out) / rec.subject_id);
    std::printf("wrote %zu recordings under %s\n", cohort.size(), synth_out.c_str());
  });

  // ---- prepare ----
  auto* prep_cmd = with_config(app.add_subcommand(
      "prepare", "Resample, window, label, filter and normalize recordings"));
  std::vector<std::string> prep_inputs;
  std::string prep_out;
  std::string prep_norm = "subject";
  PrepareOptions prep_opt;
  prep_cmd->add_option("manifests", prep_inputs,
                       "Manifest paths or globs (e.g. 'cohort/*/manifest.txt')")
      ->required();
  prep_cmd->add_option("--out", prep_out, "Output dataset file")->required();
  prep_cmd->add_option("--band-low", prep_opt.band_low_hz)->capture_default_str();
  prep_cmd->add_option("--band-high", prep_opt.band_high_hz)->capture_default_str();
  prep_cmd->add_option("--filter-order", prep_opt.filter_order)->capture_default_str();
  prep_cmd->add_option("--norm", prep_norm, "Normalization statistics: subject|window")
      ->check(CLI::IsMember({"subject", "window"}))->capture_default_str();
  prep_cmd->callback([&] {
    prep_opt.normalization = prep_norm == "subject"
                                 ? PrepareOptions::Normalization::SubjectPooled
                                 : PrepareOptions::Normalization::PerWindow;
    std::vector<fs::path> manifests;
    for (const std::string& pattern : prep_inputs) {
      const auto found = expand_glob(pattern);
      if (found.empty()) throw DataError("no files match '" + pattern + "'");
      manifests.insert(manifests.end(), found.begin(), found.end());
    }
    WindowedDataset dataset;
    int dropped = 0;
    for (const fs::path& m : manifests) {
      const Recording rec = load_recording(m);
      const PrepareStats stats = prepare_recording(rec, prep_opt, dataset);
      dropped += stats.windows_dropped;
      if (stats.windows_kept == 0)
        std::fprintf(stderr, "warning: %s contributed no windows\n",
                     rec.subject_id.c_str());
    }
    dataset.validate();
    save_windowed(dataset, prep_out);
    std::printf("prepared %zu windows from %zu recordings (%d dropped) -> %s\n",
                dataset.windows.size(), manifests.size(), dropped, prep_out.c_str());
  });

  // ---- train ----
  auto* train_cmd = with_config(app.add_subcommand("train", "Single training run"));
  std::string train_dataset, train_out_weights, train_out_history;
  ModelConfig train_model;
  trainer::TrainConfig train_cfg;
  train_cmd->add_option("--dataset", train_dataset)->required();
  train_cmd->add_option("--out-weights", train_out_weights)->required();
  train_cmd->add_option("--out-history", train_out_history);
  add_model_options(train_cmd, train_model);
  add_train_options(train_cmd, train_cfg);
  train_cmd->callback([&] {
    const WindowedDataset dataset = load_dataset_checked(train_dataset);
    PpgNetModel model = build_model(train_model);
    const auto result = trainer::train(model, dataset, train_cfg);
    save_weights(to_weights(model), train_out_weights);
    if (!train_out_history.empty())
      trainer::write_history_csv(result.history, train_out_history);
    std::printf("trained %d epochs, final mean loss %.4f BPM -> %s\n",
                train_cfg.epochs, result.history.back(), train_out_weights.c_str());
  });

  // ---- cv ----
  auto* cv_cmd = with_config(app.add_subcommand("cv", "Cross-validation"));
  std::string cv_dataset, cv_scheme = "loso", cv_out, cv_fold_mode = "subject";
  std::string cv_weights_dir;
  int cv_jobs = 1;
  ModelConfig cv_model;
  trainer::TrainConfig cv_cfg;
  cv_cmd->add_option("--dataset", cv_dataset)->required();
  cv_cmd->add_option("--scheme", cv_scheme, "loso or kfold:<k>")->capture_default_str();
  cv_cmd->add_option("--fold-mode", cv_fold_mode,
                     "kfold split granularity: subject (disjoint) or window")
      ->check(CLI::IsMember({"subject", "window"}))->capture_default_str();
  cv_cmd->add_option("--out-report", cv_out, "Report base path")->required();
  cv_cmd->add_option("--out-fold-dir", cv_weights_dir,
                     "Directory for per-fold weights and histories");
  cv_cmd->add_option("--jobs", cv_jobs, "Parallel fold workers")->capture_default_str();
  add_model_options(cv_cmd, cv_model);
  add_train_options(cv_cmd, cv_cfg);
  cv_cmd->callback([&] {
    const WindowedDataset dataset = load_dataset_checked(cv_dataset);
    trainer::CvResult result;
    if (cv_scheme == "loso") {
      result = trainer::run_cv(cv_model, dataset, trainer::loso_folds(dataset), cv_cfg,
                               cv_jobs, nullptr, cv_weights_dir);
    } else if (cv_scheme.rfind("kfold:", 0) == 0) {
      const int k = std::stoi(cv_scheme.substr(6));
      if (cv_fold_mode == "window")
        result = trainer::run_cv_window_random(cv_model, dataset, k, cv_cfg, cv_jobs);
      else
        result = trainer::run_cv(cv_model, dataset, trainer::kfold_folds(dataset, k, cv_cfg.seed),
                                 cv_cfg, cv_jobs, nullptr, cv_weights_dir);
    } else {
      throw CLI::ValidationError("--scheme", "expected loso or kfold:<k>");
    }
    metrics::write_report(result.report, cv_out);
    const auto& pooled = result.report.aggregates.back();
    std::printf("%s: pooled MAE %.3f +- %.3f BPM, PCC %.3f over %lld windows -> %s\n",
                result.report.scheme.c_str(), pooled.mae, pooled.sdae, pooled.pcc,
                static_cast<long long>(pooled.n_windows), cv_out.c_str());
  });

  // ---- transfer ----
  auto* tr_cmd = with_config(app.add_subcommand("transfer", "Evaluation conditions 2-4 on a target dataset"));
  std::string tr_weights, tr_dataset, tr_out;
  int tr_condition = 3;
  int tr_jobs = 1, tr_kfold = 5;
  double tr_fraction = 0.15;
  ModelConfig tr_model;
  trainer::TrainConfig tr_cfg;
  tr_cmd->add_option("--source-weights", tr_weights)->required();
  tr_cmd->add_option("--dataset", tr_dataset, "Target dataset")->required();
  tr_cmd->add_option("--condition", tr_condition)->check(CLI::Range(2, 4))->required();
  tr_cmd->add_option("--out-report", tr_out)->required();
  tr_cmd->add_option("--kfold", tr_kfold)->capture_default_str();
  tr_cmd->add_option("--fraction", tr_fraction, "Sparse retraining fraction")
      ->capture_default_str();
  tr_cmd->add_option("--jobs", tr_jobs)->capture_default_str();
  add_model_options(tr_cmd, tr_model);
  add_train_options(tr_cmd, tr_cfg);
  tr_cmd->callback([&] {
    const WindowedDataset target = load_dataset_checked(tr_dataset);
    const WeightsFile source = load_weights(tr_weights);
    trainer::ConditionConfig cc;
    cc.condition = tr_condition;
    cc.model = tr_model;
    cc.target_train = tr_cfg;
    if (tr_cmd->count("--epochs") == 0)
      cc.target_train.epochs = tr_condition == 4 ? 90 : 65;
    cc.kfold = tr_kfold;
    cc.sparse_fraction = tr_fraction;
    cc.jobs = tr_jobs;
    const auto report = trainer::run_condition(cc, target, &source);
    metrics::write_report(report, tr_out);
    const auto& pooled = report.aggregates.back();
    std::printf("%s: epochs %d, trainable %lld/%lld, pooled MAE %.3f +- %.3f, PCC %.3f -> %s\n",
                report.scheme.c_str(), report.epochs,
                static_cast<long long>(report.trainable_parameters),
                static_cast<long long>(report.total_parameters), pooled.mae,
                pooled.sdae, pooled.pcc, tr_out.c_str());
  });

  // ---- eval ----
  auto* eval_cmd = with_config(app.add_subcommand("eval", "Inference plus metrics on a dataset"));
  std::string eval_weights, eval_dataset, eval_out;
  ModelConfig eval_model;
  eval_cmd->add_option("--weights", eval_weights)->required();
  eval_cmd->add_option("--dataset", eval_dataset)->required();
  eval_cmd->add_option("--out-report", eval_out)->required();
  add_model_options(eval_cmd, eval_model);
  eval_cmd->callback([&] {
    const WindowedDataset dataset = load_dataset_checked(eval_dataset);
    PpgNetModel model = build_model(eval_model);
    load_into_model(model, load_weights(eval_weights));
    const auto pred = predict_dataset(model, dataset);
    std::vector<metrics::ReportRow> rows;
    for (std::size_t i = 0; i < dataset.windows.size(); ++i) {
      const Window& w = dataset.windows[i];
      rows.push_back({w.subject_id, w.window_index, w.label_bpm, pred[i], 0});
    }
    const auto counts = count_parameters(model);
    const auto report =
        metrics::make_report(std::move(rows), "eval", 0, counts.trainable, counts.total);
    metrics::write_report(report, eval_out);
    const auto& pooled = report.aggregates.back();
    std::printf("eval: MAE %.3f +- %.3f BPM, PCC %.3f over %lld windows -> %s\n",
                pooled.mae, pooled.sdae, pooled.pcc,
                static_cast<long long>(pooled.n_windows), eval_out.c_str());
  });

  // ---- gradcheck ----
  auto* gc_cmd = with_config(app.add_subcommand(
      "gradcheck", "Finite-difference verification of every gradient path"));
  gc_cmd->callback([&] {
    const auto entries = ag::run_gradient_suite();
    bool all_pass = true;
    for (const auto& e : entries) {
      std::printf("%-40s %s  (max rel err %.3e, tol %.0e, %d coords)\n",
                  e.name.c_str(), e.result.pass ? "PASS" : "FAIL",
                  e.result.max_rel_err, e.result.tolerance, e.result.coords_checked);
      all_pass = all_pass && e.result.pass;
    }
    if (!all_pass) {
      std::fflush(stdout);
      std::exit(kExitVerification);
    }
  });

  // ---- info ----
  auto* info_cmd = with_config(app.add_subcommand("info", "Per-block parameter counts"));
  std::string info_weights;
  ModelConfig info_model;
  info_cmd->add_option("--weights", info_weights, "Count arrays in a weights file");
  add_model_options(info_cmd, info_model);
  info_cmd->callback([&] {
    if (!info_weights.empty()) {
      const WeightsFile wf = load_weights(info_weights);
      std::int64_t total = 0, stats = 0;
      std::map<std::string, std::int64_t> per_block;
      for (const auto& a : wf.arrays) {
        if (a.block == "BatchNormStats") {
          stats += static_cast<std::int64_t>(a.values.size());
          continue;
        }
        per_block[a.block] += static_cast<std::int64_t>(a.values.size());
        total += static_cast<std::int64_t>(a.values.size());
      }
      for (const auto& [block, n] : per_block)
        std::printf("%-12s %10lld\n", block.c_str(), static_cast<long long>(n));
      std::printf("%-12s %10lld\n", "total", static_cast<long long>(total));
      std::printf("%-12s %10lld (running statistics, not parameters)\n", "bn-stats",
                  static_cast<long long>(stats));
    } else {
      PpgNetModel model = build_model(info_model);
      const auto counts = count_parameters(model);
      for (Block b : kAllBlocks)
        std::printf("%-12s %10lld\n", block_name(b).c_str(),
                    static_cast<long long>(counts.block(b)));
      std::printf("%-12s %10lld\n", "total", static_cast<long long>(counts.total));
      std::printf("%-12s %10lld\n", "transfer-trainable (LSTM2+Linear)",
                  static_cast<long long>(counts.block(Block::Lstm2) +
                                         counts.block(Block::Linear)));
    }
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_app(argc, argv);
  } catch (const DataError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  }
}
