#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ppgnet/dataio.hpp"
#include "ppgnet/metrics.hpp"
#include "ppgnet/model.hpp"

namespace ppgnet::trainer {

struct TrainConfig {
  double learning_rate = 0.02;
  int batch_size = 128;
  int epochs = 750;
  std::uint64_t seed = 1;
  bool shuffle = true;
  // Blocks excluded from updates. Applied to the model at the start of
  // train() when non-empty; an empty set leaves the model's flags alone.
  std::set<std::string> frozen_blocks;
  std::optional<double> sparse_fraction;  // used by condition 4

  void validate() const;
};

struct TrainResult {
  std::vector<double> history;  // per-epoch mean training loss (BPM)
};

// Plain SGD on the mean-absolute-error loss; epoch-level reshuffling with
// the seeded generator, last short batch kept. Bitwise reproducible for a
// fixed seed; frozen blocks stay untouched.
TrainResult train(PpgNetModel& model, const WindowedDataset& dataset,
                  const TrainConfig& config);

void write_history_csv(const std::vector<double>& history,
                       const std::filesystem::path& path);

// ---- cross-validation plans ----

struct FoldPlan {
  enum class Scheme { Loso, KFold, Holdout };
  struct Fold {
    std::vector<std::string> train_subjects;
    std::vector<std::string> test_subjects;
  };
  Scheme scheme = Scheme::Loso;
  int k = 0;
  std::vector<Fold> folds;

  std::string tag() const;
};

// One fold per subject; that subject is the whole test set.
FoldPlan loso_folds(const WindowedDataset& dataset);

// Subjects shuffled by seed and split into k near-equal, disjoint groups.
FoldPlan kfold_folds(const WindowedDataset& dataset, int k, std::uint64_t seed);

// Per-subject stratified random split: round(fraction * n) windows of each
// subject into the first part, the rest into the second.
std::pair<WindowedDataset, WindowedDataset> sparse_subset(
    const WindowedDataset& dataset, double fraction, std::uint64_t seed);

WindowedDataset subset_by_subjects(const WindowedDataset& dataset,
                                   const std::vector<std::string>& subjects);

// ---- cross-validation / transfer runners ----

struct CvResult {
  metrics::EvalReport report;
  std::vector<std::vector<double>> fold_histories;
};

// Trains one model per fold (fresh seeded init, or `init_weights` when
// given) and evaluates on the held-out subjects. Fold f derives its seeds
// as base + f; `jobs` folds run concurrently without changing results.
// When `fold_output_dir` is non-empty, each fold writes its weights file
// and training history there.
CvResult run_cv(const ModelConfig& model_config, const WindowedDataset& dataset,
                const FoldPlan& plan, const TrainConfig& train_config,
                int jobs = 1, const WeightsFile* init_weights = nullptr,
                const std::string& fold_output_dir = "");

// Window-random k-fold variant (folds are not subject-disjoint); kept for
// comparison behind a CLI flag.
CvResult run_cv_window_random(const ModelConfig& model_config,
                              const WindowedDataset& dataset, int k,
                              const TrainConfig& train_config, int jobs = 1);

// The four evaluation conditions on a target dataset:
//   1  random init, k-fold CV, full training
//   2  source weights, straight evaluation, no optimizer steps
//   3  source weights, freeze all but LSTM2+Linear, k-fold CV retraining
//   4  source weights, same freezing, retrain on the sparse per-subject
//      fraction, evaluate on the remainder
struct ConditionConfig {
  int condition = 1;
  ModelConfig model;
  TrainConfig target_train;
  int kfold = 5;
  double sparse_fraction = 0.15;
  int jobs = 1;
};

metrics::EvalReport run_condition(const ConditionConfig& config,
                                  const WindowedDataset& target,
                                  const WeightsFile* source_weights);

extern const std::set<std::string> kTransferTrainableBlocks;  // {LSTM2, Linear}

}  // namespace ppgnet::trainer
