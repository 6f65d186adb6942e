#include "ppgnet/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <future>
#include <numeric>

#include "ppgnet/rng.hpp"

namespace ppgnet::trainer {

using ag::Tensor;

void TrainConfig::validate() const {
  if (learning_rate <= 0.0) throw std::invalid_argument("learning rate must be > 0");
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (sparse_fraction && !(*sparse_fraction > 0.0 && *sparse_fraction <= 1.0))
    throw std::invalid_argument("sparse fraction must be in (0, 1]");
  for (const std::string& b : frozen_blocks) block_from_name(b);
}

TrainResult train(PpgNetModel& model, const WindowedDataset& dataset,
                  const TrainConfig& config) {
  config.validate();
  if (dataset.windows.empty()) throw DataError("cannot train on an empty dataset");
  const auto derived = model.config.derive();
  if (static_cast<int>(dataset.samples_per_window) != derived.window_len)
    throw DataError("dataset window length does not match the model input");

  if (!config.frozen_blocks.empty()) {
    std::set<std::string> keep;
    for (Block b : kAllBlocks)
      if (!config.frozen_blocks.count(block_name(b))) keep.insert(block_name(b));
    freeze_except(model, keep);
  }

  std::vector<Tensor> params = model.trainable_parameters();
  Rng rng(config.seed);
  const std::size_t n = dataset.windows.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  result.history.reserve(static_cast<std::size_t>(config.epochs));
  const int wl = derived.window_len;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    if (config.shuffle) rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t at = 0; at < n;) {
      const std::size_t b = std::min<std::size_t>(config.batch_size, n - at);
      std::vector<double> xv(b * static_cast<std::size_t>(wl));
      std::vector<double> yv(b);
      for (std::size_t i = 0; i < b; ++i) {
        const Window& w = dataset.windows[order[at + i]];
        std::copy(w.samples.begin(), w.samples.end(),
                  xv.begin() + static_cast<long>(i) * wl);
        yv[i] = w.label_bpm;
      }
      Tensor x = Tensor::from({static_cast<int>(b), wl}, std::move(xv));
      Tensor y = Tensor::from({static_cast<int>(b)}, std::move(yv));
      Tensor pred = forward_batch(model, x, Mode::Train, &rng);
      Tensor loss = ag::mae_loss(pred, y);
      if (!params.empty()) {
        loss.backward();
        ag::sgd_step(params, config.learning_rate);
      }
      loss_sum += loss.item() * static_cast<double>(b);
      at += b;
    }
    result.history.push_back(loss_sum / static_cast<double>(n));
  }
  return result;
}

void write_history_csv(const std::vector<double>& history,
                       const std::filesystem::path& path) {
  write_atomic(path, [&](std::ostream& out) {
    out << "epoch,mean_loss\n";
    char buf[48];
    for (std::size_t e = 0; e < history.size(); ++e) {
      std::snprintf(buf, sizeof buf, "%zu,%.17g\n", e, history[e]);
      out << buf;
    }
  });
}

// ---- fold plans ----

std::string FoldPlan::tag() const {
  switch (scheme) {
    case Scheme::Loso: return "loso";
    case Scheme::KFold: return "kfold:" + std::to_string(k);
    case Scheme::Holdout: return "holdout";
  }
  return "?";
}

FoldPlan loso_folds(const WindowedDataset& dataset) {
  const auto subjects = dataset.subject_ids();
  if (subjects.size() < 2)
    throw std::invalid_argument("leave-one-subject-out needs at least two subjects");
  FoldPlan plan;
  plan.scheme = FoldPlan::Scheme::Loso;
  plan.k = static_cast<int>(subjects.size());
  for (const std::string& test : subjects) {
    FoldPlan::Fold f;
    f.test_subjects = {test};
    for (const std::string& s : subjects)
      if (s != test) f.train_subjects.push_back(s);
    plan.folds.push_back(std::move(f));
  }
  return plan;
}

FoldPlan kfold_folds(const WindowedDataset& dataset, int k, std::uint64_t seed) {
  auto subjects = dataset.subject_ids();
  if (k < 2) throw std::invalid_argument("k-fold needs k >= 2");
  if (static_cast<int>(subjects.size()) < k)
    throw std::invalid_argument("fewer subjects than folds");
  Rng rng(seed);
  rng.shuffle(subjects);
  FoldPlan plan;
  plan.scheme = FoldPlan::Scheme::KFold;
  plan.k = k;
  plan.folds.resize(static_cast<std::size_t>(k));
  // First (n % k) folds take one extra subject.
  const std::size_t n = subjects.size();
  std::size_t at = 0;
  for (int f = 0; f < k; ++f) {
    std::size_t take = n / static_cast<std::size_t>(k) +
                       (static_cast<std::size_t>(f) < n % static_cast<std::size_t>(k) ? 1 : 0);
    auto& fold = plan.folds[static_cast<std::size_t>(f)];
    fold.test_subjects.assign(subjects.begin() + static_cast<long>(at),
                              subjects.begin() + static_cast<long>(at + take));
    std::sort(fold.test_subjects.begin(), fold.test_subjects.end());
    at += take;
  }
  for (auto& fold : plan.folds)
    for (const std::string& s : subjects)
      if (std::find(fold.test_subjects.begin(), fold.test_subjects.end(), s) ==
          fold.test_subjects.end())
        fold.train_subjects.push_back(s);
  for (auto& fold : plan.folds)
    std::sort(fold.train_subjects.begin(), fold.train_subjects.end());
  return plan;
}

WindowedDataset subset_by_subjects(const WindowedDataset& dataset,
                                   const std::vector<std::string>& subjects) {
  WindowedDataset out;
  out.sample_rate_hz = dataset.sample_rate_hz;
  out.samples_per_window = dataset.samples_per_window;
  for (const Window& w : dataset.windows)
    if (std::find(subjects.begin(), subjects.end(), w.subject_id) != subjects.end())
      out.windows.push_back(w);
  return out;
}

std::pair<WindowedDataset, WindowedDataset> sparse_subset(
    const WindowedDataset& dataset, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw std::invalid_argument("sparse fraction must be in (0, 1)");
  WindowedDataset take, rest;
  take.sample_rate_hz = rest.sample_rate_hz = dataset.sample_rate_hz;
  take.samples_per_window = rest.samples_per_window = dataset.samples_per_window;

  const auto subjects = dataset.subject_ids();
  for (std::size_t si = 0; si < subjects.size(); ++si) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < dataset.windows.size(); ++i)
      if (dataset.windows[i].subject_id == subjects[si]) idx.push_back(i);
    const auto want = static_cast<std::size_t>(
        std::llround(fraction * static_cast<double>(idx.size())));
    Rng rng(Rng::derive(seed, si));
    rng.shuffle(idx);
    std::vector<bool> taken(dataset.windows.size(), false);
    for (std::size_t i = 0; i < want && i < idx.size(); ++i) taken[idx[i]] = true;
    for (std::size_t i : idx)
      (taken[i] ? take : rest).windows.push_back(dataset.windows[i]);
  }
  return {std::move(take), std::move(rest)};
}

// ---- cross-validation ----

namespace {

struct FoldOutput {
  std::vector<metrics::ReportRow> rows;
  std::vector<double> history;
};

FoldOutput run_one_fold(const ModelConfig& model_config,
                        const WindowedDataset& train_set,
                        const WindowedDataset& test_set,
                        const TrainConfig& train_config, int fold_index,
                        const WeightsFile* init_weights,
                        const std::string& fold_output_dir) {
  ModelConfig mc = model_config;
  mc.seed = model_config.seed + static_cast<std::uint64_t>(fold_index);
  PpgNetModel model = build_model(mc);
  if (init_weights) load_into_model(model, *init_weights);

  TrainConfig tc = train_config;
  tc.seed = train_config.seed + static_cast<std::uint64_t>(fold_index);

  FoldOutput out;
  if (tc.epochs > 0 && !train_set.windows.empty())
    out.history = train(model, train_set, tc).history;

  if (!fold_output_dir.empty()) {
    const auto dir = std::filesystem::path(fold_output_dir);
    std::filesystem::create_directories(dir);
    const std::string stem = "fold" + std::to_string(fold_index);
    save_weights(to_weights(model), dir / (stem + "_weights.pnw"));
    write_history_csv(out.history, dir / (stem + "_history.csv"));
  }

  const std::vector<double> pred = predict_dataset(model, test_set);
  out.rows.reserve(test_set.windows.size());
  for (std::size_t i = 0; i < test_set.windows.size(); ++i) {
    const Window& w = test_set.windows[i];
    out.rows.push_back({w.subject_id, w.window_index, w.label_bpm, pred[i], fold_index});
  }
  return out;
}

CvResult assemble_cv(std::vector<FoldOutput> outputs, const std::string& scheme,
                     const ModelConfig& model_config, const TrainConfig& tc) {
  std::vector<metrics::ReportRow> rows;
  CvResult result;
  for (auto& o : outputs) {
    rows.insert(rows.end(), o.rows.begin(), o.rows.end());
    result.fold_histories.push_back(std::move(o.history));
  }
  PpgNetModel probe = build_model(model_config);
  if (!tc.frozen_blocks.empty()) {
    std::set<std::string> keep;
    for (Block b : kAllBlocks)
      if (!tc.frozen_blocks.count(block_name(b))) keep.insert(block_name(b));
    freeze_except(probe, keep);
  }
  const ParameterCounts counts = count_parameters(probe);
  result.report = metrics::make_report(std::move(rows), scheme, tc.epochs,
                                       counts.trainable, counts.total);
  return result;
}

template <typename MakeFold>
std::vector<FoldOutput> run_folds(int n_folds, int jobs, MakeFold&& make_fold) {
  std::vector<FoldOutput> outputs(static_cast<std::size_t>(n_folds));
  if (jobs <= 1) {
    for (int f = 0; f < n_folds; ++f) outputs[static_cast<std::size_t>(f)] = make_fold(f);
    return outputs;
  }
  // Fold results are independent and deterministic per fold, so parallel
  // execution cannot change the assembled report.
  std::vector<std::future<void>> futures;
  std::atomic<int> next{0};
  const int workers = std::min(jobs, n_folds);
  for (int w = 0; w < workers; ++w)
    futures.push_back(std::async(std::launch::async, [&] {
      while (true) {
        const int f = next.fetch_add(1);
        if (f >= n_folds) return;
        outputs[static_cast<std::size_t>(f)] = make_fold(f);
      }
    }));
  for (auto& f : futures) f.get();
  return outputs;
}

}  // namespace

CvResult run_cv(const ModelConfig& model_config, const WindowedDataset& dataset,
                const FoldPlan& plan, const TrainConfig& train_config, int jobs,
                const WeightsFile* init_weights, const std::string& fold_output_dir) {
  train_config.validate();
  auto outputs = run_folds(static_cast<int>(plan.folds.size()), jobs, [&](int f) {
    const auto& fold = plan.folds[static_cast<std::size_t>(f)];
    const WindowedDataset train_set = subset_by_subjects(dataset, fold.train_subjects);
    const WindowedDataset test_set = subset_by_subjects(dataset, fold.test_subjects);
    return run_one_fold(model_config, train_set, test_set, train_config, f,
                        init_weights, fold_output_dir);
  });
  return assemble_cv(std::move(outputs), plan.tag(), model_config, train_config);
}

CvResult run_cv_window_random(const ModelConfig& model_config,
                              const WindowedDataset& dataset, int k,
                              const TrainConfig& train_config, int jobs) {
  if (k < 2) throw std::invalid_argument("k-fold needs k >= 2");
  if (dataset.windows.size() < static_cast<std::size_t>(k))
    throw std::invalid_argument("fewer windows than folds");
  std::vector<std::size_t> order(dataset.windows.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(train_config.seed);
  rng.shuffle(order);
  std::vector<int> fold_of(order.size());
  for (std::size_t i = 0; i < order.size(); ++i)
    fold_of[order[i]] = static_cast<int>(i % static_cast<std::size_t>(k));

  auto outputs = run_folds(k, jobs, [&](int f) {
    WindowedDataset train_set, test_set;
    train_set.sample_rate_hz = test_set.sample_rate_hz = dataset.sample_rate_hz;
    train_set.samples_per_window = test_set.samples_per_window = dataset.samples_per_window;
    for (std::size_t i = 0; i < dataset.windows.size(); ++i)
      (fold_of[i] == f ? test_set : train_set).windows.push_back(dataset.windows[i]);
    return run_one_fold(model_config, train_set, test_set, train_config, f, nullptr, "");
  });
  auto result = assemble_cv(std::move(outputs), "kfold-window:" + std::to_string(k),
                            model_config, train_config);
  return result;
}

// ---- transfer conditions ----

const std::set<std::string> kTransferTrainableBlocks = {"LSTM2", "Linear"};

metrics::EvalReport run_condition(const ConditionConfig& config,
                                  const WindowedDataset& target,
                                  const WeightsFile* source_weights) {
  if (config.condition < 1 || config.condition > 4)
    throw std::invalid_argument("condition must be 1..4");
  if (config.condition >= 2 && source_weights == nullptr)
    throw DataError("conditions 2-4 need source-trained weights");

  const std::string scheme = "condition:" + std::to_string(config.condition);

  switch (config.condition) {
    case 1: {
      const FoldPlan plan = kfold_folds(target, config.kfold, config.target_train.seed);
      CvResult cv = run_cv(config.model, target, plan, config.target_train, config.jobs);
      cv.report.scheme = scheme + " " + plan.tag();
      return cv.report;
    }
    case 2: {
      PpgNetModel model = build_model(config.model);
      load_into_model(model, *source_weights);
      const std::vector<double> pred = predict_dataset(model, target);
      std::vector<metrics::ReportRow> rows;
      for (std::size_t i = 0; i < target.windows.size(); ++i) {
        const Window& w = target.windows[i];
        rows.push_back({w.subject_id, w.window_index, w.label_bpm, pred[i], 0});
      }
      const ParameterCounts counts = count_parameters(model);
      return metrics::make_report(std::move(rows), scheme, 0, counts.trainable,
                                  counts.total);
    }
    case 3: {
      TrainConfig tc = config.target_train;
      tc.frozen_blocks.clear();
      for (Block b : kAllBlocks)
        if (!kTransferTrainableBlocks.count(block_name(b)))
          tc.frozen_blocks.insert(block_name(b));
      const FoldPlan plan = kfold_folds(target, config.kfold, tc.seed);
      CvResult cv = run_cv(config.model, target, plan, tc, config.jobs, source_weights);
      cv.report.scheme = scheme + " " + plan.tag();
      return cv.report;
    }
    case 4:
    default: {
      TrainConfig tc = config.target_train;
      tc.sparse_fraction = config.sparse_fraction;
      tc.frozen_blocks.clear();
      for (Block b : kAllBlocks)
        if (!kTransferTrainableBlocks.count(block_name(b)))
          tc.frozen_blocks.insert(block_name(b));
      // The retraining set is fixed before the remainder exists anywhere
      // near the training loop.
      auto [train_set, remainder] = sparse_subset(target, config.sparse_fraction, tc.seed);
      PpgNetModel model = build_model(config.model);
      load_into_model(model, *source_weights);
      train(model, train_set, tc);
      const std::vector<double> pred = predict_dataset(model, remainder);
      std::vector<metrics::ReportRow> rows;
      for (std::size_t i = 0; i < remainder.windows.size(); ++i) {
        const Window& w = remainder.windows[i];
        rows.push_back({w.subject_id, w.window_index, w.label_bpm, pred[i], 0});
      }
      const ParameterCounts counts = count_parameters(model);
      return metrics::make_report(std::move(rows), scheme, tc.epochs,
                                  counts.trainable, counts.total);
    }
  }
}

}  // namespace ppgnet::trainer
