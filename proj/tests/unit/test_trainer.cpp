#include <cmath>
#include <filesystem>
#include <set>

#include "doctest.h"
#include "ppgnet/prepare.hpp"
#include "ppgnet/synth.hpp"
#include "ppgnet/trainer.hpp"

using namespace ppgnet;

namespace {

// A small architecture for fast training tests; 4 steps of 32 samples.
ModelConfig tiny_config(std::uint64_t seed = 1) {
  ModelConfig cfg;
  cfg.step_count = 4;
  cfg.step_len = 32;
  cfg.inception_kernels = {3, 5, 7, 9, 11};
  cfg.inception_channels = {2, 1, 1, 1, 1};
  cfg.seq1_kernel = 5; cfg.seq1_in = 6; cfg.seq1_out = 8; cfg.seq1_pool = 4;
  cfg.seq2_kernel = 5; cfg.seq2_in = 8; cfg.seq2_out = 8; cfg.seq2_pool = 4;
  cfg.lstm1_input = 32; cfg.lstm1_hidden = 6; cfg.lstm1_layers = 2;
  cfg.lstm2_input = 28; cfg.lstm2_hidden = 6; cfg.lstm2_layers = 2;
  cfg.linear_in = 6; cfg.linear_out = 1;
  cfg.dropout_rate = 0.1;
  cfg.seed = seed;
  return cfg;
}

// Windows whose label depends on a visible property of the samples, so the
// tiny model can learn the mapping.
WindowedDataset learnable_dataset(int subjects, int per_subject, int window_len,
                                  std::uint64_t seed) {
  WindowedDataset d;
  d.samples_per_window = static_cast<std::uint32_t>(window_len);
  Rng rng(seed);
  for (int s = 0; s < subjects; ++s)
    for (int i = 0; i < per_subject; ++i) {
      Window w;
      w.subject_id = "s" + std::to_string(s);
      w.window_index = static_cast<std::uint32_t>(i);
      const double f = rng.uniform(1.0, 3.0);
      w.label_bpm = 60.0 * f / 1.5;  // 40..120 BPM
      w.samples.resize(static_cast<std::size_t>(window_len));
      for (int k = 0; k < window_len; ++k)
        w.samples[static_cast<std::size_t>(k)] =
            std::sin(2.0 * 3.14159265358979 * f * k / 32.0) + 0.05 * rng.normal();
      d.add(std::move(w));
    }
  return d;
}

}  // namespace

TEST_CASE("training config validation") {
  trainer::TrainConfig c;
  c.learning_rate = 0.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.sparse_fraction = 1.5;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.frozen_blocks = {"Bogus"};
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("zero-effect training keeps weights bit-identical") {
  // A fully frozen model makes the optimizer a no-op: p - lr*g never
  // applies to anything, so weights and loss history stay put.
  PpgNetModel m = build_model(tiny_config(2));
  const auto before = to_weights(m);
  trainer::TrainConfig tc;
  tc.learning_rate = 0.02;
  tc.epochs = 3;
  tc.batch_size = 8;
  tc.frozen_blocks = {"Inception", "SeqBlock1", "SeqBlock2", "LSTM1", "LSTM2", "Linear"};
  const auto data = learnable_dataset(2, 10, 128, 3);
  const auto result = trainer::train(m, data, tc);
  REQUIRE(result.history.size() == 3);
  const auto after = to_weights(m);
  for (std::size_t a = 0; a < before.arrays.size(); ++a)
    for (std::size_t i = 0; i < before.arrays[a].values.size(); ++i)
      CHECK(after.arrays[a].values[i] == before.arrays[a].values[i]);
}

TEST_CASE("identical seeds give identical training histories") {
  const auto data = learnable_dataset(2, 12, 128, 5);
  trainer::TrainConfig tc;
  tc.epochs = 4;
  tc.batch_size = 6;
  tc.learning_rate = 0.02;
  tc.seed = 77;

  PpgNetModel m1 = build_model(tiny_config(9));
  PpgNetModel m2 = build_model(tiny_config(9));
  const auto h1 = trainer::train(m1, data, tc).history;
  const auto h2 = trainer::train(m2, data, tc).history;
  REQUIRE(h1.size() == h2.size());
  for (std::size_t i = 0; i < h1.size(); ++i) CHECK(h1[i] == h2[i]);

  // and different seeds diverge
  trainer::TrainConfig tc2 = tc;
  tc2.seed = 78;
  PpgNetModel m3 = build_model(tiny_config(9));
  const auto h3 = trainer::train(m3, data, tc2).history;
  bool differ = false;
  for (std::size_t i = 0; i < h1.size(); ++i)
    if (h1[i] != h3[i]) { differ = true; break; }
  CHECK(differ);
}

TEST_CASE("training loss eventually decreases on learnable data") {
  const auto data = learnable_dataset(3, 20, 128, 11);
  PpgNetModel m = build_model(tiny_config(4));
  trainer::TrainConfig tc;
  tc.epochs = 60;
  tc.batch_size = 16;
  tc.learning_rate = 0.05;
  tc.seed = 2;
  const auto history = trainer::train(m, data, tc).history;
  double first = 0.0, last = 0.0;
  for (int i = 0; i < 10; ++i) {
    first += history[static_cast<std::size_t>(i)] / 10.0;
    last += history[history.size() - 10 + static_cast<std::size_t>(i)] / 10.0;
  }
  CHECK(last < first);
}

TEST_CASE("training rejects empty datasets") {
  PpgNetModel m = build_model(tiny_config(1));
  WindowedDataset empty;
  empty.samples_per_window = 128;
  CHECK_THROWS_AS(trainer::train(m, empty, trainer::TrainConfig{}), DataError);
}

TEST_CASE("leave-one-subject-out fold plans") {
  WindowedDataset d;
  d.samples_per_window = 4;
  for (int s = 0; s < 12; ++s) {
    Window w{"s" + std::to_string(s), 0, 80.0, {0, 0, 0, 0}};
    d.add(std::move(w));
  }
  const auto plan = trainer::loso_folds(d);
  CHECK(plan.folds.size() == 12);
  CHECK(plan.tag() == "loso");
  for (const auto& f : plan.folds) {
    CHECK(f.test_subjects.size() == 1);
    CHECK(f.train_subjects.size() == 11);
  }

  WindowedDataset two;
  two.samples_per_window = 4;
  two.add({"a", 0, 80.0, {0, 0, 0, 0}});
  two.add({"b", 0, 80.0, {0, 0, 0, 0}});
  const auto p2 = trainer::loso_folds(two);
  CHECK(p2.folds.size() == 2);
  CHECK(p2.folds[0].train_subjects == std::vector<std::string>{"b"});

  WindowedDataset one;
  one.samples_per_window = 4;
  one.add({"a", 0, 80.0, {0, 0, 0, 0}});
  CHECK_THROWS_AS(trainer::loso_folds(one), std::invalid_argument);
}

TEST_CASE("k-fold plans partition subjects into near-equal groups") {
  WindowedDataset d;
  d.samples_per_window = 4;
  for (int s = 0; s < 50; ++s)
    d.add({"s" + std::to_string(s), 0, 80.0, {0, 0, 0, 0}});
  const auto plan = trainer::kfold_folds(d, 5, 42);
  CHECK(plan.folds.size() == 5);
  std::set<std::string> seen;
  for (const auto& f : plan.folds) {
    CHECK(f.test_subjects.size() == 10);
    CHECK(f.train_subjects.size() == 40);
    for (const auto& s : f.test_subjects) CHECK(seen.insert(s).second);
  }
  CHECK(seen.size() == 50);  // a partition: every subject in exactly one test set

  // k equal to the subject count degenerates to leave-one-out
  WindowedDataset five;
  five.samples_per_window = 4;
  for (int s = 0; s < 5; ++s)
    five.add({"s" + std::to_string(s), 0, 80.0, {0, 0, 0, 0}});
  const auto loso_like = trainer::kfold_folds(five, 5, 1);
  for (const auto& f : loso_like.folds) CHECK(f.test_subjects.size() == 1);

  // different seed, different partition, same sizes
  const auto plan2 = trainer::kfold_folds(d, 5, 43);
  bool differs = false;
  for (std::size_t f = 0; f < 5; ++f) {
    CHECK(plan2.folds[f].test_subjects.size() == plan.folds[f].test_subjects.size());
    if (plan2.folds[f].test_subjects != plan.folds[f].test_subjects) differs = true;
  }
  CHECK(differs);

  CHECK_THROWS_AS(trainer::kfold_folds(five, 6, 1), std::invalid_argument);
}

TEST_CASE("sparse subsets stratify per subject and partition the dataset") {
  WindowedDataset d;
  d.samples_per_window = 4;
  Rng rng(1);
  for (int s = 0; s < 3; ++s)
    for (int i = 0; i < 40; ++i)
      d.add({"s" + std::to_string(s), static_cast<std::uint32_t>(i),
             rng.uniform(50, 150), {0, 0, 0, 0}});

  const auto [take, rest] = trainer::sparse_subset(d, 0.15, 9);
  CHECK(take.windows.size() == 3 * 6);  // round(0.15 * 40) = 6 per subject
  CHECK(rest.windows.size() == d.windows.size() - take.windows.size());

  std::set<std::pair<std::string, std::uint32_t>> seen;
  for (const auto& w : take.windows) seen.emplace(w.subject_id, w.window_index);
  for (const auto& w : rest.windows)
    CHECK(seen.emplace(w.subject_id, w.window_index).second);  // no overlap
  CHECK(seen.size() == d.windows.size());                      // full cover

  CHECK_THROWS_AS(trainer::sparse_subset(d, 1.0, 9), std::invalid_argument);
  CHECK_THROWS_AS(trainer::sparse_subset(d, 0.0, 9), std::invalid_argument);
}

TEST_CASE("cross-validation runner produces subject-disjoint fold rows") {
  const auto data = learnable_dataset(5, 8, 128, 21);
  trainer::TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 8;
  tc.seed = 3;
  const auto plan = trainer::kfold_folds(data, 5, 3);
  const auto cv = trainer::run_cv(tiny_config(6), data, plan, tc, 1);
  CHECK(cv.report.rows.size() == data.windows.size());
  CHECK(cv.report.aggregates.size() == 6);  // 5 folds + pooled
  // fold index of each row matches the plan
  for (const auto& row : cv.report.rows) {
    const auto& fold = plan.folds[static_cast<std::size_t>(row.fold)];
    CHECK(std::find(fold.test_subjects.begin(), fold.test_subjects.end(),
                    row.subject_id) != fold.test_subjects.end());
  }
  // parallel fold execution yields the identical report
  const auto cv2 = trainer::run_cv(tiny_config(6), data, plan, tc, 4);
  REQUIRE(cv2.report.rows.size() == cv.report.rows.size());
  for (std::size_t i = 0; i < cv.report.rows.size(); ++i)
    CHECK(cv2.report.rows[i].predicted_bpm == cv.report.rows[i].predicted_bpm);
}

TEST_CASE("cross-validation can emit per-fold weights and histories") {
  const auto data = learnable_dataset(3, 8, 128, 51);
  trainer::TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 8;
  const auto dir = std::filesystem::temp_directory_path() / "ppgnet_fold_out";
  std::filesystem::remove_all(dir);
  const auto plan = trainer::kfold_folds(data, 3, 1);
  trainer::run_cv(tiny_config(5), data, plan, tc, 1, nullptr, dir.string());
  for (int f = 0; f < 3; ++f) {
    const auto stem = dir / ("fold" + std::to_string(f));
    const WeightsFile wf = load_weights(dir / ("fold" + std::to_string(f) + "_weights.pnw"));
    CHECK(!wf.arrays.empty());
    CHECK(std::filesystem::exists(dir / ("fold" + std::to_string(f) + "_history.csv")));
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("window-random k-fold covers every window across folds") {
  const auto data = learnable_dataset(3, 10, 128, 41);
  trainer::TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 8;
  tc.seed = 5;
  const auto cv = trainer::run_cv_window_random(tiny_config(2), data, 3, tc, 1);
  CHECK(cv.report.scheme == "kfold-window:3");
  CHECK(cv.report.rows.size() == data.windows.size());
  std::set<std::pair<std::string, std::uint32_t>> seen;
  for (const auto& row : cv.report.rows)
    CHECK(seen.emplace(row.subject_id, row.window_index).second);
}

TEST_CASE("condition 1 is a k-fold cross-validation from random init") {
  const auto data = learnable_dataset(4, 8, 128, 43);
  trainer::ConditionConfig cc;
  cc.condition = 1;
  cc.model = tiny_config(3);
  cc.target_train.epochs = 1;
  cc.target_train.batch_size = 8;
  cc.kfold = 4;
  const auto report = trainer::run_condition(cc, data, nullptr);
  CHECK(report.scheme.rfind("condition:1", 0) == 0);
  CHECK(report.rows.size() == data.windows.size());
  CHECK(report.trainable_parameters == report.total_parameters);
}

TEST_CASE("transfer conditions freeze, retrain and account correctly") {
  const int wl = 128;
  const auto source = learnable_dataset(3, 10, wl, 31);
  const auto target = learnable_dataset(6, 10, wl, 32);

  // Source-train a model, then run the conditions against its weights.
  ModelConfig mc = tiny_config(8);
  PpgNetModel source_model = build_model(mc);
  trainer::TrainConfig source_tc;
  source_tc.epochs = 3;
  source_tc.batch_size = 8;
  trainer::train(source_model, source, source_tc);
  const WeightsFile source_weights = to_weights(source_model);

  trainer::ConditionConfig cc;
  cc.model = mc;
  cc.target_train.epochs = 2;
  cc.target_train.batch_size = 8;
  cc.kfold = 3;

  SUBCASE("condition 2 evaluates without optimizer steps") {
    cc.condition = 2;
    const auto report = trainer::run_condition(cc, target, &source_weights);
    CHECK(report.epochs == 0);
    CHECK(report.rows.size() == target.windows.size());
    CHECK(report.scheme == "condition:2");
  }

  SUBCASE("condition 3 reports the reduced trainable count") {
    cc.condition = 3;
    const auto report = trainer::run_condition(cc, target, &source_weights);
    PpgNetModel probe = build_model(mc);
    const auto all = count_parameters(probe);
    freeze_except(probe, {"LSTM2", "Linear"});
    const auto frozen = count_parameters(probe);
    CHECK(report.trainable_parameters ==
          frozen.block(Block::Lstm2) + frozen.block(Block::Linear));
    CHECK(report.total_parameters == all.total);
    CHECK(report.rows.size() == target.windows.size());
  }

  SUBCASE("condition 4 trains on the fraction, evaluates the remainder, keeps frozen blocks") {
    cc.condition = 4;
    cc.sparse_fraction = 0.2;
    const auto report = trainer::run_condition(cc, target, &source_weights);
    const auto [take, rest] = trainer::sparse_subset(target, 0.2, cc.target_train.seed);
    CHECK(report.rows.size() == rest.windows.size());

    // Frozen blocks must be bit-identical to the pretrained file. Rebuild
    // the condition's model path manually to inspect the weights.
    PpgNetModel model = build_model(mc);
    load_into_model(model, source_weights);
    trainer::TrainConfig tc = cc.target_train;
    tc.sparse_fraction = 0.2;
    for (Block b : kAllBlocks)
      if (block_name(b) != "LSTM2" && block_name(b) != "Linear")
        tc.frozen_blocks.insert(block_name(b));
    trainer::train(model, take, tc);
    const WeightsFile after = to_weights(model);
    for (std::size_t a = 0; a < source_weights.arrays.size(); ++a) {
      const auto& arr = source_weights.arrays[a];
      if (arr.block == "LSTM2" || arr.block == "Linear") continue;
      for (std::size_t i = 0; i < arr.values.size(); ++i)
        CHECK(after.arrays[a].values[i] == arr.values[i]);
    }
  }

  SUBCASE("conditions 2-4 require source weights") {
    cc.condition = 2;
    CHECK_THROWS_AS(trainer::run_condition(cc, target, nullptr), DataError);
  }
}
