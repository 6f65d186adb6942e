#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "ppgnet/dataio.hpp"
#include "ppgnet/model.hpp"
#include "ppgnet/rng.hpp"

using namespace ppgnet;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("ppgnet_test_" + std::to_string(Rng(std::random_device{}()).below(1u << 30)));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

WindowedDataset make_dataset(int subjects, int windows_per_subject, int samples,
                             std::uint64_t seed) {
  WindowedDataset d;
  d.samples_per_window = static_cast<std::uint32_t>(samples);
  Rng rng(seed);
  for (int s = 0; s < subjects; ++s)
    for (int i = 0; i < windows_per_subject; ++i) {
      Window w;
      w.subject_id = "s" + std::to_string(s);
      w.window_index = static_cast<std::uint32_t>(i);
      w.label_bpm = rng.uniform(45.0, 180.0);
      w.samples.resize(static_cast<std::size_t>(samples));
      for (auto& v : w.samples) v = rng.normal();
      d.add(std::move(w));
    }
  return d;
}

}  // namespace

TEST_CASE("manifest loading accepts ADI-style and SPC-style rates") {
  TempDir tmp;
  write_text(tmp.path / "ppg.csv", "0.1\n0.2\n0.3\n0.4\n0.5\n");
  write_text(tmp.path / "ecg.csv",
             "1\n2\n3\n4\n5\n6\n7\n8\n9\n10\n11\n12\n13\n14\n15\n16\n17\n18\n19\n20\n"
             "21\n22\n23\n24\n25\n26\n27\n28\n29\n30\n31\n32\n33\n34\n35\n36\n37\n38\n39\n40\n");
  write_text(tmp.path / "manifest.txt",
             "# comment line\n"
             "subject_id = s01\n"
             "ppg_rate_hz = 50\n"
             "ecg_rate_hz = 400\n"
             "ppg_file = ppg.csv\n"
             "ecg_file = ecg.csv\n");
  const Recording rec = load_recording(tmp.path / "manifest.txt");
  CHECK(rec.subject_id == "s01");
  CHECK(rec.ppg_rate_hz == 50.0);
  CHECK(rec.ecg_rate_hz == 400.0);
  CHECK(rec.ppg.size() == 5);
  CHECK(rec.ecg.size() == 40);

  write_text(tmp.path / "manifest2.txt",
             "subject_id = s02\nppg_rate_hz = 125\necg_rate_hz = 125\n"
             "ppg_file = ppg.csv\necg_file = ppg.csv\n");
  const Recording rec2 = load_recording(tmp.path / "manifest2.txt");
  CHECK(rec2.ppg_rate_hz == 125.0);
}

TEST_CASE("manifest loading rejects broken inputs") {
  TempDir tmp;
  write_text(tmp.path / "ppg.csv", "0.1\n0.2\n");
  write_text(tmp.path / "bad.csv", "0.1\nnot-a-number\n");

  // missing file
  write_text(tmp.path / "m1.txt",
             "subject_id = x\nppg_rate_hz = 50\necg_rate_hz = 50\n"
             "ppg_file = nope.csv\necg_file = ppg.csv\n");
  CHECK_THROWS_AS(load_recording(tmp.path / "m1.txt"), DataError);

  // non-numeric sample
  write_text(tmp.path / "m2.txt",
             "subject_id = x\nppg_rate_hz = 50\necg_rate_hz = 50\n"
             "ppg_file = bad.csv\necg_file = ppg.csv\n");
  CHECK_THROWS_AS(load_recording(tmp.path / "m2.txt"), DataError);

  // rate <= 0
  write_text(tmp.path / "m3.txt",
             "subject_id = x\nppg_rate_hz = 0\necg_rate_hz = 50\n"
             "ppg_file = ppg.csv\necg_file = ppg.csv\n");
  CHECK_THROWS_AS(load_recording(tmp.path / "m3.txt"), DataError);

  // unknown key
  write_text(tmp.path / "m4.txt",
             "subject_id = x\nppg_rate_hz = 50\necg_rate_hz = 50\n"
             "ppg_file = ppg.csv\necg_file = ppg.csv\nbogus = 1\n");
  CHECK_THROWS_AS(load_recording(tmp.path / "m4.txt"), DataError);

  // duration mismatch: 10 s of ECG vs 300 s of PPG
  std::string long_ppg;
  for (int i = 0; i < 300 * 50; ++i) long_ppg += "0.5\n";
  write_text(tmp.path / "long.csv", long_ppg);
  std::string short_ecg;
  for (int i = 0; i < 10 * 400; ++i) short_ecg += "0.5\n";
  write_text(tmp.path / "short.csv", short_ecg);
  write_text(tmp.path / "m5.txt",
             "subject_id = x\nppg_rate_hz = 50\necg_rate_hz = 400\n"
             "ppg_file = long.csv\necg_file = short.csv\n");
  CHECK_THROWS_AS(load_recording(tmp.path / "m5.txt"), DataError);
}

TEST_CASE("recording round trip through the canonical on-disk layout") {
  TempDir tmp;
  Recording rec;
  rec.subject_id = "s07";
  rec.ppg_rate_hz = 50.0;
  rec.ecg_rate_hz = 400.0;
  Rng rng(7);
  rec.ppg.resize(500);
  for (auto& v : rec.ppg) v = rng.normal();
  rec.ecg.resize(4000);
  for (auto& v : rec.ecg) v = rng.normal();
  write_recording(rec, tmp.path / "s07");
  const Recording back = load_recording(tmp.path / "s07" / "manifest.txt");
  CHECK(back.subject_id == rec.subject_id);
  REQUIRE(back.ppg.size() == rec.ppg.size());
  for (std::size_t i = 0; i < rec.ppg.size(); ++i) CHECK(back.ppg[i] == rec.ppg[i]);
  for (std::size_t i = 0; i < rec.ecg.size(); ++i) CHECK(back.ecg[i] == rec.ecg[i]);
}

TEST_CASE("windowed dataset: empty and populated round trips are bit-exact") {
  TempDir tmp;
  WindowedDataset empty;
  save_windowed(empty, tmp.path / "empty.wds");
  const WindowedDataset back = load_windowed(tmp.path / "empty.wds");
  CHECK(back.windows.empty());
  CHECK(back.samples_per_window == 1000);

  const WindowedDataset d = make_dataset(3, 49, 1000, 11);  // 147 windows
  REQUIRE(d.windows.size() == 147);
  save_windowed(d, tmp.path / "d.wds");
  const WindowedDataset d2 = load_windowed(tmp.path / "d.wds");
  REQUIRE(d2.windows.size() == d.windows.size());
  for (std::size_t i = 0; i < d.windows.size(); ++i) {
    CHECK(d2.windows[i].subject_id == d.windows[i].subject_id);
    CHECK(d2.windows[i].window_index == d.windows[i].window_index);
    CHECK(d2.windows[i].label_bpm == d.windows[i].label_bpm);
    for (std::size_t k = 0; k < d.windows[i].samples.size(); ++k)
      CHECK(d2.windows[i].samples[k] == d.windows[i].samples[k]);
  }
}

TEST_CASE("windowed dataset rejects out-of-band labels and duplicates") {
  WindowedDataset d;
  d.samples_per_window = 4;
  Window w;
  w.subject_id = "a";
  w.window_index = 0;
  w.label_bpm = 10.0;  // below 20
  w.samples = {0, 0, 0, 0};
  CHECK_THROWS_AS(d.add(w), DataError);
  w.label_bpm = 300.0;  // above 250
  CHECK_THROWS_AS(d.add(w), DataError);
  w.label_bpm = 72.0;
  d.add(w);
  d.windows.push_back(d.windows.front());  // duplicate (subject, index)
  CHECK_THROWS_AS(d.validate(), DataError);
}

TEST_CASE("corrupting any byte breaks the dataset checksum") {
  TempDir tmp;
  const WindowedDataset d = make_dataset(1, 3, 16, 5);
  const fs::path p = tmp.path / "c.wds";
  save_windowed(d, p);

  auto corrupt_at = [&](std::size_t offset) {
    std::fstream f(p, std::ios::in | std::ios::out | std::ios::binary);
    f.seekg(static_cast<long>(offset));
    char c = static_cast<char>(f.get());
    f.seekp(static_cast<long>(offset));
    f.put(static_cast<char>(c ^ 0x40));
  };
  const auto size = fs::file_size(p);
  corrupt_at(size / 2);
  CHECK_THROWS_AS(load_windowed(p), DataError);

  // truncation is also caught
  save_windowed(d, p);
  fs::resize_file(p, size - 5);
  CHECK_THROWS_AS(load_windowed(p), DataError);
}

TEST_CASE("weights files round trip models bit-exactly") {
  TempDir tmp;
  ModelConfig cfg;
  cfg.seed = 77;
  PpgNetModel m = build_model(cfg);
  const WeightsFile wf = to_weights(m);
  save_weights(wf, tmp.path / "w.pnw");
  const WeightsFile wf2 = load_weights(tmp.path / "w.pnw");
  REQUIRE(wf2.arrays.size() == wf.arrays.size());
  std::int64_t values = 0;
  for (std::size_t i = 0; i < wf.arrays.size(); ++i) {
    CHECK(wf2.arrays[i].block == wf.arrays[i].block);
    CHECK(wf2.arrays[i].name == wf.arrays[i].name);
    CHECK(wf2.arrays[i].shape == wf.arrays[i].shape);
    REQUIRE(wf2.arrays[i].values.size() == wf.arrays[i].values.size());
    for (std::size_t k = 0; k < wf.arrays[i].values.size(); ++k)
      CHECK(wf2.arrays[i].values[k] == wf.arrays[i].values[k]);
    values += static_cast<std::int64_t>(wf.arrays[i].values.size());
  }
  // parameters + the four running-stat vectors
  PpgNetModel probe = build_model(cfg);
  const auto counts = count_parameters(probe);
  CHECK(values == counts.total + 2 * (cfg.seq1_out + cfg.seq2_out));

  // Loading into a same-config model reproduces identical forwards.
  ModelConfig cfg2 = cfg;
  cfg2.seed = 123;  // different init, then overwritten by the file
  PpgNetModel m2 = build_model(cfg2);
  load_into_model(m2, wf2);
  Rng rng(3);
  std::vector<double> window(1000);
  for (auto& v : window) v = rng.normal();
  CHECK(predict(m2, window) == predict(m, window));
}

TEST_CASE("weights files reject unknown blocks and shape mismatches") {
  TempDir tmp;
  WeightsFile bad;
  bad.arrays.push_back({"NotABlock", "x", {1}, {0.0}});
  CHECK_THROWS_AS(save_weights(bad, tmp.path / "bad.pnw"), DataError);

  // config A -> config B with a different kernel size
  ModelConfig a;
  PpgNetModel ma = build_model(a);
  save_weights(to_weights(ma), tmp.path / "a.pnw");
  ModelConfig b = a;
  b.seq1_kernel = 30;  // same parameter names, different shapes
  PpgNetModel mb = build_model(b);
  const WeightsFile wf = load_weights(tmp.path / "a.pnw");
  CHECK_THROWS_AS(load_into_model(mb, wf), DataError);
}
