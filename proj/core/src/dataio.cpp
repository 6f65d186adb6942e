#include "ppgnet/dataio.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

namespace ppgnet {

namespace fs = std::filesystem;

// ---- plumbing ----

std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

void write_atomic(const fs::path& path,
                  const std::function<void(std::ostream&)>& writer) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + tmp.string());
    writer(out);
    out.flush();
    if (!out) throw DataError("write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw DataError("cannot rename " + tmp.string() + " to " + path.string());
  }
}

// ---- CSV signals ----

std::vector<double> read_signal_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open signal file: " + path.string());
  std::vector<double> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    // trim
    std::size_t b = line.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    std::size_t e = line.find_last_not_of(" \t");
    double v = 0.0;
    auto res = std::from_chars(line.data() + b, line.data() + e + 1, v);
    if (res.ec != std::errc() || res.ptr != line.data() + e + 1)
      throw DataError(path.string() + ":" + std::to_string(lineno) +
                      ": non-numeric sample '" + line + "'");
    out.push_back(v);
  }
  return out;
}

void write_signal_csv(const fs::path& path, const std::vector<double>& values) {
  write_atomic(path, [&](std::ostream& out) {
    char buf[40];
    for (double v : values) {
      const int n = std::snprintf(buf, sizeof buf, "%.17g\n", v);
      out.write(buf, n);
    }
  });
}

// ---- recordings ----

void Recording::validate() const {
  if (ppg_rate_hz <= 0.0 || ecg_rate_hz <= 0.0)
    throw DataError("sample rates must be > 0 (subject " + subject_id + ")");
  if (ppg.empty() || ecg.empty())
    throw DataError("empty signal stream (subject " + subject_id + ")");
  const double tol = 1.0 / std::min(ppg_rate_hz, ecg_rate_hz);
  if (std::abs(ppg_duration_s() - ecg_duration_s()) > tol)
    throw DataError("PPG/ECG duration mismatch for subject " + subject_id + ": " +
                    std::to_string(ppg_duration_s()) + " s vs " +
                    std::to_string(ecg_duration_s()) + " s");
}

namespace {

double parse_rate(const std::string& v, const std::string& key) {
  double r = 0.0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), r);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    throw DataError("manifest: non-numeric " + key + " '" + v + "'");
  return r;
}

}  // namespace

Recording load_recording(const fs::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw DataError("cannot open manifest: " + manifest_path.string());

  std::string subject, ppg_file, ecg_file;
  std::optional<double> ppg_rate, ecg_rate;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      if (line.find_first_not_of(" \t") != std::string::npos)
        throw DataError(manifest_path.string() + ":" + std::to_string(lineno) +
                        ": expected 'key = value'");
      continue;
    }
    auto trim = [](std::string s) {
      const std::size_t b = s.find_first_not_of(" \t");
      if (b == std::string::npos) return std::string();
      const std::size_t e = s.find_last_not_of(" \t");
      return s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key == "subject_id") subject = val;
    else if (key == "ppg_rate_hz") ppg_rate = parse_rate(val, key);
    else if (key == "ecg_rate_hz") ecg_rate = parse_rate(val, key);
    else if (key == "ppg_file") ppg_file = val;
    else if (key == "ecg_file") ecg_file = val;
    else
      throw DataError(manifest_path.string() + ":" + std::to_string(lineno) +
                      ": unknown key '" + key + "'");
  }
  if (subject.empty() || ppg_file.empty() || ecg_file.empty() || !ppg_rate || !ecg_rate)
    throw DataError("manifest misses one of subject_id, ppg_rate_hz, "
                    "ecg_rate_hz, ppg_file, ecg_file: " + manifest_path.string());

  const fs::path dir = manifest_path.parent_path();
  Recording rec;
  rec.subject_id = subject;
  rec.ppg_rate_hz = *ppg_rate;
  rec.ecg_rate_hz = *ecg_rate;
  rec.ppg = read_signal_csv(dir / ppg_file);
  rec.ecg = read_signal_csv(dir / ecg_file);
  rec.validate();
  return rec;
}

void write_recording(const Recording& rec, const fs::path& dir) {
  fs::create_directories(dir);
  write_signal_csv(dir / "ppg.csv", rec.ppg);
  write_signal_csv(dir / "ecg.csv", rec.ecg);
  write_atomic(dir / "manifest.txt", [&](std::ostream& out) {
    out << "subject_id = " << rec.subject_id << "\n";
    char buf[64];
    std::snprintf(buf, sizeof buf, "ppg_rate_hz = %.17g\n", rec.ppg_rate_hz);
    out << buf;
    std::snprintf(buf, sizeof buf, "ecg_rate_hz = %.17g\n", rec.ecg_rate_hz);
    out << buf;
    out << "ppg_file = ppg.csv\n";
    out << "ecg_file = ecg.csv\n";
  });
}

// ---- windowed datasets ----

void WindowedDataset::validate() const {
  std::set<std::pair<std::string, std::uint32_t>> seen;
  for (const Window& w : windows) {
    if (w.samples.size() != samples_per_window)
      throw DataError("window " + w.subject_id + "/" + std::to_string(w.window_index) +
                      " has " + std::to_string(w.samples.size()) + " samples, expected " +
                      std::to_string(samples_per_window));
    if (!(w.label_bpm >= kMinLabelBpm && w.label_bpm <= kMaxLabelBpm))
      throw DataError("label " + std::to_string(w.label_bpm) + " BPM outside [" +
                      std::to_string(kMinLabelBpm) + ", " + std::to_string(kMaxLabelBpm) +
                      "] for " + w.subject_id + "/" + std::to_string(w.window_index));
    if (!seen.emplace(w.subject_id, w.window_index).second)
      throw DataError("duplicate window " + w.subject_id + "/" +
                      std::to_string(w.window_index));
  }
}

void WindowedDataset::add(Window w) {
  if (w.samples.size() != samples_per_window)
    throw DataError("window sample count mismatch");
  if (!(w.label_bpm >= kMinLabelBpm && w.label_bpm <= kMaxLabelBpm))
    throw DataError("label outside physiologic band");
  windows.push_back(std::move(w));  // uniqueness enforced by validate()
}

std::vector<std::string> WindowedDataset::subject_ids() const {
  std::set<std::string> s;
  for (const Window& w : windows) s.insert(w.subject_id);
  return {s.begin(), s.end()};
}

// ---- binary containers ----

namespace {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u16(std::uint16_t v) { le(v); }
  void u32(std::uint32_t v) { le(v); }
  void u64(std::uint64_t v) { le(v); }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    if (s.size() > 0xffff) throw DataError("string too long for container");
    u16(static_cast<std::uint16_t>(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
  }
  const std::vector<char>& bytes() const { return buf_; }

 private:
  template <typename T>
  void le(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i)
      buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::vector<char> buf_;
};

class ByteReader {
 public:
  ByteReader(const std::vector<char>& b, std::string origin)
      : buf_(b), origin_(std::move(origin)) {}
  std::uint8_t u8() { need(1); return static_cast<std::uint8_t>(buf_[pos_++]); }
  std::uint16_t u16() { return le<std::uint16_t>(); }
  std::uint32_t u32() { return le<std::uint32_t>(); }
  std::uint64_t u64() { return le<std::uint64_t>(); }
  double f64() { return std::bit_cast<double>(le<std::uint64_t>()); }
  std::string str() {
    const std::uint16_t n = u16();
    need(n);
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  void expect_end(std::size_t at) const {
    if (at != buf_.size()) throw DataError("trailing bytes in " + origin_);
  }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > buf_.size()) throw DataError("truncated file: " + origin_);
  }
  template <typename T>
  T le() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
      v |= static_cast<T>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += sizeof(T);
    return v;
  }
  const std::vector<char>& buf_;
  std::string origin_;
  std::size_t pos_ = 0;
};

std::vector<char> read_all(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path.string());
  std::vector<char> buf((std::istreambuf_iterator<char>(in)),
                        std::istreambuf_iterator<char>());
  return buf;
}

void write_with_checksum(const fs::path& path, const ByteWriter& w) {
  const std::uint64_t sum = fnv1a64(w.bytes().data(), w.bytes().size());
  write_atomic(path, [&](std::ostream& out) {
    out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
    for (std::size_t i = 0; i < 8; ++i)
      out.put(static_cast<char>((sum >> (8 * i)) & 0xff));
  });
}

std::vector<char> read_with_checksum(const fs::path& path) {
  std::vector<char> buf = read_all(path);
  if (buf.size() < 8) throw DataError("truncated file: " + path.string());
  std::uint64_t stored = 0;
  for (std::size_t i = 0; i < 8; ++i)
    stored |= static_cast<std::uint64_t>(
                  static_cast<unsigned char>(buf[buf.size() - 8 + i])) << (8 * i);
  buf.resize(buf.size() - 8);
  if (fnv1a64(buf.data(), buf.size()) != stored)
    throw DataError("checksum mismatch: " + path.string());
  return buf;
}

constexpr char kDatasetMagic[] = "PPGWDS01";
constexpr char kWeightsMagic[] = "PPGNETW1";

void check_magic(ByteReader& r, const char* magic, const fs::path& path) {
  for (std::size_t i = 0; i < 8; ++i)
    if (r.u8() != static_cast<std::uint8_t>(magic[i]))
      throw DataError("bad magic, not a recognized container: " + path.string());
}

}  // namespace

void save_windowed(const WindowedDataset& d, const fs::path& path) {
  d.validate();
  ByteWriter w;
  for (std::size_t i = 0; i < 8; ++i) w.u8(static_cast<std::uint8_t>(kDatasetMagic[i]));
  w.u32(1);  // version
  w.f64(d.sample_rate_hz);
  w.u32(d.samples_per_window);
  w.u32(static_cast<std::uint32_t>(d.windows.size()));
  for (const Window& win : d.windows) {
    w.str(win.subject_id);
    w.u32(win.window_index);
    w.f64(win.label_bpm);
    for (double v : win.samples) w.f64(v);
  }
  write_with_checksum(path, w);
}

WindowedDataset load_windowed(const fs::path& path) {
  const std::vector<char> buf = read_with_checksum(path);
  ByteReader r(buf, path.string());
  check_magic(r, kDatasetMagic, path);
  const std::uint32_t version = r.u32();
  if (version != 1) throw DataError("unsupported dataset version " + std::to_string(version));
  WindowedDataset d;
  d.sample_rate_hz = r.f64();
  d.samples_per_window = r.u32();
  const std::uint32_t count = r.u32();
  d.windows.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Window win;
    win.subject_id = r.str();
    win.window_index = r.u32();
    win.label_bpm = r.f64();
    win.samples.resize(d.samples_per_window);
    for (auto& v : win.samples) v = r.f64();
    d.windows.push_back(std::move(win));
  }
  r.expect_end(r.pos());
  d.validate();
  return d;
}

const std::vector<std::string> kWeightBlockNames = {
    "Inception", "SeqBlock1", "SeqBlock2", "LSTM1", "LSTM2", "Linear",
    "BatchNormStats"};

void save_weights(const WeightsFile& wf, const fs::path& path) {
  ByteWriter w;
  for (std::size_t i = 0; i < 8; ++i) w.u8(static_cast<std::uint8_t>(kWeightsMagic[i]));
  w.u32(1);  // version
  w.u32(static_cast<std::uint32_t>(wf.arrays.size()));
  for (const NamedArray& a : wf.arrays) {
    if (std::find(kWeightBlockNames.begin(), kWeightBlockNames.end(), a.block) ==
        kWeightBlockNames.end())
      throw DataError("unknown weight block '" + a.block + "'");
    w.str(a.block);
    w.str(a.name);
    w.u8(static_cast<std::uint8_t>(a.shape.size()));
    std::size_t numel = 1;
    for (int d : a.shape) {
      if (d < 0) throw DataError("negative dimension in weights array " + a.name);
      w.u32(static_cast<std::uint32_t>(d));
      numel *= static_cast<std::size_t>(d);
    }
    if (numel != a.values.size())
      throw DataError("shape/value mismatch in weights array " + a.name);
    for (double v : a.values) w.f64(v);
  }
  write_with_checksum(path, w);
}

WeightsFile load_weights(const fs::path& path) {
  const std::vector<char> buf = read_with_checksum(path);
  ByteReader r(buf, path.string());
  check_magic(r, kWeightsMagic, path);
  const std::uint32_t version = r.u32();
  if (version != 1) throw DataError("unsupported weights version " + std::to_string(version));
  WeightsFile wf;
  const std::uint32_t count = r.u32();
  wf.arrays.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedArray a;
    a.block = r.str();
    if (std::find(kWeightBlockNames.begin(), kWeightBlockNames.end(), a.block) ==
        kWeightBlockNames.end())
      throw DataError("unknown weight block '" + a.block + "' in " + path.string());
    a.name = r.str();
    const std::uint8_t ndim = r.u8();
    std::size_t numel = 1;
    for (std::uint8_t d = 0; d < ndim; ++d) {
      a.shape.push_back(static_cast<int>(r.u32()));
      numel *= static_cast<std::size_t>(a.shape.back());
    }
    a.values.resize(numel);
    for (auto& v : a.values) v = r.f64();
    wf.arrays.push_back(std::move(a));
  }
  r.expect_end(r.pos());
  return wf;
}

}  // namespace ppgnet
