#include "ppgnet/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace ppgnet {

using ag::Tensor;

const std::string& block_name(Block b) {
  static const std::array<std::string, 6> names = {
      "Inception", "SeqBlock1", "SeqBlock2", "LSTM1", "LSTM2", "Linear"};
  return names[static_cast<std::size_t>(b)];
}

Block block_from_name(const std::string& name) {
  for (Block b : kAllBlocks)
    if (block_name(b) == name) return b;
  throw std::invalid_argument("unknown block name '" + name + "'");
}

ModelConfig::Derived ModelConfig::derive() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("model config: " + msg); };
  if (step_count < 1 || step_len < 1) fail("step layout must be positive");
  if (inception_kernels.empty() || inception_kernels.size() != inception_channels.size())
    fail("inception kernel/channel lists must be non-empty and equal length");
  for (int k : inception_kernels) if (k < 1) fail("inception kernel < 1");
  for (int c : inception_channels) if (c < 1) fail("inception channels < 1");
  const int inception_out = std::accumulate(inception_channels.begin(),
                                            inception_channels.end(), 0);
  if (inception_out != seq1_in)
    fail("inception branch channels sum to " + std::to_string(inception_out) +
         " but seq block 1 expects " + std::to_string(seq1_in));
  if (seq1_kernel < 1 || seq2_kernel < 1 || seq1_pool < 1 || seq2_pool < 1)
    fail("sequential block kernels and pools must be >= 1");
  if (seq2_in != seq1_out) fail("seq block 2 input must equal seq block 1 output");
  if (lstm1_input != step_len) fail("lstm1 input must equal the step length");
  if (lstm1_hidden < 1 || lstm2_hidden < 1 || lstm1_layers < 1 || lstm2_layers < 1)
    fail("lstm sizes must be >= 1");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) fail("dropout rate must be in [0, 1)");

  Derived d;
  d.window_len = step_count * step_len;
  d.pooled1_len = step_len / seq1_pool;
  d.pooled2_len = d.pooled1_len / seq2_pool;
  if (d.pooled2_len < 1) fail("pooling collapses the step below one sample");
  d.flat = seq2_out * d.pooled2_len;
  d.lstm1_feature = lstm1_layers * lstm1_hidden;
  if (lstm2_input != d.flat + d.lstm1_feature)
    fail("lstm2 input is " + std::to_string(lstm2_input) + " but the derived feature width is " +
         std::to_string(d.flat) + " + " + std::to_string(d.lstm1_feature) + " = " +
         std::to_string(d.flat + d.lstm1_feature));
  if (linear_in != lstm2_hidden) fail("linear input must equal lstm2 hidden size");
  if (linear_out != 1) fail("the head emits a single scalar");
  return d;
}

namespace {

Tensor init_uniform(ag::Shape shape, double bound, Rng& rng) {
  auto n = ag::detail::shape_numel(shape);
  std::vector<double> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return Tensor::from(std::move(shape), std::move(v), true);
}

std::vector<ag::LstmLayerParams> init_lstm(int input, int hidden, int layers,
                                           Rng& rng) {
  std::vector<ag::LstmLayerParams> out;
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (int l = 0; l < layers; ++l) {
    const int d_in = l == 0 ? input : hidden;
    ag::LstmLayerParams p;
    p.w_x = init_uniform({4 * hidden, d_in}, bound, rng);
    p.w_h = init_uniform({4 * hidden, hidden}, bound, rng);
    p.bias = init_uniform({4 * hidden}, bound, rng);
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace

PpgNetModel build_model(const ModelConfig& config) {
  config.derive();  // throws on arithmetic violations
  PpgNetModel m;
  m.config = config;
  Rng rng(config.seed);

  for (std::size_t i = 0; i < config.inception_kernels.size(); ++i) {
    const int k = config.inception_kernels[i];
    const int c = config.inception_channels[i];
    const double bound = 1.0 / std::sqrt(static_cast<double>(k));  // C_in = 1
    m.inception_w.push_back(init_uniform({c, 1, k}, bound, rng));
    m.inception_b.push_back(init_uniform({c}, bound, rng));
  }

  const double b1 = 1.0 / std::sqrt(static_cast<double>(config.seq1_in * config.seq1_kernel));
  m.seq1_w = init_uniform({config.seq1_out, config.seq1_in, config.seq1_kernel}, b1, rng);
  m.seq1_b = init_uniform({config.seq1_out}, b1, rng);
  m.seq1_gamma = Tensor::from({config.seq1_out},
                              std::vector<double>(static_cast<std::size_t>(config.seq1_out), 1.0), true);
  m.seq1_beta = Tensor::zeros({config.seq1_out}, true);
  m.seq1_bn = ag::BatchNormState(config.seq1_out);
  m.seq1_bn.momentum = config.bn_momentum;
  m.seq1_bn.epsilon = config.bn_epsilon;

  const double b2 = 1.0 / std::sqrt(static_cast<double>(config.seq2_in * config.seq2_kernel));
  m.seq2_w = init_uniform({config.seq2_out, config.seq2_in, config.seq2_kernel}, b2, rng);
  m.seq2_b = init_uniform({config.seq2_out}, b2, rng);
  m.seq2_gamma = Tensor::from({config.seq2_out},
                              std::vector<double>(static_cast<std::size_t>(config.seq2_out), 1.0), true);
  m.seq2_beta = Tensor::zeros({config.seq2_out}, true);
  m.seq2_bn = ag::BatchNormState(config.seq2_out);
  m.seq2_bn.momentum = config.bn_momentum;
  m.seq2_bn.epsilon = config.bn_epsilon;

  m.lstm1 = init_lstm(config.lstm1_input, config.lstm1_hidden, config.lstm1_layers, rng);
  m.lstm2 = init_lstm(config.lstm2_input, config.lstm2_hidden, config.lstm2_layers, rng);

  const double bl = 1.0 / std::sqrt(static_cast<double>(config.linear_in));
  m.linear_w = init_uniform({config.linear_out, config.linear_in}, bl, rng);
  m.linear_b = init_uniform({config.linear_out}, bl, rng);
  return m;
}

std::vector<std::pair<std::string, Tensor>> PpgNetModel::named_parameters(Block b) {
  std::vector<std::pair<std::string, Tensor>> out;
  auto lstm_params = [&out](std::vector<ag::LstmLayerParams>& layers) {
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const std::string prefix = "layer" + std::to_string(l);
      out.emplace_back(prefix + ".w_x", layers[l].w_x);
      out.emplace_back(prefix + ".w_h", layers[l].w_h);
      out.emplace_back(prefix + ".bias", layers[l].bias);
    }
  };
  switch (b) {
    case Block::Inception:
      for (std::size_t i = 0; i < inception_w.size(); ++i) {
        out.emplace_back("branch" + std::to_string(i) + ".weight", inception_w[i]);
        out.emplace_back("branch" + std::to_string(i) + ".bias", inception_b[i]);
      }
      break;
    case Block::SeqBlock1:
      out.emplace_back("conv.weight", seq1_w);
      out.emplace_back("conv.bias", seq1_b);
      out.emplace_back("bn.gamma", seq1_gamma);
      out.emplace_back("bn.beta", seq1_beta);
      break;
    case Block::SeqBlock2:
      out.emplace_back("conv.weight", seq2_w);
      out.emplace_back("conv.bias", seq2_b);
      out.emplace_back("bn.gamma", seq2_gamma);
      out.emplace_back("bn.beta", seq2_beta);
      break;
    case Block::Lstm1: lstm_params(lstm1); break;
    case Block::Lstm2: lstm_params(lstm2); break;
    case Block::Linear:
      out.emplace_back("weight", linear_w);
      out.emplace_back("bias", linear_b);
      break;
  }
  return out;
}

std::vector<Tensor> PpgNetModel::trainable_parameters() {
  std::vector<Tensor> out;
  for (Block b : kAllBlocks) {
    if (!is_trainable(b)) continue;
    for (auto& [name, t] : named_parameters(b)) out.push_back(t);
  }
  return out;
}

ag::Tensor forward_batch(PpgNetModel& m, const Tensor& x, Mode mode, Rng* rng) {
  const auto d = m.config.derive();
  if (x.shape().size() != 2 || x.dim(1) != d.window_len)
    throw std::invalid_argument("forward expects [N, " + std::to_string(d.window_len) +
                                "] input, window length mismatch");
  const int N = x.dim(0);
  const int S = m.config.step_count;
  const bool training = mode == Mode::Train;
  if (training && m.config.dropout_rate > 0.0 && rng == nullptr)
    throw std::invalid_argument("training forward with dropout needs an rng");

  // CNN path: fold the steps into the batch, [N, S*len] -> [N*S, 1, len].
  Tensor steps = ag::reshape(x, {N * S, 1, m.config.step_len});

  std::vector<Tensor> branches;
  branches.reserve(m.inception_w.size());
  for (std::size_t i = 0; i < m.inception_w.size(); ++i)
    branches.push_back(ag::conv1d_same(steps, m.inception_w[i], m.inception_b[i]));
  Tensor cnn = ag::concat(branches, 1);

  auto seq_block = [&](const Tensor& in, Tensor& w, Tensor& b, Tensor& gamma,
                       Tensor& beta, ag::BatchNormState& bn, int pool,
                       bool block_trainable) {
    Tensor t = ag::conv1d_same(in, w, b);
    // Frozen blocks keep their running statistics so the features they
    // produce do not drift while other blocks retrain.
    const bool bn_training = training && block_trainable;
    t = ag::batchnorm1d(t, gamma, beta, bn, bn_training, bn_training);
    t = ag::relu(t);
    t = ag::maxpool1d(t, pool);
    if (training && m.config.dropout_rate > 0.0)
      t = ag::dropout(t, m.config.dropout_rate, true, *rng);
    return t;
  };

  cnn = seq_block(cnn, m.seq1_w, m.seq1_b, m.seq1_gamma, m.seq1_beta, m.seq1_bn,
                  m.config.seq1_pool, m.is_trainable(Block::SeqBlock1));
  cnn = seq_block(cnn, m.seq2_w, m.seq2_b, m.seq2_gamma, m.seq2_beta, m.seq2_bn,
                  m.config.seq2_pool, m.is_trainable(Block::SeqBlock2));

  // [N*S, C, L2] -> [S, N, flat]
  Tensor cnn_feat = ag::reshape(cnn, {N, S, d.flat});
  cnn_feat = ag::permute(cnn_feat, {1, 0, 2});

  // Raw-step LSTM path: [N, S, len] -> [S, N, len]
  Tensor lstm1_in = ag::permute(ag::reshape(x, {N, S, m.config.step_len}), {1, 0, 2});
  Tensor h1 = ag::lstm(lstm1_in, m.lstm1, m.config.lstm1_hidden);  // [S, L, N, H]
  Tensor lstm1_feat = ag::reshape(ag::permute(h1, {0, 2, 1, 3}),
                                  {S, N, d.lstm1_feature});

  Tensor fused = ag::concat({cnn_feat, lstm1_feat}, 2);  // [S, N, lstm2_in]
  Tensor h2 = ag::lstm(fused, m.lstm2, m.config.lstm2_hidden);
  Tensor last = ag::slice0(ag::slice0(h2, S - 1), m.config.lstm2_layers - 1);  // [N, H]
  Tensor out = ag::linear(last, m.linear_w, m.linear_b);  // [N, 1]
  return ag::reshape(out, {N});
}

double predict(PpgNetModel& m, std::span<const double> window) {
  const auto d = m.config.derive();
  if (static_cast<int>(window.size()) != d.window_len)
    throw std::invalid_argument("predict expects a window of length " +
                                std::to_string(d.window_len));
  Tensor x = Tensor::from({1, d.window_len},
                          std::vector<double>(window.begin(), window.end()));
  return forward_batch(m, x, Mode::Eval).values()[0];
}

std::vector<double> predict_dataset(PpgNetModel& m, const WindowedDataset& ds,
                                    int batch_size) {
  const auto d = m.config.derive();
  std::vector<double> out;
  out.reserve(ds.windows.size());
  for (std::size_t at = 0; at < ds.windows.size();) {
    const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(batch_size),
                                                ds.windows.size() - at);
    std::vector<double> flat(n * static_cast<std::size_t>(d.window_len));
    for (std::size_t i = 0; i < n; ++i) {
      const auto& w = ds.windows[at + i].samples;
      if (static_cast<int>(w.size()) != d.window_len)
        throw DataError("dataset window length does not match the model input");
      std::copy(w.begin(), w.end(), flat.begin() + static_cast<long>(i) * d.window_len);
    }
    Tensor x = Tensor::from({static_cast<int>(n), d.window_len}, std::move(flat));
    Tensor y = forward_batch(m, x, Mode::Eval);
    out.insert(out.end(), y.values().begin(), y.values().end());
    at += n;
  }
  return out;
}

ParameterCounts count_parameters(PpgNetModel& m) {
  ParameterCounts c;
  for (Block b : kAllBlocks) {
    std::int64_t n = 0;
    for (auto& [name, t] : m.named_parameters(b)) n += t.size();
    c.per_block[static_cast<std::size_t>(b)] = n;
    c.total += n;
    if (m.is_trainable(b)) c.trainable += n;
  }
  return c;
}

void freeze_except(PpgNetModel& m, const std::set<std::string>& blocks) {
  std::array<bool, 6> next{};
  for (const std::string& name : blocks)
    next[static_cast<std::size_t>(block_from_name(name))] = true;
  m.trainable = next;
  for (Block b : kAllBlocks) {
    const bool on = m.is_trainable(b);
    for (auto& [name, t] : m.named_parameters(b)) t.set_requires_grad(on);
  }
}

WeightsFile to_weights(PpgNetModel& m) {
  WeightsFile wf;
  for (Block b : kAllBlocks)
    for (auto& [name, t] : m.named_parameters(b))
      wf.arrays.push_back({block_name(b), name, t.shape(), t.values()});
  auto stats = [&wf](const std::string& name, const std::vector<double>& v) {
    wf.arrays.push_back({"BatchNormStats", name, {static_cast<int>(v.size())}, v});
  };
  stats("seq1.running_mean", m.seq1_bn.running_mean);
  stats("seq1.running_var", m.seq1_bn.running_var);
  stats("seq2.running_mean", m.seq2_bn.running_mean);
  stats("seq2.running_var", m.seq2_bn.running_var);
  return wf;
}

void load_into_model(PpgNetModel& m, const WeightsFile& wf) {
  // Collect the model's expected arrays, then match the file against them.
  std::vector<std::pair<std::string, Tensor>> expect;
  for (Block b : kAllBlocks)
    for (auto& [name, t] : m.named_parameters(b))
      expect.emplace_back(block_name(b) + "/" + name, t);

  std::vector<std::pair<std::string, std::vector<double>*>> stats = {
      {"BatchNormStats/seq1.running_mean", &m.seq1_bn.running_mean},
      {"BatchNormStats/seq1.running_var", &m.seq1_bn.running_var},
      {"BatchNormStats/seq2.running_mean", &m.seq2_bn.running_mean},
      {"BatchNormStats/seq2.running_var", &m.seq2_bn.running_var},
  };

  std::set<std::string> seen;
  for (const NamedArray& a : wf.arrays) {
    const std::string key = a.block + "/" + a.name;
    if (!seen.insert(key).second) throw DataError("duplicate weights array " + key);
    if (a.block == "BatchNormStats") {
      auto it = std::find_if(stats.begin(), stats.end(),
                             [&](const auto& s) { return s.first == key; });
      if (it == stats.end()) throw DataError("unexpected stats array " + key);
      if (a.values.size() != it->second->size())
        throw DataError("shape mismatch for " + key + ": file has " +
                        std::to_string(a.values.size()) + " values, model expects " +
                        std::to_string(it->second->size()));
      if (a.name.find("running_var") != std::string::npos)
        for (double v : a.values)
          if (v < 0.0) throw DataError("negative running variance in " + key);
      *it->second = a.values;
      continue;
    }
    auto it = std::find_if(expect.begin(), expect.end(),
                           [&](const auto& e) { return e.first == key; });
    if (it == expect.end()) throw DataError("unexpected weights array " + key);
    if (a.shape != it->second.shape())
      throw DataError("shape mismatch for " + key +
                      " (saved model was built from a different configuration)");
    it->second.values() = a.values;
  }
  for (const auto& [key, t] : expect)
    if (!seen.count(key)) throw DataError("weights file misses array " + key);
  for (const auto& [key, v] : stats)
    if (!seen.count(key)) throw DataError("weights file misses array " + key);
}

}  // namespace ppgnet
