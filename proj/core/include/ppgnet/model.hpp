#pragma once

#include <array>
#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "ppgnet/autograd.hpp"
#include "ppgnet/dataio.hpp"

namespace ppgnet {

enum class Block { Inception, SeqBlock1, SeqBlock2, Lstm1, Lstm2, Linear };
constexpr std::array<Block, 6> kAllBlocks = {
    Block::Inception, Block::SeqBlock1, Block::SeqBlock2,
    Block::Lstm1, Block::Lstm2, Block::Linear};

const std::string& block_name(Block b);
Block block_from_name(const std::string& name);  // throws on unknown names

// Architecture hyperparameters. Defaults give the full network: five
// parallel same-padded convolutions concatenated to 16 channels, two
// conv/BN/ReLU/pool/dropout blocks, a two-layer LSTM over the raw
// 1-second steps, a second two-layer LSTM over the concatenated CNN+LSTM
// step features, and a scalar head.
struct ModelConfig {
  int step_count = 8;
  int step_len = 125;

  std::vector<int> inception_kernels = {5, 20, 40, 60, 80};
  std::vector<int> inception_channels = {4, 3, 3, 3, 3};

  int seq1_kernel = 40, seq1_in = 16, seq1_out = 32, seq1_pool = 4;
  int seq2_kernel = 60, seq2_in = 32, seq2_out = 32, seq2_pool = 4;

  int lstm1_input = 125, lstm1_hidden = 80, lstm1_layers = 2;
  int lstm2_input = 384, lstm2_hidden = 80, lstm2_layers = 2;

  int linear_in = 80, linear_out = 1;

  double dropout_rate = 0.1;
  double bn_momentum = 0.1;
  double bn_epsilon = 1e-5;
  std::uint64_t seed = 1;

  struct Derived {
    int window_len;      // step_count * step_len
    int pooled1_len;     // step_len / seq1_pool
    int pooled2_len;     // pooled1 / seq2_pool
    int flat;            // seq2_out * pooled2_len
    int lstm1_feature;   // lstm1_layers * lstm1_hidden
  };
  // Validates the arithmetic that ties the blocks together and throws
  // std::invalid_argument on any violation (e.g. branch channels not
  // summing to seq1_in, or lstm2_input != flat + lstm1_feature).
  Derived derive() const;
};

struct PpgNetModel {
  ModelConfig config;

  std::vector<ag::Tensor> inception_w, inception_b;  // per branch
  ag::Tensor seq1_w, seq1_b, seq1_gamma, seq1_beta;
  ag::BatchNormState seq1_bn;
  ag::Tensor seq2_w, seq2_b, seq2_gamma, seq2_beta;
  ag::BatchNormState seq2_bn;
  std::vector<ag::LstmLayerParams> lstm1, lstm2;
  ag::Tensor linear_w, linear_b;

  std::array<bool, 6> trainable{true, true, true, true, true, true};

  bool is_trainable(Block b) const { return trainable[static_cast<std::size_t>(b)]; }
  std::vector<std::pair<std::string, ag::Tensor>> named_parameters(Block b);
  std::vector<ag::Tensor> trainable_parameters();
};

// Seeded build; weights uniform in +-1/sqrt(fan_in) (LSTM tensors use the
// hidden size as fan-in, biases inherit their layer's bound), gamma 1,
// beta 0, running stats (0, 1). All blocks start trainable.
PpgNetModel build_model(const ModelConfig& config);

enum class Mode { Train, Eval };

// x [N, window_len] -> predictions [N]. Train mode uses batch statistics
// in trainable BN blocks (frozen blocks keep using their running stats so
// a frozen feature extractor stays fixed) and consumes `rng` for dropout
// masks. Eval mode is a pure function of (weights, input). Predictions
// are not invariant to input scaling: the raw steps feed LSTM1 directly,
// and batch norm only standardizes the convolutional path.
ag::Tensor forward_batch(PpgNetModel& model, const ag::Tensor& x, Mode mode,
                         Rng* rng = nullptr);

// Single window -> BPM, eval mode.
double predict(PpgNetModel& model, std::span<const double> window);

// Eval-mode predictions over a dataset, batched internally.
std::vector<double> predict_dataset(PpgNetModel& model, const WindowedDataset& d,
                                    int batch_size = 256);

struct ParameterCounts {
  std::array<std::int64_t, 6> per_block{};
  std::int64_t total = 0;
  std::int64_t trainable = 0;

  std::int64_t block(Block b) const { return per_block[static_cast<std::size_t>(b)]; }
};
ParameterCounts count_parameters(PpgNetModel& model);

// Marks exactly the named blocks trainable; every other parameter is
// excluded from gradient computation and optimizer updates. Unknown block
// names throw.
void freeze_except(PpgNetModel& model, const std::set<std::string>& blocks);

// Weights-file round trip. Loading checks every array's block, name and
// shape against the model's configuration.
WeightsFile to_weights(PpgNetModel& model);
void load_into_model(PpgNetModel& model, const WeightsFile& weights);

}  // namespace ppgnet
