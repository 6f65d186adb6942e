#include <cmath>

#include "ppgnet/gradcheck.hpp"
#include "ppgnet/model.hpp"

// The built-in gradient verification suite: every primitive against
// central differences at 1e-6 relative error, then the composed network
// (all coordinates of a narrow configuration, a sampled subset of the
// default configuration) at 1e-4.
namespace ppgnet::ag {

namespace {

Tensor weighted_mean(const Tensor& x, std::shared_ptr<std::vector<double>> coef) {
  if (coef->size() != x.values().size())
    throw std::invalid_argument("weighted_mean coefficient size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < coef->size(); ++i) acc += x.values()[i] * (*coef)[i];
  const double inv_n = 1.0 / static_cast<double>(coef->size());
  return make_op({1}, {acc * inv_n}, {x}, [coef, inv_n](detail::Node& self) {
    detail::Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    const double g = self.grad[0] * inv_n;
    for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += g * (*coef)[i];
  });
}

Tensor random_tensor(Shape shape, Rng& rng, bool requires_grad = true) {
  auto n = detail::shape_numel(shape);
  std::vector<double> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

std::shared_ptr<std::vector<double>> random_coefs(std::int64_t n, Rng& rng) {
  auto c = std::make_shared<std::vector<double>>(static_cast<std::size_t>(n));
  for (auto& x : *c) x = rng.uniform(-1.0, 1.0);
  return c;
}

// Separates values inside each pooling window so perturbations of size
// `step` cannot flip an argmax.
void separate_pool_ties(std::vector<double>& v, int k, double margin) {
  for (std::size_t w = 0; w + k <= v.size(); w += static_cast<std::size_t>(k))
    for (int a = 0; a < k; ++a)
      for (int b = a + 1; b < k; ++b)
        if (std::abs(v[w + a] - v[w + b]) < margin)
          v[w + b] += (b + 1) * 2.0 * margin;
}

ModelConfig narrow_config() {
  ModelConfig c;
  c.step_count = 4;
  c.step_len = 32;
  c.inception_kernels = {3, 5, 7, 9, 11};
  c.inception_channels = {2, 1, 1, 1, 1};
  c.seq1_kernel = 5; c.seq1_in = 6; c.seq1_out = 8; c.seq1_pool = 4;
  c.seq2_kernel = 5; c.seq2_in = 8; c.seq2_out = 8; c.seq2_pool = 4;
  c.lstm1_input = 32; c.lstm1_hidden = 6; c.lstm1_layers = 2;
  c.lstm2_input = 8 * 2 + 2 * 6; c.lstm2_hidden = 6; c.lstm2_layers = 2;
  c.linear_in = 6; c.linear_out = 1;
  c.dropout_rate = 0.0;
  c.seed = 11;
  return c;
}

GradCheckResult check_network(ModelConfig config, int batch,
                              int max_coords_per_tensor) {
  config.dropout_rate = 0.0;  // differencing needs a deterministic forward
  PpgNetModel model = build_model(config);
  const auto derived = config.derive();
  Rng data_rng(99);
  Tensor x = random_tensor({batch, derived.window_len}, data_rng, false);
  std::vector<double> targets(static_cast<std::size_t>(batch));
  for (auto& t : targets) t = data_rng.uniform(60.0, 120.0);
  Tensor y = Tensor::from({batch}, std::move(targets));

  std::vector<Tensor> wrt;
  for (Block b : kAllBlocks)
    for (auto& [name, t] : model.named_parameters(b)) wrt.push_back(t);

  auto make_loss = [&model, &x, &y]() {
    return mae_loss(forward_batch(model, x, Mode::Train), y);
  };
  return check_gradients(make_loss, wrt, 1e-4, 1e-6, max_coords_per_tensor);
}

}  // namespace

std::vector<SuiteEntry> run_gradient_suite() {
  std::vector<SuiteEntry> entries;
  const double tol = 1e-6;

  {
    Rng rng(1);
    Tensor x = random_tensor({2, 3, 11}, rng);
    Tensor w = random_tensor({4, 3, 5}, rng);
    Tensor b = random_tensor({4}, rng);
    auto coef = random_coefs(2 * 4 * 11, rng);
    auto f = [&] { return weighted_mean(conv1d_same(x, w, b), coef); };
    entries.push_back({"conv1d (odd kernel)", check_gradients(f, {x, w, b}, tol)});
  }
  {
    Rng rng(2);
    Tensor x = random_tensor({2, 2, 9}, rng);
    Tensor w = random_tensor({3, 2, 6}, rng);  // even kernel, asymmetric pad
    Tensor b = random_tensor({3}, rng);
    auto coef = random_coefs(2 * 3 * 9, rng);
    auto f = [&] { return weighted_mean(conv1d_same(x, w, b), coef); };
    entries.push_back({"conv1d (even kernel)", check_gradients(f, {x, w, b}, tol)});
  }
  {
    Rng rng(3);
    Tensor x = random_tensor({2, 3, 4}, rng);
    Tensor gamma = random_tensor({3}, rng);
    Tensor beta = random_tensor({3}, rng);
    auto coef = random_coefs(2 * 3 * 4, rng);
    auto state = std::make_shared<BatchNormState>(3);
    auto f = [&, state] {
      return weighted_mean(batchnorm1d(x, gamma, beta, *state, true, false), coef);
    };
    entries.push_back({"batchnorm (training)", check_gradients(f, {x, gamma, beta}, tol)});
  }
  {
    Rng rng(4);
    Tensor x = random_tensor({40}, rng);
    nudge_away_from_zero(x.values(), 1e-3);
    auto coef = random_coefs(40, rng);
    auto f = [&] { return weighted_mean(relu(x), coef); };
    entries.push_back({"relu", check_gradients(f, {x}, tol)});
  }
  {
    Rng rng(5);
    Tensor x = random_tensor({2, 3, 8}, rng);
    separate_pool_ties(x.values(), 4, 1e-3);
    auto coef = random_coefs(2 * 3 * 2, rng);
    auto f = [&] { return weighted_mean(maxpool1d(x, 4), coef); };
    entries.push_back({"maxpool", check_gradients(f, {x}, tol)});
  }
  {
    Rng rng(6);
    Tensor x = random_tensor({30}, rng);
    auto coef = random_coefs(30, rng);
    auto f = [&] {
      Rng mask_rng(77);  // same mask on every evaluation
      return weighted_mean(dropout(x, 0.3, true, mask_rng), coef);
    };
    entries.push_back({"dropout (fixed mask)", check_gradients(f, {x}, tol)});
  }
  {
    Rng rng(7);
    Tensor x = random_tensor({3, 5}, rng);
    Tensor w = random_tensor({4, 5}, rng);
    Tensor b = random_tensor({4}, rng);
    auto coef = random_coefs(3 * 4, rng);
    auto f = [&] { return weighted_mean(linear(x, w, b), coef); };
    entries.push_back({"linear", check_gradients(f, {x, w, b}, tol)});
  }
  {
    Rng rng(8);
    Tensor a = random_tensor({2, 3, 4}, rng);
    Tensor b = random_tensor({2, 2, 4}, rng);
    auto coef = random_coefs(2 * 5 * 4, rng);
    auto f = [&] { return weighted_mean(concat({a, b}, 1), coef); };
    entries.push_back({"concat", check_gradients(f, {a, b}, tol)});
  }
  {
    Rng rng(9);
    Tensor a = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({3, 4}, rng);
    auto coef = random_coefs(8, rng);
    auto f = [&, coef] {
      Tensor s = stack0({a, b});         // [2, 3, 4]
      Tensor p = permute(s, {1, 0, 2});  // [3, 2, 4]
      Tensor r = reshape(slice0(p, 1), {8});
      return weighted_mean(r, coef);
    };
    entries.push_back({"stack/permute/slice/reshape", check_gradients(f, {a, b}, tol)});
  }
  {
    Rng rng(10);
    const int T = 3, N = 2, D = 5, H = 4;
    Tensor x = random_tensor({T, N, D}, rng);
    std::vector<LstmLayerParams> layers(2);
    layers[0].w_x = random_tensor({4 * H, D}, rng);
    layers[0].w_h = random_tensor({4 * H, H}, rng);
    layers[0].bias = random_tensor({4 * H}, rng);
    layers[1].w_x = random_tensor({4 * H, H}, rng);
    layers[1].w_h = random_tensor({4 * H, H}, rng);
    layers[1].bias = random_tensor({4 * H}, rng);
    auto coef = random_coefs(T * 2 * N * H, rng);
    auto f = [&] { return weighted_mean(lstm(x, layers, H), coef); };
    std::vector<Tensor> wrt{x};
    for (auto& l : layers) { wrt.push_back(l.w_x); wrt.push_back(l.w_h); wrt.push_back(l.bias); }
    entries.push_back({"lstm (2 layers)", check_gradients(f, wrt, tol)});
  }
  {
    Rng rng(11);
    Tensor pred = random_tensor({12}, rng);
    Tensor target = random_tensor({12}, rng);
    for (std::size_t i = 0; i < 12; ++i) {  // keep |pred - target| off the kink
      double d = pred.values()[i] - target.values()[i];
      if (std::abs(d) < 1e-3) pred.values()[i] += d >= 0.0 ? 1e-3 : -1e-3;
    }
    auto f = [&] { return mae_loss(pred, target); };
    entries.push_back({"mae_loss", check_gradients(f, {pred, target}, tol)});
  }

  entries.push_back({"network (narrow, all coordinates)",
                     check_network(narrow_config(), 2, -1)});
  entries.push_back({"network (default, sampled coordinates)",
                     check_network(ModelConfig{}, 2, 3)});
  return entries;
}

}  // namespace ppgnet::ag
