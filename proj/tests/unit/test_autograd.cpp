#include <cmath>
#include <vector>

#include "doctest.h"
#include "ppgnet/autograd.hpp"
#include "ppgnet/gradcheck.hpp"
#include "test_util.hpp"

using namespace ppgnet;
using ag::Tensor;
using testutil::random_coefs;
using testutil::random_tensor;
using testutil::weighted_mean;

TEST_CASE("conv1d with a unit 1-tap kernel is the identity") {
  Tensor x = Tensor::from({1, 1, 6}, {1, -2, 3, -4, 5, -6});
  Tensor w = Tensor::from({1, 1, 1}, {1.0});
  Tensor b = Tensor::from({1}, {0.0});
  Tensor y = ag::conv1d_same(x, w, b);
  for (int i = 0; i < 6; ++i) CHECK(y.values()[i] == x.values()[i]);
}

TEST_CASE("conv1d all-ones kernel shows the zero padding at the edges") {
  Tensor x = Tensor::from({1, 1, 5}, std::vector<double>(5, 1.0));
  Tensor w = Tensor::from({1, 1, 3}, std::vector<double>(3, 1.0));
  Tensor b = Tensor::from({1}, {0.0});
  Tensor y = ag::conv1d_same(x, w, b);
  const std::vector<double> want = {2, 3, 3, 3, 2};
  for (int i = 0; i < 5; ++i) CHECK(y.values()[i] == want[i]);
}

TEST_CASE("conv1d even kernels pad one more on the right") {
  // K=2: pad_left 0, pad_right 1; y[t] = x[t] * w0 + x[t+1] * w1
  Tensor x = Tensor::from({1, 1, 4}, {1, 2, 3, 4});
  Tensor w = Tensor::from({1, 1, 2}, {10, 1});
  Tensor b = Tensor::from({1}, {0.0});
  Tensor y = ag::conv1d_same(x, w, b);
  const std::vector<double> want = {12, 23, 34, 40};
  for (int i = 0; i < 4; ++i) CHECK(y.values()[i] == want[i]);
}

TEST_CASE("batchnorm leaves standardized batches nearly unchanged") {
  // zero-mean, unit-variance data per channel
  std::vector<double> vals = {-1, 1, -1, 1, -1, 1, -1, 1};
  Tensor x = Tensor::from({2, 1, 4}, vals);
  Tensor gamma = Tensor::from({1}, {1.0});
  Tensor beta = Tensor::from({1}, {0.0});
  ag::BatchNormState st(1);
  Tensor y = ag::batchnorm1d(x, gamma, beta, st, true);
  for (std::size_t i = 0; i < vals.size(); ++i)
    CHECK(y.values()[i] == doctest::Approx(vals[i]).epsilon(1e-4));  // epsilon shrink
  CHECK(st.running_mean[0] == doctest::Approx(0.0));
  CHECK(st.running_var[0] == doctest::Approx(0.1 * 8.0 / 7.0 + 0.9 * 1.0));
}

TEST_CASE("batchnorm eval mode applies the running-stats affine map") {
  Tensor x = Tensor::from({1, 2, 2}, {1, 2, 3, 4});
  Tensor gamma = Tensor::from({2}, {2.0, 0.5});
  Tensor beta = Tensor::from({2}, {1.0, -1.0});
  ag::BatchNormState st(2);
  st.running_mean = {0.5, 2.0};
  st.running_var = {4.0, 0.25};
  Tensor y = ag::batchnorm1d(x, gamma, beta, st, false);
  for (int c = 0; c < 2; ++c)
    for (int t = 0; t < 2; ++t) {
      const double xv = x.values()[static_cast<std::size_t>(c * 2 + t)];
      const double want = (xv - st.running_mean[c]) /
                              std::sqrt(st.running_var[c] + st.epsilon) *
                              gamma.values()[c] +
                          beta.values()[c];
      CHECK(y.values()[static_cast<std::size_t>(c * 2 + t)] ==
            doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("batchnorm training rejects single-value channels") {
  Tensor x = Tensor::from({1, 2, 1}, {1, 2});
  Tensor gamma = Tensor::from({2}, {1, 1});
  Tensor beta = Tensor::from({2}, {0, 0});
  ag::BatchNormState st(2);
  CHECK_THROWS_AS(ag::batchnorm1d(x, gamma, beta, st, true), std::invalid_argument);
  CHECK_NOTHROW(ag::batchnorm1d(x, gamma, beta, st, false));
}

TEST_CASE("relu values and gradient") {
  Tensor x = Tensor::from({2}, {-1.0, 2.0}, true);
  Tensor y = ag::relu(x);
  CHECK(y.values()[0] == 0.0);
  CHECK(y.values()[1] == 2.0);
  auto coef = std::make_shared<std::vector<double>>(std::vector<double>{1.0, 1.0});
  weighted_mean(y, coef).backward();
  CHECK(x.grad()[0] == 0.0);
  CHECK(x.grad()[1] == 0.5);  // coef 1 / n 2
}

TEST_CASE("maxpool length floor and first-index tie routing") {
  Rng rng(21);
  Tensor x = random_tensor({1, 1, 31}, rng);
  Tensor y = ag::maxpool1d(x, 4);
  CHECK(y.shape() == ag::Shape{1, 1, 7});

  Tensor t = Tensor::from({1, 1, 4}, {3.0, 3.0, 1.0, 2.0}, true);
  Tensor p = ag::maxpool1d(t, 4);
  CHECK(p.values()[0] == 3.0);
  auto coef = std::make_shared<std::vector<double>>(std::vector<double>{1.0});
  weighted_mean(p, coef).backward();
  CHECK(t.grad()[0] == 1.0);  // first of the tied maxima
  CHECK(t.grad()[1] == 0.0);
}

TEST_CASE("maxpool and relu commute") {
  Rng rng(22);
  for (int rep = 0; rep < 20; ++rep) {
    Tensor x = random_tensor({2, 3, 16}, rng, false, -2.0, 2.0);
    Tensor a = ag::maxpool1d(ag::relu(x), 4);
    Tensor b = ag::relu(ag::maxpool1d(x, 4));
    REQUIRE(a.size() == b.size());
    for (std::int64_t i = 0; i < a.size(); ++i)
      CHECK(a.values()[static_cast<std::size_t>(i)] ==
            b.values()[static_cast<std::size_t>(i)]);
  }
}

TEST_CASE("dropout identities") {
  Rng rng(23);
  Tensor x = random_tensor({50}, rng);
  Rng mask_rng(1);
  Tensor eval_out = ag::dropout(x, 0.5, false, mask_rng);
  Tensor rate0 = ag::dropout(x, 0.0, true, mask_rng);
  for (std::size_t i = 0; i < 50; ++i) {
    CHECK(eval_out.values()[i] == x.values()[i]);
    CHECK(rate0.values()[i] == x.values()[i]);
  }
  // Training mode zeroes some elements and rescales the rest.
  Rng mask_rng2(2);
  Tensor train_out = ag::dropout(x, 0.5, true, mask_rng2);
  int zeros = 0;
  for (std::size_t i = 0; i < 50; ++i) {
    if (train_out.values()[i] == 0.0) ++zeros;
    else CHECK(train_out.values()[i] == doctest::Approx(2.0 * x.values()[i]));
  }
  CHECK(zeros > 5);
  CHECK(zeros < 45);
}

TEST_CASE("lstm with all-zero parameters emits zeros") {
  Tensor x = Tensor::from({3, 2, 4}, std::vector<double>(24, 1.5));
  std::vector<ag::LstmLayerParams> layers(2);
  layers[0] = {Tensor::zeros({8, 4}), Tensor::zeros({8, 2}), Tensor::zeros({8})};
  layers[1] = {Tensor::zeros({8, 2}), Tensor::zeros({8, 2}), Tensor::zeros({8})};
  Tensor h = ag::lstm(x, layers, 2);
  CHECK(h.shape() == ag::Shape{3, 2, 2, 2});
  for (double v : h.values()) CHECK(v == 0.0);
}

TEST_CASE("lstm single cell matches the gate equations evaluated by hand") {
  const double wi = 0.3, wf = -0.2, wg = 0.7, wo = 0.1;
  const double bi = 0.05, bf = 0.02, bg = -0.1, bo = 0.2;
  const double xv = 0.9;
  Tensor x = Tensor::from({1, 1, 1}, {xv});
  std::vector<ag::LstmLayerParams> layers(1);
  layers[0].w_x = Tensor::from({4, 1}, {wi, wf, wg, wo});
  layers[0].w_h = Tensor::from({4, 1}, {0.4, -0.3, 0.2, 0.6});  // unused at t=0
  layers[0].bias = Tensor::from({4}, {bi, bf, bg, bo});
  Tensor h = ag::lstm(x, layers, 1);

  auto sigmoid = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  const double i_gate = sigmoid(wi * xv + bi);
  const double g_gate = std::tanh(wg * xv + bg);
  const double o_gate = sigmoid(wo * xv + bo);
  const double c = i_gate * g_gate;  // f * c_prev vanishes, c_prev = 0
  const double want = o_gate * std::tanh(c);
  CHECK(h.values()[0] == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("mae loss values and subgradient") {
  Tensor p = Tensor::from({3}, {72, 77, 90}, true);
  Tensor t = Tensor::from({3}, {70, 80, 90});
  Tensor loss = ag::mae_loss(p, t);
  CHECK(loss.item() == doctest::Approx(5.0 / 3.0).epsilon(1e-12));
  loss.backward();
  CHECK(p.grad()[0] == doctest::Approx(1.0 / 3.0));
  CHECK(p.grad()[1] == doctest::Approx(-1.0 / 3.0));
  CHECK(p.grad()[2] == 0.0);  // tie contributes zero subgradient

  Tensor same = Tensor::from({2}, {5, 6});
  CHECK(ag::mae_loss(same, same).item() == 0.0);
  CHECK_THROWS_AS(ag::mae_loss(Tensor::from({2}, {1, 2}), Tensor::from({1}, {1})),
                  std::invalid_argument);
}

TEST_CASE("sgd step arithmetic, zero gradients and cleared buffers") {
  Tensor p = Tensor::from({1}, {1.0}, true);
  p.grad()[0] = 0.5;
  std::vector<Tensor> params{p};
  ag::sgd_step(params, 0.02);
  CHECK(p.values()[0] == doctest::Approx(0.99).epsilon(1e-15));
  CHECK(p.grad()[0] == 0.0);

  // zero grad -> bit-identical value
  Tensor q = Tensor::from({1}, {0.123456789}, true);
  q.zero_grad();
  std::vector<Tensor> qs{q};
  ag::sgd_step(qs, 0.02);
  CHECK(q.values()[0] == 0.123456789);
}

TEST_CASE("backward accumulates shared-parameter gradients additively") {
  Rng rng(31);
  Tensor w = random_tensor({2, 1, 3}, rng);
  Tensor b = random_tensor({2}, rng);
  std::vector<Tensor> xs;
  std::vector<std::shared_ptr<std::vector<double>>> coefs;
  for (int s = 0; s < 8; ++s) {
    xs.push_back(random_tensor({1, 1, 10}, rng, false));
    coefs.push_back(random_coefs(2 * 10, rng));
  }

  // Composed: one graph touching w in every step.
  std::vector<Tensor> branches;
  for (int s = 0; s < 8; ++s)
    branches.push_back(weighted_mean(ag::conv1d_same(xs[s], w, b), coefs[s]));
  w.zero_grad();
  b.zero_grad();
  weighted_mean(ag::concat(branches, 0),
                std::make_shared<std::vector<double>>(8, 1.0))
      .backward();
  const std::vector<double> composed_w = w.grad();
  const std::vector<double> composed_b = b.grad();

  // Sum of per-step gradients, each from its own graph. The concat mean
  // divides by 8, so scale to match.
  std::vector<double> sum_w(composed_w.size(), 0.0), sum_b(composed_b.size(), 0.0);
  for (int s = 0; s < 8; ++s) {
    w.zero_grad();
    b.zero_grad();
    weighted_mean(ag::conv1d_same(xs[s], w, b), coefs[s]).backward();
    for (std::size_t i = 0; i < sum_w.size(); ++i) sum_w[i] += w.grad()[i] / 8.0;
    for (std::size_t i = 0; i < sum_b.size(); ++i) sum_b[i] += b.grad()[i] / 8.0;
  }
  for (std::size_t i = 0; i < sum_w.size(); ++i)
    CHECK(std::abs(composed_w[i] - sum_w[i]) < 1e-10);
  for (std::size_t i = 0; i < sum_b.size(); ++i)
    CHECK(std::abs(composed_b[i] - sum_b[i]) < 1e-10);
}

TEST_CASE("gradient suite: every primitive and the composed network pass") {
  const auto entries = ag::run_gradient_suite();
  REQUIRE(!entries.empty());
  for (const auto& e : entries) {
    INFO(e.name, ": max rel err ", e.result.max_rel_err, " tol ", e.result.tolerance);
    CHECK(e.result.pass);
    if (e.name == "linear")  // the dense layer is clean enough for 1e-8
      CHECK(e.result.max_rel_err < 1e-8);
  }
}

TEST_CASE("gradient check flags a corrupted conv backward") {
  Rng rng(41);
  Tensor x = random_tensor({1, 2, 8}, rng);
  Tensor w = random_tensor({2, 2, 3}, rng);
  Tensor b = random_tensor({2}, rng);
  auto coef = random_coefs(2 * 8, rng);

  auto corrupted = [&] {
    Tensor y = ag::conv1d_same(x, w, b);
    // Same values, but the backward scales one gradient path.
    Tensor bad = ag::make_op(y.shape(), y.values(), {y}, [](ag::detail::Node& self) {
      auto& p = *self.parents[0];
      if (!p.requires_grad) return;
      for (std::size_t i = 0; i < p.grad.size(); ++i)
        p.grad[i] += self.grad[i] * (i == 0 ? 1.05 : 1.0);
    });
    return weighted_mean(bad, coef);
  };
  const auto result = ag::check_gradients(corrupted, {x, w, b}, 1e-6);
  CHECK(!result.pass);
}

TEST_CASE("backward on non-scalar or empty tensors is rejected") {
  Tensor v = Tensor::from({2}, {1, 2}, true);
  CHECK_THROWS_AS(v.backward(), std::invalid_argument);
}
