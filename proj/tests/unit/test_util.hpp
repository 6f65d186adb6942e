#pragma once

#include <memory>
#include <vector>

#include "ppgnet/autograd.hpp"
#include "ppgnet/rng.hpp"

namespace testutil {

using ppgnet::Rng;
using ppgnet::ag::Tensor;

// Reduces an op output to a scalar with fixed coefficients so every output
// element's gradient is exercised.
inline Tensor weighted_mean(const Tensor& x,
                            std::shared_ptr<std::vector<double>> coef) {
  double acc = 0.0;
  for (std::size_t i = 0; i < coef->size(); ++i) acc += x.values()[i] * (*coef)[i];
  const double inv_n = 1.0 / static_cast<double>(coef->size());
  return ppgnet::ag::make_op(
      {1}, {acc * inv_n}, {x},
      [coef, inv_n](ppgnet::ag::detail::Node& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        const double g = self.grad[0] * inv_n;
        for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += g * (*coef)[i];
      });
}

inline Tensor random_tensor(ppgnet::ag::Shape shape, Rng& rng,
                            bool requires_grad = true, double lo = -1.0,
                            double hi = 1.0) {
  auto n = ppgnet::ag::detail::shape_numel(shape);
  std::vector<double> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

inline std::shared_ptr<std::vector<double>> random_coefs(std::int64_t n, Rng& rng) {
  auto c = std::make_shared<std::vector<double>>(static_cast<std::size_t>(n));
  for (auto& x : *c) x = rng.uniform(-1.0, 1.0);
  return c;
}

}  // namespace testutil
