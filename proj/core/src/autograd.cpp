#include "ppgnet/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <unordered_set>

namespace ppgnet::ag {

namespace detail {

std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) {
    if (d < 0) throw std::invalid_argument("negative dimension in shape");
    n *= d;
  }
  return n;
}

}  // namespace detail

using detail::Node;

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value.assign(static_cast<std::size_t>(detail::shape_numel(shape)), 0.0);
  n->shape = std::move(shape);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (detail::shape_numel(shape) != static_cast<std::int64_t>(values.size()))
    throw std::invalid_argument("value count does not match shape");
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return from({1}, {v}, requires_grad);
}

double Tensor::item() const {
  if (size() != 1) throw std::invalid_argument("item() on non-scalar tensor");
  return node_->value[0];
}

void Tensor::backward() const {
  if (!node_) throw std::invalid_argument("backward() on empty tensor");
  if (size() != 1) throw std::invalid_argument("backward() requires a scalar");
  if (!node_->requires_grad) return;  // nothing tracked below this node

  // Iterative post-order DFS; reverse of the order is a valid topological
  // order for gradient propagation.
  std::vector<Node*> topo;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      topo.push_back(node);
      stack.pop_back();
    }
  }

  node_->ensure_grad();
  node_->grad[0] += 1.0;
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    Node* n = *it;
    if (!n->backward) continue;
    for (auto& p : n->parents)
      if (p->requires_grad) p->ensure_grad();
    n->backward(*n);
  }
}

Tensor make_op(Shape shape, std::vector<double> value,
               std::vector<Tensor> parents,
               std::function<void(Node&)> backward) {
  if (detail::shape_numel(shape) != static_cast<std::int64_t>(value.size()))
    throw std::invalid_argument("op output does not match declared shape");
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  for (const auto& p : parents) {
    if (!p.defined()) throw std::invalid_argument("op with undefined parent");
    n->requires_grad = n->requires_grad || p.requires_grad();
    n->parents.push_back(p.node());
  }
  if (n->requires_grad) n->backward = std::move(backward);
  return Tensor(std::move(n));
}

// ---- elementwise and structural ops ----

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.values().size());
  const auto& xv = x.values();
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  return make_op(x.shape(), std::move(out), {x}, [](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    for (std::size_t i = 0; i < p.value.size(); ++i)
      if (p.value[i] > 0.0) p.grad[i] += self.grad[i];
  });
}

Tensor maxpool1d(const Tensor& x, int k) {
  if (x.shape().size() != 3) throw std::invalid_argument("maxpool1d expects [N, C, L]");
  if (k < 1) throw std::invalid_argument("maxpool1d kernel must be >= 1");
  const int N = x.dim(0), C = x.dim(1), L = x.dim(2);
  const int Lo = L / k;
  std::vector<double> out(static_cast<std::size_t>(N) * C * Lo);
  auto argmax = std::make_shared<std::vector<std::int32_t>>(out.size());
  const double* xv = x.values().data();
  for (int nc = 0; nc < N * C; ++nc) {
    const double* row = xv + static_cast<std::size_t>(nc) * L;
    double* orow = out.data() + static_cast<std::size_t>(nc) * Lo;
    std::int32_t* arow = argmax->data() + static_cast<std::size_t>(nc) * Lo;
    for (int t = 0; t < Lo; ++t) {
      int best = t * k;
      double bv = row[best];
      for (int j = 1; j < k; ++j) {
        const double v = row[t * k + j];
        if (v > bv) { bv = v; best = t * k + j; }  // first index wins ties
      }
      orow[t] = bv;
      arow[t] = best;
    }
  }
  return make_op({N, C, Lo}, std::move(out), {x},
                 [argmax, L, Lo](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    const std::size_t rows = self.value.size() / static_cast<std::size_t>(Lo);
    for (std::size_t nc = 0; nc < rows; ++nc)
      for (int t = 0; t < Lo; ++t) {
        const std::size_t oi = nc * Lo + t;
        p.grad[nc * L + (*argmax)[oi]] += self.grad[oi];
      }
  });
}

Tensor dropout(const Tensor& x, double rate, bool training, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0)
    throw std::invalid_argument("dropout rate must be in [0, 1)");
  if (!training || rate == 0.0) {
    // Exact identity; still a graph node so gradients flow unchanged.
    return make_op(x.shape(), x.values(), {x}, [](Node& self) {
      Node& p = *self.parents[0];
      if (!p.requires_grad) return;
      for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += self.grad[i];
    });
  }
  const double scale = 1.0 / (1.0 - rate);
  auto mask = std::make_shared<std::vector<double>>(x.values().size());
  std::vector<double> out(x.values().size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double m = rng.uniform() >= rate ? scale : 0.0;
    (*mask)[i] = m;
    out[i] = x.values()[i] * m;
  }
  return make_op(x.shape(), std::move(out), {x}, [mask](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    for (std::size_t i = 0; i < p.grad.size(); ++i)
      p.grad[i] += self.grad[i] * (*mask)[i];
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.shape().size() != 2 || w.shape().size() != 2 || b.shape().size() != 1)
    throw std::invalid_argument("linear expects x [N,Din], w [Dout,Din], b [Dout]");
  const int N = x.dim(0), Din = x.dim(1), Dout = w.dim(0);
  if (w.dim(1) != Din || b.dim(0) != Dout)
    throw std::invalid_argument("linear shape mismatch");
  std::vector<double> out(static_cast<std::size_t>(N) * Dout);
  const double* xv = x.values().data();
  const double* wv = w.values().data();
  const double* bv = b.values().data();
  for (int n = 0; n < N; ++n)
    for (int o = 0; o < Dout; ++o) {
      const double* xr = xv + static_cast<std::size_t>(n) * Din;
      const double* wr = wv + static_cast<std::size_t>(o) * Din;
      double acc = 0.0;
      for (int i = 0; i < Din; ++i) acc += xr[i] * wr[i];
      out[static_cast<std::size_t>(n) * Dout + o] = acc + bv[o];
    }
  return make_op({N, Dout}, std::move(out), {x, w, b},
                 [N, Din, Dout](Node& self) {
    Node& xp = *self.parents[0];
    Node& wp = *self.parents[1];
    Node& bp = *self.parents[2];
    const double* g = self.grad.data();
    if (xp.requires_grad) {
      for (int n = 0; n < N; ++n)
        for (int o = 0; o < Dout; ++o) {
          const double gv = g[static_cast<std::size_t>(n) * Dout + o];
          const double* wr = wp.value.data() + static_cast<std::size_t>(o) * Din;
          double* xg = xp.grad.data() + static_cast<std::size_t>(n) * Din;
          for (int i = 0; i < Din; ++i) xg[i] += gv * wr[i];
        }
    }
    if (wp.requires_grad) {
      for (int o = 0; o < Dout; ++o)
        for (int n = 0; n < N; ++n) {
          const double gv = g[static_cast<std::size_t>(n) * Dout + o];
          const double* xr = xp.value.data() + static_cast<std::size_t>(n) * Din;
          double* wg = wp.grad.data() + static_cast<std::size_t>(o) * Din;
          for (int i = 0; i < Din; ++i) wg[i] += gv * xr[i];
        }
    }
    if (bp.requires_grad) {
      for (int n = 0; n < N; ++n)
        for (int o = 0; o < Dout; ++o)
          bp.grad[o] += g[static_cast<std::size_t>(n) * Dout + o];
    }
  });
}

namespace {

// Row-block view of a tensor: product of dims before `axis` (outer), the
// axis itself, and the product after (inner).
struct AxisView {
  std::int64_t outer, axis, inner;
};

AxisView axis_view(const Shape& s, int axis) {
  AxisView v{1, s[static_cast<std::size_t>(axis)], 1};
  for (int i = 0; i < axis; ++i) v.outer *= s[static_cast<std::size_t>(i)];
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < s.size(); ++i)
    v.inner *= s[i];
  return v;
}

}  // namespace

Tensor concat(const std::vector<Tensor>& xs, int axis) {
  if (xs.empty()) throw std::invalid_argument("concat of zero tensors");
  const Shape& s0 = xs[0].shape();
  if (axis < 0 || axis >= static_cast<int>(s0.size()))
    throw std::invalid_argument("concat axis out of range");
  int total_axis = 0;
  for (const auto& x : xs) {
    if (x.shape().size() != s0.size())
      throw std::invalid_argument("concat rank mismatch");
    for (std::size_t i = 0; i < s0.size(); ++i)
      if (static_cast<int>(i) != axis && x.shape()[i] != s0[i])
        throw std::invalid_argument("concat shape mismatch off the join axis");
    total_axis += x.shape()[static_cast<std::size_t>(axis)];
  }
  Shape out_shape = s0;
  out_shape[static_cast<std::size_t>(axis)] = total_axis;
  const AxisView ov = axis_view(out_shape, axis);
  std::vector<double> out(static_cast<std::size_t>(ov.outer * ov.axis * ov.inner));
  std::int64_t at = 0;
  for (const auto& x : xs) {
    const AxisView xv = axis_view(x.shape(), axis);
    const double* src = x.values().data();
    for (std::int64_t o = 0; o < xv.outer; ++o)
      std::memcpy(out.data() + (o * ov.axis + at) * ov.inner,
                  src + o * xv.axis * xv.inner,
                  static_cast<std::size_t>(xv.axis * xv.inner) * sizeof(double));
    at += xv.axis;
  }
  return make_op(std::move(out_shape), std::move(out), xs,
                 [axis](Node& self) {
    const AxisView ov = axis_view(self.shape, axis);
    std::int64_t at = 0;
    for (auto& pp : self.parents) {
      Node& p = *pp;
      const AxisView pv = axis_view(p.shape, axis);
      if (p.requires_grad) {
        for (std::int64_t o = 0; o < pv.outer; ++o) {
          const double* g = self.grad.data() + (o * ov.axis + at) * ov.inner;
          double* pg = p.grad.data() + o * pv.axis * pv.inner;
          const std::int64_t n = pv.axis * pv.inner;
          for (std::int64_t i = 0; i < n; ++i) pg[i] += g[i];
        }
      }
      at += pv.axis;
    }
  });
}

Tensor stack0(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw std::invalid_argument("stack0 of zero tensors");
  const Shape& s0 = xs[0].shape();
  const std::int64_t step = detail::shape_numel(s0);
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(step) * xs.size());
  for (const auto& x : xs) {
    if (x.shape() != s0) throw std::invalid_argument("stack0 shape mismatch");
    out.insert(out.end(), x.values().begin(), x.values().end());
  }
  Shape out_shape;
  out_shape.push_back(static_cast<int>(xs.size()));
  out_shape.insert(out_shape.end(), s0.begin(), s0.end());
  return make_op(std::move(out_shape), std::move(out), xs, [step](Node& self) {
    for (std::size_t t = 0; t < self.parents.size(); ++t) {
      Node& p = *self.parents[t];
      if (!p.requires_grad) continue;
      const double* g = self.grad.data() + static_cast<std::int64_t>(t) * step;
      for (std::int64_t i = 0; i < step; ++i) p.grad[i] += g[i];
    }
  });
}

Tensor slice0(const Tensor& x, int index) {
  if (x.shape().empty()) throw std::invalid_argument("slice0 on a scalar");
  const int d0 = x.dim(0);
  if (index < 0 || index >= d0) throw std::invalid_argument("slice0 index out of range");
  Shape out_shape(x.shape().begin() + 1, x.shape().end());
  const std::int64_t step = detail::shape_numel(out_shape);
  std::vector<double> out(x.values().begin() + index * step,
                          x.values().begin() + (index + 1) * step);
  return make_op(std::move(out_shape), std::move(out), {x},
                 [index, step](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    double* pg = p.grad.data() + static_cast<std::int64_t>(index) * step;
    for (std::int64_t i = 0; i < step; ++i) pg[i] += self.grad[i];
  });
}

namespace {

void permute_copy(const Shape& in_shape, const std::vector<int>& perm,
                  const double* src, double* dst) {
  const int rank = static_cast<int>(in_shape.size());
  std::vector<std::int64_t> in_stride(static_cast<std::size_t>(rank), 1);
  for (int i = rank - 2; i >= 0; --i)
    in_stride[i] = in_stride[i + 1] * in_shape[i + 1];
  Shape out_shape(static_cast<std::size_t>(rank));
  for (int i = 0; i < rank; ++i) out_shape[i] = in_shape[perm[i]];
  std::vector<std::int64_t> idx(static_cast<std::size_t>(rank), 0);
  const std::int64_t n = detail::shape_numel(in_shape);
  for (std::int64_t o = 0; o < n; ++o) {
    std::int64_t src_off = 0;
    for (int i = 0; i < rank; ++i) src_off += idx[i] * in_stride[perm[i]];
    dst[o] = src[src_off];
    for (int i = rank - 1; i >= 0; --i) {
      if (++idx[i] < out_shape[i]) break;
      idx[i] = 0;
    }
  }
}

}  // namespace

Tensor permute(const Tensor& x, const std::vector<int>& perm) {
  const int rank = static_cast<int>(x.shape().size());
  if (static_cast<int>(perm.size()) != rank)
    throw std::invalid_argument("permute rank mismatch");
  std::vector<bool> seen(static_cast<std::size_t>(rank), false);
  for (int p : perm) {
    if (p < 0 || p >= rank || seen[static_cast<std::size_t>(p)])
      throw std::invalid_argument("permute is not a permutation");
    seen[static_cast<std::size_t>(p)] = true;
  }
  Shape out_shape(static_cast<std::size_t>(rank));
  for (int i = 0; i < rank; ++i) out_shape[i] = x.dim(perm[i]);
  std::vector<double> out(x.values().size());
  permute_copy(x.shape(), perm, x.values().data(), out.data());
  return make_op(std::move(out_shape), std::move(out), {x},
                 [perm](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    // Inverse permutation maps output grads back onto the input layout.
    std::vector<int> inv(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i)
      inv[static_cast<std::size_t>(perm[i])] = static_cast<int>(i);
    std::vector<double> tmp(self.grad.size());
    permute_copy(self.shape, inv, self.grad.data(), tmp.data());
    for (std::size_t i = 0; i < tmp.size(); ++i) p.grad[i] += tmp[i];
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (detail::shape_numel(shape) != x.size())
    throw std::invalid_argument("reshape changes element count");
  return make_op(std::move(shape), x.values(), {x}, [](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += self.grad[i];
  });
}

// ---- batch normalization ----

Tensor batchnorm1d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                   BatchNormState& state, bool training,
                   bool update_running_stats) {
  if (x.shape().size() != 3) throw std::invalid_argument("batchnorm1d expects [N, C, L]");
  const int N = x.dim(0), C = x.dim(1), L = x.dim(2);
  if (gamma.dim(0) != C || beta.dim(0) != C || state.channels() != C)
    throw std::invalid_argument("batchnorm1d channel mismatch");
  const std::int64_t m = static_cast<std::int64_t>(N) * L;
  const double eps = state.epsilon;
  const double* xv = x.values().data();
  const double* gv = gamma.values().data();
  const double* bv = beta.values().data();

  std::vector<double> out(x.values().size());
  auto mean = std::make_shared<std::vector<double>>(static_cast<std::size_t>(C));
  auto inv_std = std::make_shared<std::vector<double>>(static_cast<std::size_t>(C));

  if (training) {
    if (m <= 1)
      throw std::invalid_argument("batchnorm1d training needs more than one value per channel");
    for (int c = 0; c < C; ++c) {
      double s = 0.0;
      for (int n = 0; n < N; ++n) {
        const double* row = xv + (static_cast<std::size_t>(n) * C + c) * L;
        for (int t = 0; t < L; ++t) s += row[t];
      }
      const double mu = s / static_cast<double>(m);
      double sq = 0.0;
      for (int n = 0; n < N; ++n) {
        const double* row = xv + (static_cast<std::size_t>(n) * C + c) * L;
        for (int t = 0; t < L; ++t) {
          const double d = row[t] - mu;
          sq += d * d;
        }
      }
      const double var = sq / static_cast<double>(m);  // biased, used for normalization
      (*mean)[c] = mu;
      (*inv_std)[c] = 1.0 / std::sqrt(var + eps);
      if (update_running_stats) {
        const double unbiased = sq / static_cast<double>(m - 1);
        state.running_mean[c] = (1.0 - state.momentum) * state.running_mean[c] + state.momentum * mu;
        state.running_var[c] = (1.0 - state.momentum) * state.running_var[c] + state.momentum * unbiased;
      }
    }
  } else {
    for (int c = 0; c < C; ++c) {
      (*mean)[c] = state.running_mean[c];
      (*inv_std)[c] = 1.0 / std::sqrt(state.running_var[c] + eps);
    }
  }

  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const double mu = (*mean)[c], is = (*inv_std)[c];
      const double g = gv[c], be = bv[c];
      const double* row = xv + (static_cast<std::size_t>(n) * C + c) * L;
      double* orow = out.data() + (static_cast<std::size_t>(n) * C + c) * L;
      for (int t = 0; t < L; ++t) orow[t] = (row[t] - mu) * is * g + be;
    }

  return make_op(x.shape(), std::move(out), {x, gamma, beta},
                 [mean, inv_std, training, N, C, L](Node& self) {
    Node& xp = *self.parents[0];
    Node& gp = *self.parents[1];
    Node& bp = *self.parents[2];
    const std::int64_t m = static_cast<std::int64_t>(N) * L;
    const double* g = self.grad.data();
    const double* xv = xp.value.data();

    for (int c = 0; c < C; ++c) {
      const double mu = (*mean)[c], is = (*inv_std)[c];
      double sum_g = 0.0, sum_gx = 0.0;  // sums of dy and dy * xhat
      for (int n = 0; n < N; ++n) {
        const std::size_t off = (static_cast<std::size_t>(n) * C + c) * L;
        for (int t = 0; t < L; ++t) {
          const double gy = g[off + t];
          sum_g += gy;
          sum_gx += gy * (xv[off + t] - mu) * is;
        }
      }
      if (bp.requires_grad) bp.grad[c] += sum_g;
      if (gp.requires_grad) gp.grad[c] += sum_gx;
      if (xp.requires_grad) {
        const double gamma_is = gp.value[c] * is;
        if (training) {
          const double mg = sum_g / static_cast<double>(m);
          const double mgx = sum_gx / static_cast<double>(m);
          for (int n = 0; n < N; ++n) {
            const std::size_t off = (static_cast<std::size_t>(n) * C + c) * L;
            for (int t = 0; t < L; ++t) {
              const double xhat = (xv[off + t] - mu) * is;
              xp.grad[off + t] += gamma_is * (g[off + t] - mg - xhat * mgx);
            }
          }
        } else {
          for (int n = 0; n < N; ++n) {
            const std::size_t off = (static_cast<std::size_t>(n) * C + c) * L;
            for (int t = 0; t < L; ++t) xp.grad[off + t] += gamma_is * g[off + t];
          }
        }
      }
    }
  });
}

Tensor mae_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape().size() != 1 || target.shape().size() != 1)
    throw std::invalid_argument("mae_loss expects rank-1 tensors");
  const int N = pred.dim(0);
  if (target.dim(0) != N) throw std::invalid_argument("mae_loss length mismatch");
  if (N == 0) throw std::invalid_argument("mae_loss on empty tensors");
  double acc = 0.0;
  for (int i = 0; i < N; ++i) acc += std::abs(pred.values()[i] - target.values()[i]);
  return make_op({1}, {acc / N}, {pred, target}, [N](Node& self) {
    Node& pp = *self.parents[0];
    Node& tp = *self.parents[1];
    const double g = self.grad[0] / N;
    for (int i = 0; i < N; ++i) {
      const double d = pp.value[i] - tp.value[i];
      const double s = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
      if (pp.requires_grad) pp.grad[i] += g * s;
      if (tp.requires_grad) tp.grad[i] -= g * s;
    }
  });
}

void sgd_step(std::span<Tensor> params, double lr) {
  for (auto& p : params) {
    auto& g = p.node()->grad;
    if (g.empty()) continue;
    auto& v = p.values();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= lr * g[i];
    std::fill(g.begin(), g.end(), 0.0);
  }
}

}  // namespace ppgnet::ag
