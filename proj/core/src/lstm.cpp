#include <cmath>
#include <cstddef>
#include <memory>

#include "blas.hpp"
#include <cstring>
#include <stdexcept>

#include "ppgnet/autograd.hpp"

// Stacked LSTM with the standard gate equations
//   i = sigmoid(Wx_i x + Wh_i h + b_i)      f = sigmoid(Wx_f x + Wh_f h + b_f)
//   g = tanh(Wx_g x + Wh_g h + b_g)         o = sigmoid(Wx_o x + Wh_o h + b_o)
//   c' = f*c + i*g                          h' = o * tanh(c')
// Gates are packed in (i, f, g, o) order along the 4H axis. States start at
// zero. The node output holds every layer's hidden state at every step,
// shaped [T, layers, N, H]; backward is hand-rolled BPTT.
namespace ppgnet::ag {

using detail::Node;

namespace {

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// C[m,p] (+)= A[m,:] . B[p,:] — both operands row-major over the
// contracted axis.
void matmul_nt(const double* A, const double* B, double* C, int M, int P,
               int K, bool accumulate) {
  blas::gemm(false, true, M, P, K, 1.0, A, K, B, K, accumulate ? 1.0 : 0.0, C, P);
}

// C[p,:] += sum_m A[m,p] * B[m,:]   (A^T B, accumulating)
void matmul_tn_acc(const double* A, const double* B, double* C, int M, int P,
                   int K) {
  blas::gemm(true, false, P, K, M, 1.0, A, P, B, K, 1.0, C, K);
}

// C[m,:] += A[m,:] @ B, B row-major [P, K]
void matmul_nn_acc(const double* A, const double* B, double* C, int M, int P,
                   int K) {
  blas::gemm(false, false, M, K, P, 1.0, A, P, B, K, 1.0, C, K);
}

struct LstmCache {
  // Per layer, per step: gate activations and cell states, each [N, H].
  // Layout: [(layer * T + t) * N * H]. Buffers stay uninitialized until
  // the forward loop writes them.
  std::unique_ptr<double[]> i, f, g, o, c, tanh_c;
  int T = 0, N = 0, H = 0, layers = 0;

  void allocate(std::size_t per) {
    i.reset(new double[per]);
    f.reset(new double[per]);
    g.reset(new double[per]);
    o.reset(new double[per]);
    c.reset(new double[per]);
    tanh_c.reset(new double[per]);
  }
  std::size_t off(int l, int t) const {
    return (static_cast<std::size_t>(l) * T + t) * N * H;
  }
};

}  // namespace

Tensor lstm(const Tensor& x, const std::vector<LstmLayerParams>& layers,
            int hidden) {
  if (x.shape().size() != 3) throw std::invalid_argument("lstm expects x [T, N, D]");
  if (layers.empty()) throw std::invalid_argument("lstm needs at least one layer");
  const int T = x.dim(0), N = x.dim(1), D = x.dim(2);
  const int H = hidden, NL = static_cast<int>(layers.size());
  for (int l = 0; l < NL; ++l) {
    const int d_in = l == 0 ? D : H;
    const auto& p = layers[static_cast<std::size_t>(l)];
    if (p.w_x.shape() != Shape{4 * H, d_in} || p.w_h.shape() != Shape{4 * H, H} ||
        p.bias.shape() != Shape{4 * H})
      throw std::invalid_argument("lstm layer parameter shape mismatch");
  }

  auto cache = std::make_shared<LstmCache>();
  cache->T = T; cache->N = N; cache->H = H; cache->layers = NL;
  const std::size_t per = static_cast<std::size_t>(NL) * T * N * H;
  cache->allocate(per);

  // h_all [T, layers, N, H]
  std::vector<double> h_all(static_cast<std::size_t>(T) * NL * N * H, 0.0);
  auto h_at = [&](int t, int l) {
    return h_all.data() + ((static_cast<std::size_t>(t) * NL) + l) * N * H;
  };

  std::vector<double> gates(static_cast<std::size_t>(N) * 4 * H);
  for (int l = 0; l < NL; ++l) {
    const auto& p = layers[static_cast<std::size_t>(l)];
    const int d_in = l == 0 ? D : H;
    const double* wx = p.w_x.values().data();
    const double* wh = p.w_h.values().data();
    const double* bias = p.bias.values().data();
    for (int t = 0; t < T; ++t) {
      const double* x_t = l == 0
          ? x.values().data() + static_cast<std::size_t>(t) * N * D
          : h_at(t, l - 1);
      matmul_nt(x_t, wx, gates.data(), N, 4 * H, d_in, false);
      if (t > 0)
        matmul_nt(h_at(t - 1, l), wh, gates.data(), N, 4 * H, H, true);
      const std::size_t co = cache->off(l, t);
      const double* c_prev = t > 0 ? cache->c.get() + cache->off(l, t - 1) : nullptr;
      double* ho = h_at(t, l);
      for (int n = 0; n < N; ++n) {
        const double* gr = gates.data() + static_cast<std::size_t>(n) * 4 * H;
        for (int j = 0; j < H; ++j) {
          const std::size_t idx = co + static_cast<std::size_t>(n) * H + j;
          const double iv = sigmoid(gr[j] + bias[j]);
          const double fv = sigmoid(gr[H + j] + bias[H + j]);
          const double gv = std::tanh(gr[2 * H + j] + bias[2 * H + j]);
          const double ov = sigmoid(gr[3 * H + j] + bias[3 * H + j]);
          const double cp = c_prev ? c_prev[static_cast<std::size_t>(n) * H + j] : 0.0;
          const double cv = fv * cp + iv * gv;
          const double tc = std::tanh(cv);
          cache->i[idx] = iv; cache->f[idx] = fv; cache->g[idx] = gv;
          cache->o[idx] = ov; cache->c[idx] = cv; cache->tanh_c[idx] = tc;
          ho[static_cast<std::size_t>(n) * H + j] = ov * tc;
        }
      }
    }
  }

  std::vector<Tensor> parents{x};
  for (const auto& p : layers) {
    parents.push_back(p.w_x);
    parents.push_back(p.w_h);
    parents.push_back(p.bias);
  }

  return make_op({T, NL, N, H}, std::move(h_all), std::move(parents),
                 [cache, T, N, D, H, NL](Node& self) {
    // parents: [0] x, then per layer (w_x, w_h, bias)
    Node& xp = *self.parents[0];
    auto wx_p = [&](int l) -> Node& { return *self.parents[1 + 3 * l]; };
    auto wh_p = [&](int l) -> Node& { return *self.parents[2 + 3 * l]; };
    auto b_p = [&](int l) -> Node& { return *self.parents[3 + 3 * l]; };

    const std::size_t nh = static_cast<std::size_t>(N) * H;
    auto g_out = [&](int t, int l) {
      return self.grad.data() + ((static_cast<std::size_t>(t) * NL) + l) * nh;
    };
    auto h_val = [&](int t, int l) {
      return self.value.data() + ((static_cast<std::size_t>(t) * NL) + l) * nh;
    };

    // Gradient flowing into each step's hidden output of the layer below.
    std::vector<double> dx_lower(static_cast<std::size_t>(T) * nh, 0.0);
    std::vector<double> dx_next;
    std::vector<double> dh(nh), dc(nh), dpre(static_cast<std::size_t>(N) * 4 * H);

    for (int l = NL - 1; l >= 0; --l) {
      const int d_in = l == 0 ? D : H;
      Node& wx = wx_p(l);
      Node& wh = wh_p(l);
      Node& bias = b_p(l);
      const bool want_below = l > 0 || xp.requires_grad;
      dx_next.assign(static_cast<std::size_t>(T) * (l == 0 ? static_cast<std::size_t>(N) * D : nh), 0.0);
      std::fill(dh.begin(), dh.end(), 0.0);
      std::fill(dc.begin(), dc.end(), 0.0);

      for (int t = T - 1; t >= 0; --t) {
        const std::size_t co = cache->off(l, t);
        const double* go = g_out(t, l);
        const double* upper = l == NL - 1 ? nullptr : &dx_lower[static_cast<std::size_t>(t) * nh];
        for (std::size_t q = 0; q < nh; ++q) {
          double d = dh[q] + go[q];
          if (upper) d += upper[q];
          const double tc = cache->tanh_c[co + q];
          const double ov = cache->o[co + q];
          const double dct = dc[q] + d * ov * (1.0 - tc * tc);
          const double iv = cache->i[co + q];
          const double fv = cache->f[co + q];
          const double gv = cache->g[co + q];
          const double cp = t > 0 ? cache->c[cache->off(l, t - 1) + q] : 0.0;
          const std::size_t n = q / H, j = q % H;
          double* pr = dpre.data() + n * 4 * H;
          pr[j] = dct * gv * iv * (1.0 - iv);
          pr[H + j] = dct * cp * fv * (1.0 - fv);
          pr[2 * H + j] = dct * iv * (1.0 - gv * gv);
          pr[3 * H + j] = d * tc * ov * (1.0 - ov);
          dc[q] = dct * fv;
        }

        const double* x_t = l == 0
            ? xp.value.data() + static_cast<std::size_t>(t) * N * D
            : h_val(t, l - 1);
        if (wx.requires_grad)
          matmul_tn_acc(dpre.data(), x_t, wx.grad.data(), N, 4 * H, d_in);
        if (t > 0 && wh.requires_grad)
          matmul_tn_acc(dpre.data(), h_val(t - 1, l), wh.grad.data(), N, 4 * H, H);
        if (bias.requires_grad) {
          for (int n = 0; n < N; ++n) {
            const double* pr = dpre.data() + static_cast<std::size_t>(n) * 4 * H;
            for (int j = 0; j < 4 * H; ++j) bias.grad[j] += pr[j];
          }
        }
        if (want_below) {
          double* dx_t = dx_next.data() + static_cast<std::size_t>(t) * N * d_in;
          matmul_nn_acc(dpre.data(), wx.value.data(), dx_t, N, 4 * H, d_in);
        }
        std::fill(dh.begin(), dh.end(), 0.0);
        if (t > 0)
          matmul_nn_acc(dpre.data(), wh.value.data(), dh.data(), N, 4 * H, H);
      }

      if (l == 0) {
        if (xp.requires_grad)
          for (std::size_t q = 0; q < dx_next.size(); ++q) xp.grad[q] += dx_next[q];
      } else {
        dx_lower.swap(dx_next);
      }
    }
  });
}

}  // namespace ppgnet::ag
