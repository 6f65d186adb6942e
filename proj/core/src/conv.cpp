#include <algorithm>
#include <cstddef>
#include <memory>
#include <cstring>
#include <stdexcept>
#include <vector>

#include "blas.hpp"
#include "ppgnet/autograd.hpp"

// 1-D cross-correlation with same padding, contracted by GEMM. Two
// layouts, chosen by kernel-vs-length:
//   K <= L  im2col per sample chunk: col[(ci,k), (n,t)] = x[n, ci, t+k-pad]
//           with zero rows where the tap leaves the signal.
//   K >  L  per output position t, a dense weight slice over the whole
//           step: y[n, co, t] = W_t[co, (ci,u)] . x[n, (ci,u)], where
//           W_t[co, ci, u] = w[co, ci, u - t + pad]. This skips the
//           padding zeros (every tap row would be mostly padding) and
//           contracts against the activation tensor in place.
namespace ppgnet::ag {

using detail::Node;

namespace {

struct ConvDims {
  int N, Cin, L, Cout, K, pad_left;
};

// Uninitialized scratch; every element is written before it is read, so
// the value-initialization a std::vector would do is pure memset waste.
struct Scratch {
  std::unique_ptr<double[]> p;
  explicit Scratch(std::size_t n) : p(new double[n]) {}
  double* data() { return p.get(); }
  double& operator[](std::size_t i) { return p[i]; }
};

// GEMM wins once the contraction is wide; narrow convolutions (the
// single-channel inception branches) run faster as plain shifted updates.
bool use_direct(const ConvDims& d) { return d.Cout * d.Cin * d.K <= 512; }

inline void tap_range(const ConvDims& d, int k, int& t_lo, int& t_hi) {
  t_lo = std::max(0, d.pad_left - k);
  t_hi = std::min(d.L - 1, d.L - 1 + d.pad_left - k);  // inclusive
}

void forward_direct(const ConvDims& d, const double* x, const double* w,
                    const double* b, double* y) {
  for (int n = 0; n < d.N; ++n) {
    const double* xn = x + static_cast<std::size_t>(n) * d.Cin * d.L;
    double* yn = y + static_cast<std::size_t>(n) * d.Cout * d.L;
    for (int co = 0; co < d.Cout; ++co) {
      double* yo = yn + static_cast<std::size_t>(co) * d.L;
      for (int t = 0; t < d.L; ++t) yo[t] = b[co];
      for (int ci = 0; ci < d.Cin; ++ci) {
        const double* xr = xn + static_cast<std::size_t>(ci) * d.L;
        const double* wr = w + (static_cast<std::size_t>(co) * d.Cin + ci) * d.K;
        for (int k = 0; k < d.K; ++k) {
          int t_lo, t_hi;
          tap_range(d, k, t_lo, t_hi);
          const double wv = wr[k];
          const double* xs = xr + (t_lo + k - d.pad_left);
          double* yd = yo + t_lo;
          const int span = t_hi - t_lo + 1;
          for (int t = 0; t < span; ++t) yd[t] += wv * xs[t];
        }
      }
    }
  }
}

void backward_direct(const ConvDims& d, const double* x, const double* w,
                     const double* gy, double* gx, double* gw) {
  for (int n = 0; n < d.N; ++n) {
    const double* gyn = gy + static_cast<std::size_t>(n) * d.Cout * d.L;
    const double* xn = x + static_cast<std::size_t>(n) * d.Cin * d.L;
    for (int co = 0; co < d.Cout; ++co) {
      const double* gyr = gyn + static_cast<std::size_t>(co) * d.L;
      for (int ci = 0; ci < d.Cin; ++ci) {
        const double* xr = xn + static_cast<std::size_t>(ci) * d.L;
        double* gxr = gx ? gx + (static_cast<std::size_t>(n) * d.Cin + ci) * d.L : nullptr;
        double* gwr = gw ? gw + (static_cast<std::size_t>(co) * d.Cin + ci) * d.K : nullptr;
        for (int k = 0; k < d.K; ++k) {
          int t_lo, t_hi;
          tap_range(d, k, t_lo, t_hi);
          const int span = t_hi - t_lo + 1;
          if (span <= 0) continue;
          const int off = t_lo + k - d.pad_left;
          if (gwr) {
            const double* gs = gyr + t_lo;
            const double* xs = xr + off;
            double acc = 0.0;
            for (int t = 0; t < span; ++t) acc += gs[t] * xs[t];
            gwr[k] += acc;
          }
          if (gxr) {
            const double wv = w[(static_cast<std::size_t>(co) * d.Cin + ci) * d.K + k];
            const double* gs = gyr + t_lo;
            double* xd = gxr + off;
            for (int t = 0; t < span; ++t) xd[t] += wv * gs[t];
          }
        }
      }
    }
  }
}

int chunk_samples(const ConvDims& d) {
  // keep the im2col buffer around 12 MB
  const std::int64_t per_sample = static_cast<std::int64_t>(d.Cin) * d.K * d.L * 8;
  return std::max<int>(1, static_cast<int>((12 << 20) / std::max<std::int64_t>(1, per_sample)));
}

// col[(ci,k), (n,t)] for samples [n0, n0+nc)
void build_im2col(const ConvDims& d, const double* x, int n0, int nc, double* col) {
  const int L = d.L;
  for (int ci = 0; ci < d.Cin; ++ci)
    for (int k = 0; k < d.K; ++k) {
      double* row = col + (static_cast<std::size_t>(ci) * d.K + k) *
                              (static_cast<std::size_t>(nc) * L);
      const int t_lo = std::max(0, d.pad_left - k);
      const int t_hi = std::min(L - 1, L - 1 + d.pad_left - k);  // inclusive
      for (int n = 0; n < nc; ++n) {
        double* dst = row + static_cast<std::size_t>(n) * L;
        if (t_lo > t_hi) {
          std::memset(dst, 0, sizeof(double) * static_cast<std::size_t>(L));
          continue;
        }
        if (t_lo > 0) std::memset(dst, 0, sizeof(double) * static_cast<std::size_t>(t_lo));
        const double* src =
            x + (static_cast<std::size_t>(n0 + n) * d.Cin + ci) * L + (t_lo + k - d.pad_left);
        std::memcpy(dst + t_lo, src, sizeof(double) * static_cast<std::size_t>(t_hi - t_lo + 1));
        if (t_hi + 1 < L)
          std::memset(dst + t_hi + 1, 0, sizeof(double) * static_cast<std::size_t>(L - t_hi - 1));
      }
    }
}

// gy rows gathered as [co, (n,t)] for samples [n0, n0+nc)
void gather_rows(const ConvDims& d, const double* gy, int n0, int nc, double* out) {
  for (int co = 0; co < d.Cout; ++co)
    for (int n = 0; n < nc; ++n)
      std::memcpy(out + (static_cast<std::size_t>(co) * nc + n) * d.L,
                  gy + (static_cast<std::size_t>(n0 + n) * d.Cout + co) * d.L,
                  sizeof(double) * static_cast<std::size_t>(d.L));
}

void forward_im2col(const ConvDims& d, const double* x, const double* w,
                    const double* b, double* y) {
  const int ch = chunk_samples(d);
  Scratch col(static_cast<std::size_t>(d.Cin) * d.K * ch * d.L);
  Scratch out(static_cast<std::size_t>(d.Cout) * ch * d.L);
  for (int n0 = 0; n0 < d.N; n0 += ch) {
    const int nc = std::min(ch, d.N - n0);
    build_im2col(d, x, n0, nc, col.data());
    blas::gemm(false, false, d.Cout, nc * d.L, d.Cin * d.K, 1.0, w, d.Cin * d.K,
               col.data(), nc * d.L, 0.0, out.data(), nc * d.L);
    for (int co = 0; co < d.Cout; ++co)
      for (int n = 0; n < nc; ++n) {
        const double* src = out.data() + (static_cast<std::size_t>(co) * nc + n) * d.L;
        double* dst = y + (static_cast<std::size_t>(n0 + n) * d.Cout + co) * d.L;
        const double bias = b[co];
        for (int t = 0; t < d.L; ++t) dst[t] = src[t] + bias;
      }
  }
}

void backward_im2col(const ConvDims& d, const double* x, const double* w,
                     const double* gy, double* gx, double* gw) {
  const int ch = chunk_samples(d);
  const std::size_t col_size = static_cast<std::size_t>(d.Cin) * d.K * ch * d.L;
  Scratch col(col_size);
  Scratch gyb(static_cast<std::size_t>(d.Cout) * ch * d.L);
  Scratch gcol(gx ? col_size : 1);
  for (int n0 = 0; n0 < d.N; n0 += ch) {
    const int nc = std::min(ch, d.N - n0);
    gather_rows(d, gy, n0, nc, gyb.data());
    if (gw) {
      build_im2col(d, x, n0, nc, col.data());
      blas::gemm(false, true, d.Cout, d.Cin * d.K, nc * d.L, 1.0, gyb.data(),
                 nc * d.L, col.data(), nc * d.L, 1.0, gw, d.Cin * d.K);
    }
    if (gx) {
      blas::gemm(true, false, d.Cin * d.K, nc * d.L, d.Cout, 1.0, w, d.Cin * d.K,
                 gyb.data(), nc * d.L, 0.0, gcol.data(), nc * d.L);
      // col2im: add each tap row back into its shifted place
      for (int ci = 0; ci < d.Cin; ++ci)
        for (int k = 0; k < d.K; ++k) {
          const double* row = gcol.data() + (static_cast<std::size_t>(ci) * d.K + k) *
                                                (static_cast<std::size_t>(nc) * d.L);
          const int t_lo = std::max(0, d.pad_left - k);
          const int t_hi = std::min(d.L - 1, d.L - 1 + d.pad_left - k);
          for (int n = 0; n < nc; ++n) {
            const double* src = row + static_cast<std::size_t>(n) * d.L + t_lo;
            double* dst = gx + (static_cast<std::size_t>(n0 + n) * d.Cin + ci) * d.L +
                          (t_lo + k - d.pad_left);
            const int span = t_hi - t_lo + 1;
            for (int t = 0; t < span; ++t) dst[t] += src[t];
          }
        }
    }
  }
}

// ---- wide-kernel path (K > L) ----

// W_t[co, (ci,u)] = w[co, ci, u - t + pad], zero outside [0, K); the valid
// u range is one contiguous span of the tap vector.
void build_weight_slice(const ConvDims& d, const double* w, int t, double* wt) {
  const int row_len = d.Cin * d.L;
  const int u_lo = std::max(0, t - d.pad_left);
  const int u_hi = std::min(d.L - 1, t - d.pad_left + d.K - 1);  // inclusive
  for (int co = 0; co < d.Cout; ++co) {
    double* row = wt + static_cast<std::size_t>(co) * row_len;
    for (int ci = 0; ci < d.Cin; ++ci) {
      const double* wr = w + (static_cast<std::size_t>(co) * d.Cin + ci) * d.K;
      double* dst = row + static_cast<std::size_t>(ci) * d.L;
      if (u_lo > 0) std::memset(dst, 0, sizeof(double) * static_cast<std::size_t>(u_lo));
      std::memcpy(dst + u_lo, wr + (u_lo - t + d.pad_left),
                  sizeof(double) * static_cast<std::size_t>(u_hi - u_lo + 1));
      if (u_hi + 1 < d.L)
        std::memset(dst + u_hi + 1, 0, sizeof(double) * static_cast<std::size_t>(d.L - u_hi - 1));
    }
  }
}

void forward_wide(const ConvDims& d, const double* x, const double* w,
                  const double* b, double* y) {
  const int row_len = d.Cin * d.L;
  Scratch wt(static_cast<std::size_t>(d.Cout) * row_len);
  Scratch ct(static_cast<std::size_t>(d.Cout) * d.N);
  for (int t = 0; t < d.L; ++t) {
    build_weight_slice(d, w, t, wt.data());
    blas::gemm(false, true, d.Cout, d.N, row_len, 1.0, wt.data(), row_len, x,
               row_len, 0.0, ct.data(), d.N);
    for (int co = 0; co < d.Cout; ++co) {
      const double* src = ct.data() + static_cast<std::size_t>(co) * d.N;
      const double bias = b[co];
      for (int n = 0; n < d.N; ++n)
        y[(static_cast<std::size_t>(n) * d.Cout + co) * d.L + t] = src[n] + bias;
    }
  }
}

void backward_wide(const ConvDims& d, const double* x, const double* w,
                   const double* gy, double* gx, double* gw) {
  const int row_len = d.Cin * d.L;
  Scratch gyt(static_cast<std::size_t>(d.N) * d.Cout);  // [n, co]
  Scratch wt(static_cast<std::size_t>(d.Cout) * row_len);
  Scratch gt(gw ? static_cast<std::size_t>(d.Cout) * row_len : 1);
  for (int t = 0; t < d.L; ++t) {
    for (int n = 0; n < d.N; ++n)
      for (int co = 0; co < d.Cout; ++co)
        gyt[static_cast<std::size_t>(n) * d.Cout + co] =
            gy[(static_cast<std::size_t>(n) * d.Cout + co) * d.L + t];
    if (gw) {
      // G_t[co, (ci,u)] = sum_n gy[n, co, t] x[n, (ci,u)], folded onto w taps
      blas::gemm(true, false, d.Cout, row_len, d.N, 1.0, gyt.data(), d.Cout, x,
                 row_len, 0.0, gt.data(), row_len);
      const int u_lo = std::max(0, t - d.pad_left);
      const int u_hi = std::min(d.L - 1, t - d.pad_left + d.K - 1);
      for (int co = 0; co < d.Cout; ++co)
        for (int ci = 0; ci < d.Cin; ++ci) {
          const double* src =
              gt.data() + static_cast<std::size_t>(co) * row_len + static_cast<std::size_t>(ci) * d.L;
          double* dst = gw + (static_cast<std::size_t>(co) * d.Cin + ci) * d.K +
                        (u_lo - t + d.pad_left);
          for (int u = u_lo; u <= u_hi; ++u) dst[u - u_lo] += src[u];
        }
    }
    if (gx) {
      build_weight_slice(d, w, t, wt.data());
      blas::gemm(false, false, d.N, row_len, d.Cout, 1.0, gyt.data(), d.Cout,
                 wt.data(), row_len, 1.0, gx, row_len);
    }
  }
}

void backward_bias(const ConvDims& d, const double* gy, double* gb) {
  for (int n = 0; n < d.N; ++n)
    for (int co = 0; co < d.Cout; ++co) {
      const double* row = gy + (static_cast<std::size_t>(n) * d.Cout + co) * d.L;
      double acc = 0.0;
      for (int t = 0; t < d.L; ++t) acc += row[t];
      gb[co] += acc;
    }
}

}  // namespace

Tensor conv1d_same(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.shape().size() != 3 || w.shape().size() != 3 || b.shape().size() != 1)
    throw std::invalid_argument("conv1d expects x [N,Cin,L], w [Cout,Cin,K], b [Cout]");
  const ConvDims d{x.dim(0), x.dim(1), x.dim(2), w.dim(0), w.dim(2), (w.dim(2) - 1) / 2};
  if (w.dim(1) != d.Cin || b.dim(0) != d.Cout)
    throw std::invalid_argument("conv1d shape mismatch");
  if (d.L < 1 || d.K < 1) throw std::invalid_argument("conv1d needs L >= 1 and K >= 1");

  std::vector<double> out(static_cast<std::size_t>(d.N) * d.Cout * d.L);
  if (use_direct(d))
    forward_direct(d, x.values().data(), w.values().data(), b.values().data(), out.data());
  else if (d.K <= d.L)
    forward_im2col(d, x.values().data(), w.values().data(), b.values().data(), out.data());
  else
    forward_wide(d, x.values().data(), w.values().data(), b.values().data(), out.data());

  return make_op({d.N, d.Cout, d.L}, std::move(out), {x, w, b}, [d](Node& self) {
    Node& xp = *self.parents[0];
    Node& wp = *self.parents[1];
    Node& bp = *self.parents[2];
    double* gx = xp.requires_grad ? xp.grad.data() : nullptr;
    double* gw = wp.requires_grad ? wp.grad.data() : nullptr;
    if (gx || gw) {
      if (use_direct(d))
        backward_direct(d, xp.value.data(), wp.value.data(), self.grad.data(), gx, gw);
      else if (d.K <= d.L)
        backward_im2col(d, xp.value.data(), wp.value.data(), self.grad.data(), gx, gw);
      else
        backward_wide(d, xp.value.data(), wp.value.data(), self.grad.data(), gx, gw);
    }
    if (bp.requires_grad) backward_bias(d, self.grad.data(), bp.grad.data());
  });
}

}  // namespace ppgnet::ag
