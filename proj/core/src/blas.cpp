#include "blas.hpp"

#include <dlfcn.h>

#include <cstdlib>
#include <mutex>
#include <string>

namespace ppgnet::blas {

namespace {

// CBLAS ABI constants (netlib convention).
constexpr int kRowMajor = 101;
constexpr int kNoTrans = 111;
constexpr int kTrans = 112;

using DgemmFn = void (*)(int order, int trans_a, int trans_b, int m, int n,
                         int k, double alpha, const double* a, int lda,
                         const double* b, int ldb, double beta, double* c,
                         int ldc);
using SetThreadsFn = void (*)(int);
using CorenameFn = char* (*)();

struct Runtime {
  DgemmFn dgemm = nullptr;
  std::string name = "fallback";

  Runtime() {
#if defined(__x86_64__) && defined(__GNUC__)
    // Must happen before the library's constructors run core detection.
    if (__builtin_cpu_supports("avx512f"))
      ::setenv("OPENBLAS_CORETYPE", "SKYLAKEX", /*overwrite=*/0);
#endif
    void* handle = ::dlopen("libopenblas.so.0", RTLD_NOW | RTLD_LOCAL);
    if (!handle) handle = ::dlopen("libopenblas.so", RTLD_NOW | RTLD_LOCAL);
    if (!handle) return;
    dgemm = reinterpret_cast<DgemmFn>(::dlsym(handle, "cblas_dgemm"));
    if (!dgemm) return;
    // GEMM threading stays off: parallelism belongs to fold workers, and
    // single-threaded contractions keep runs reproducible everywhere.
    if (auto set_threads =
            reinterpret_cast<SetThreadsFn>(::dlsym(handle, "openblas_set_num_threads")))
      set_threads(1);
    name = "openblas";
    if (auto corename = reinterpret_cast<CorenameFn>(::dlsym(handle, "openblas_get_corename")))
      name += std::string(":") + corename();
  }
};

const Runtime& runtime() {
  static Runtime rt;
  return rt;
}

// Blocked reference GEMM, used only when OpenBLAS cannot be loaded.
void gemm_fallback(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
                   const double* a, int lda, const double* b, int ldb,
                   double beta, double* c, int ldc) {
  auto at = [&](int i, int p) { return trans_a ? a[static_cast<std::size_t>(p) * lda + i]
                                               : a[static_cast<std::size_t>(i) * lda + p]; };
  auto bt = [&](int p, int j) { return trans_b ? b[static_cast<std::size_t>(j) * ldb + p]
                                               : b[static_cast<std::size_t>(p) * ldb + j]; };
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += at(i, p) * bt(p, j);
      double& out = c[static_cast<std::size_t>(i) * ldc + j];
      out = alpha * acc + (beta == 0.0 ? 0.0 : beta * out);
    }
}

}  // namespace

void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
          const double* a, int lda, const double* b, int ldb, double beta,
          double* c, int ldc) {
  if (m <= 0 || n <= 0) return;
  const Runtime& rt = runtime();
  if (rt.dgemm) {
    rt.dgemm(kRowMajor, trans_a ? kTrans : kNoTrans, trans_b ? kTrans : kNoTrans,
             m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
  } else {
    gemm_fallback(trans_a, trans_b, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
  }
}

const char* backend_name() { return runtime().name.c_str(); }

}  // namespace ppgnet::blas
