#pragma once

// Dense double-precision GEMM for the conv and lstm kernels. OpenBLAS is
// loaded lazily at first use instead of being linked: its core-type
// detection runs in a load-time constructor, and virtual machines that
// mask CPUID make it fall back to generic kernels several times slower
// than the hardware. Loading after the environment is fixed up restores
// the tuned kernels; if the library is missing entirely, a plain blocked
// loop takes over so results never depend on its presence.
namespace ppgnet::blas {

// C [m, n] = alpha * op(A) op(B) + beta * C, row-major; lda/ldb/ldc are
// the row strides of the stored (untransposed) matrices.
void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
          const double* a, int lda, const double* b, int ldb, double beta,
          double* c, int ldc);

// Name of the backing implementation ("openblas:<corename>" or "fallback").
const char* backend_name();

}  // namespace ppgnet::blas
