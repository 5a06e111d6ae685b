#pragma once

#include <string>

namespace camloc::kernels {

// The two matrix products behind every convolution pass. Both reduce over k
// strictly in ascending order for each output element, so all backends of the
// same contract produce bit-identical float64 results; SIMD variants only
// parallelize across independent outputs.
//
// gemm_nn: C[M,N] = A[M,K] * B[K,N] (+ optional per-row init, or accumulate
//          into existing C).
// gemm_tn: C[M,N] = A^T * B where A is stored [K,M], i.e.
//          C[m,n] = sum_k A[k,m] * B[k,n].
struct Backend {
  const char* name;
  void (*gemm_nn)(const double* a, const double* b, double* c, int m, int k, int n,
                  const double* row_init, bool accumulate);
  void (*gemm_tn)(const double* a, const double* b, double* c, int m, int k, int n);
};

const Backend& scalar_backend();

/// True when the running CPU can execute the AVX2 variant.
bool avx2_supported();

/// AVX2 variant; only valid to call when avx2_supported().
const Backend& avx2_backend();

/// Resolve a backend by preference: "auto" (best available), "scalar",
/// "avx2". Unknown names or an unavailable explicit choice are rejected.
const Backend& select_backend(const std::string& preference);

}  // namespace camloc::kernels
