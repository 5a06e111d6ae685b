#include "camloc/kernels.hpp"

// Scalar reference kernels. These define the summation contract: every
// output element accumulates over k in ascending order with separate
// multiply and add roundings. SIMD variants must reproduce these results
// bit for bit.
//
// The loops run in axpy order (k outer, n inner) so B streams row-wise; per
// element the operation sequence is the same as a plain k-inner dot product.

namespace camloc::kernels {
namespace {

void gemm_nn_scalar(const double* a, const double* b, double* c, int m, int k, int n,
                    const double* row_init, bool accumulate) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<std::size_t>(i) * k;
    double* crow = c + static_cast<std::size_t>(i) * n;
    if (!accumulate) {
      const double init = row_init ? row_init[i] : 0.0;
      for (int j = 0; j < n; ++j) crow[j] = init;
    }
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) {
        crow[j] = crow[j] + av * brow[j];
      }
    }
  }
}

void gemm_tn_scalar(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    double* crow = c + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) crow[j] = 0.0;
    for (int p = 0; p < k; ++p) {
      const double av = a[static_cast<std::size_t>(p) * m + i];
      const double* brow = b + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) {
        crow[j] = crow[j] + av * brow[j];
      }
    }
  }
}

}  // namespace

const Backend& scalar_backend() {
  static const Backend backend{"scalar", gemm_nn_scalar, gemm_tn_scalar};
  return backend;
}

}  // namespace camloc::kernels
