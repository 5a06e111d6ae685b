// AVX2 variants of the GEMM kernels. Compiled with -mavx2 in its own
// translation unit; only reachable through the runtime dispatch when the CPU
// supports AVX2.
//
// Vectorization is across output columns only. Each output element still
// accumulates over k in ascending order through separate _mm256_mul_pd /
// _mm256_add_pd (never FMA), so results are bit-identical to the scalar
// reference.

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include "camloc/kernels.hpp"

namespace camloc::kernels {
namespace {

// C rows i..i+3, columns j..j+7: register-tiled so each B row loads once per
// four output rows.
template <bool kAccumulate>
inline void block4x8_nn(const double* a, const double* b, double* c, int k, int n, int i, int j,
                        const double* row_init) {
  const double* a0 = a + static_cast<std::size_t>(i) * k;
  const double* a1 = a0 + k;
  const double* a2 = a1 + k;
  const double* a3 = a2 + k;
  double* c0 = c + static_cast<std::size_t>(i) * n + j;
  double* c1 = c0 + n;
  double* c2 = c1 + n;
  double* c3 = c2 + n;

  __m256d acc00, acc01, acc10, acc11, acc20, acc21, acc30, acc31;
  if (kAccumulate) {
    acc00 = _mm256_loadu_pd(c0);
    acc01 = _mm256_loadu_pd(c0 + 4);
    acc10 = _mm256_loadu_pd(c1);
    acc11 = _mm256_loadu_pd(c1 + 4);
    acc20 = _mm256_loadu_pd(c2);
    acc21 = _mm256_loadu_pd(c2 + 4);
    acc30 = _mm256_loadu_pd(c3);
    acc31 = _mm256_loadu_pd(c3 + 4);
  } else {
    const __m256d i0 = _mm256_set1_pd(row_init ? row_init[i] : 0.0);
    const __m256d i1 = _mm256_set1_pd(row_init ? row_init[i + 1] : 0.0);
    const __m256d i2 = _mm256_set1_pd(row_init ? row_init[i + 2] : 0.0);
    const __m256d i3 = _mm256_set1_pd(row_init ? row_init[i + 3] : 0.0);
    acc00 = i0;
    acc01 = i0;
    acc10 = i1;
    acc11 = i1;
    acc20 = i2;
    acc21 = i2;
    acc30 = i3;
    acc31 = i3;
  }

  for (int p = 0; p < k; ++p) {
    const double* brow = b + static_cast<std::size_t>(p) * n + j;
    const __m256d b0 = _mm256_loadu_pd(brow);
    const __m256d b1 = _mm256_loadu_pd(brow + 4);
    const __m256d av0 = _mm256_set1_pd(a0[p]);
    const __m256d av1 = _mm256_set1_pd(a1[p]);
    const __m256d av2 = _mm256_set1_pd(a2[p]);
    const __m256d av3 = _mm256_set1_pd(a3[p]);
    acc00 = _mm256_add_pd(acc00, _mm256_mul_pd(av0, b0));
    acc01 = _mm256_add_pd(acc01, _mm256_mul_pd(av0, b1));
    acc10 = _mm256_add_pd(acc10, _mm256_mul_pd(av1, b0));
    acc11 = _mm256_add_pd(acc11, _mm256_mul_pd(av1, b1));
    acc20 = _mm256_add_pd(acc20, _mm256_mul_pd(av2, b0));
    acc21 = _mm256_add_pd(acc21, _mm256_mul_pd(av2, b1));
    acc30 = _mm256_add_pd(acc30, _mm256_mul_pd(av3, b0));
    acc31 = _mm256_add_pd(acc31, _mm256_mul_pd(av3, b1));
  }

  _mm256_storeu_pd(c0, acc00);
  _mm256_storeu_pd(c0 + 4, acc01);
  _mm256_storeu_pd(c1, acc10);
  _mm256_storeu_pd(c1 + 4, acc11);
  _mm256_storeu_pd(c2, acc20);
  _mm256_storeu_pd(c2 + 4, acc21);
  _mm256_storeu_pd(c3, acc30);
  _mm256_storeu_pd(c3 + 4, acc31);
}

// Single row, 4-wide column block.
template <bool kAccumulate>
inline void block1x4_nn(const double* a, const double* b, double* c, int k, int n, int i, int j,
                        const double* row_init) {
  const double* arow = a + static_cast<std::size_t>(i) * k;
  double* crow = c + static_cast<std::size_t>(i) * n + j;
  __m256d acc = kAccumulate ? _mm256_loadu_pd(crow)
                            : _mm256_set1_pd(row_init ? row_init[i] : 0.0);
  for (int p = 0; p < k; ++p) {
    const __m256d bv = _mm256_loadu_pd(b + static_cast<std::size_t>(p) * n + j);
    const __m256d av = _mm256_set1_pd(arow[p]);
    acc = _mm256_add_pd(acc, _mm256_mul_pd(av, bv));
  }
  _mm256_storeu_pd(crow, acc);
}

inline void tail_nn(const double* a, const double* b, double* c, int k, int n, int i, int j,
                    const double* row_init, bool accumulate) {
  const double* arow = a + static_cast<std::size_t>(i) * k;
  double* cel = c + static_cast<std::size_t>(i) * n + j;
  double acc = accumulate ? *cel : (row_init ? row_init[i] : 0.0);
  for (int p = 0; p < k; ++p) {
    acc = acc + arow[p] * b[static_cast<std::size_t>(p) * n + j];
  }
  *cel = acc;
}

void gemm_nn_avx2(const double* a, const double* b, double* c, int m, int k, int n,
                  const double* row_init, bool accumulate) {
  int i = 0;
  for (; i + 4 <= m; i += 4) {
    int j = 0;
    for (; j + 8 <= n; j += 8) {
      if (accumulate)
        block4x8_nn<true>(a, b, c, k, n, i, j, row_init);
      else
        block4x8_nn<false>(a, b, c, k, n, i, j, row_init);
    }
    for (int r = 0; r < 4; ++r) {
      int jj = j;
      for (; jj + 4 <= n; jj += 4) {
        if (accumulate)
          block1x4_nn<true>(a, b, c, k, n, i + r, jj, row_init);
        else
          block1x4_nn<false>(a, b, c, k, n, i + r, jj, row_init);
      }
      for (; jj < n; ++jj) tail_nn(a, b, c, k, n, i + r, jj, row_init, accumulate);
    }
  }
  for (; i < m; ++i) {
    int j = 0;
    for (; j + 4 <= n; j += 4) {
      if (accumulate)
        block1x4_nn<true>(a, b, c, k, n, i, j, row_init);
      else
        block1x4_nn<false>(a, b, c, k, n, i, j, row_init);
    }
    for (; j < n; ++j) tail_nn(a, b, c, k, n, i, j, row_init, accumulate);
  }
}

// gemm_tn: A stored [K,M]; broadcasts walk a column of A.
inline void block1x4_tn(const double* a, const double* b, double* c, int m, int k, int n, int i,
                        int j) {
  double* crow = c + static_cast<std::size_t>(i) * n + j;
  __m256d acc = _mm256_setzero_pd();
  for (int p = 0; p < k; ++p) {
    const __m256d bv = _mm256_loadu_pd(b + static_cast<std::size_t>(p) * n + j);
    const __m256d av = _mm256_set1_pd(a[static_cast<std::size_t>(p) * m + i]);
    acc = _mm256_add_pd(acc, _mm256_mul_pd(av, bv));
  }
  _mm256_storeu_pd(crow, acc);
}

void gemm_tn_avx2(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    int j = 0;
    for (; j + 4 <= n; j += 4) block1x4_tn(a, b, c, m, k, n, i, j);
    for (; j < n; ++j) {
      double acc = 0.0;
      for (int p = 0; p < k; ++p) {
        acc = acc + a[static_cast<std::size_t>(p) * m + i] * b[static_cast<std::size_t>(p) * n + j];
      }
      c[static_cast<std::size_t>(i) * n + j] = acc;
    }
  }
}

}  // namespace

const Backend& avx2_backend() {
  static const Backend backend{"avx2", gemm_nn_avx2, gemm_tn_avx2};
  return backend;
}

}  // namespace camloc::kernels

#endif  // x86_64
