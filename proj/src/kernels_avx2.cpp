// Compiled with -mavx2 -mfma. Only raw-pointer code lives here so no inline
// library template gets instantiated with AVX encodings.

#include <immintrin.h>

#include "dualsrc/kernels.hpp"

namespace dualsrc::kernels::avx2 {

namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

}  // namespace

double dot(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4),
                           acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  }
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void gemv_bias(const double* w, const double* x, const double* b, double* y,
               std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    y[r] = b[r] + dot(w + r * cols, x, cols);
  }
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i),
                                            _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void adam_update(double* p, const double* g, double* m, double* v,
                 std::size_t n, double lr, double beta1, double beta2,
                 double eps, double bias1, double bias2, double sign) {
  const __m256d b1 = _mm256_set1_pd(beta1);
  const __m256d b2 = _mm256_set1_pd(beta2);
  const __m256d c1 = _mm256_set1_pd(1.0 - beta1);
  const __m256d c2 = _mm256_set1_pd(1.0 - beta2);
  const __m256d inv_bias1 = _mm256_set1_pd(1.0 / bias1);
  const __m256d inv_bias2 = _mm256_set1_pd(1.0 / bias2);
  const __m256d step = _mm256_set1_pd(sign * lr);
  const __m256d veps = _mm256_set1_pd(eps);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d gi = _mm256_loadu_pd(g + i);
    const __m256d mi = _mm256_add_pd(_mm256_mul_pd(b1, _mm256_loadu_pd(m + i)),
                                     _mm256_mul_pd(c1, gi));
    const __m256d vi =
        _mm256_add_pd(_mm256_mul_pd(b2, _mm256_loadu_pd(v + i)),
                      _mm256_mul_pd(c2, _mm256_mul_pd(gi, gi)));
    _mm256_storeu_pd(m + i, mi);
    _mm256_storeu_pd(v + i, vi);
    const __m256d denom =
        _mm256_add_pd(_mm256_sqrt_pd(_mm256_mul_pd(vi, inv_bias2)), veps);
    const __m256d upd =
        _mm256_div_pd(_mm256_mul_pd(mi, inv_bias1), denom);
    _mm256_storeu_pd(p + i, _mm256_add_pd(_mm256_loadu_pd(p + i),
                                          _mm256_mul_pd(step, upd)));
  }
  if (i < n) {
    scalar::adam_update(p + i, g + i, m + i, v + i, n - i, lr, beta1, beta2,
                        eps, bias1, bias2, sign);
  }
}

}  // namespace dualsrc::kernels::avx2
