#include <cmath>

#include "dualsrc/kernels.hpp"

namespace dualsrc::kernels::scalar {

double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void gemv_bias(const double* w, const double* x, const double* b, double* y,
               std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    y[r] = b[r] + dot(w + r * cols, x, cols);
  }
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void adam_update(double* p, const double* g, double* m, double* v,
                 std::size_t n, double lr, double beta1, double beta2,
                 double eps, double bias1, double bias2, double sign) {
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
    const double mhat = m[i] / bias1;
    const double vhat = v[i] / bias2;
    p[i] += sign * lr * mhat / (std::sqrt(vhat) + eps);
  }
}

}  // namespace dualsrc::kernels::scalar
