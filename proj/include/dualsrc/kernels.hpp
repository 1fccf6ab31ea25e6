#pragma once

// Dense double-precision inner loops used by inference-time network
// evaluation, population volume reductions and optimizer updates.
//
// Every kernel has a portable scalar reference and an AVX2/FMA variant. The
// variant is chosen once at startup from CPUID; `DUALSRC_SIMD=scalar` in the
// environment or `set_isa(Isa::kScalar)` pins the reference path (the
// deterministic run mode does this so results do not depend on the host CPU).

#include <cstddef>
#include <span>
#include <string_view>

namespace dualsrc::kernels {

enum class Isa { kScalar, kAvx2 };

// Best ISA the running CPU supports.
Isa detect_isa();
Isa active_isa();
// Requests an ISA; falls back to scalar when the CPU lacks the request.
void set_isa(Isa isa);
std::string_view isa_name(Isa isa);

double dot(std::span<const double> a, std::span<const double> b);

// y = W x + b with W row-major (rows = y.size(), cols = x.size()).
void gemv_bias(std::span<const double> w, std::span<const double> x,
               std::span<const double> b, std::span<double> y);

// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);

// Bias-corrected Adam update, in place. `sign` = +1 ascends, -1 descends.
void adam_update(std::span<double> params, std::span<const double> grad,
                 std::span<double> m, std::span<double> v, double lr,
                 double beta1, double beta2, double eps, double bias1,
                 double bias2, double sign);

// Reference implementations, always available; used by equivalence tests.
namespace scalar {
double dot(const double* a, const double* b, std::size_t n);
void gemv_bias(const double* w, const double* x, const double* b, double* y,
               std::size_t rows, std::size_t cols);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void adam_update(double* p, const double* g, double* m, double* v,
                 std::size_t n, double lr, double beta1, double beta2,
                 double eps, double bias1, double bias2, double sign);
}  // namespace scalar

namespace avx2 {
double dot(const double* a, const double* b, std::size_t n);
void gemv_bias(const double* w, const double* x, const double* b, double* y,
               std::size_t rows, std::size_t cols);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void adam_update(double* p, const double* g, double* m, double* v,
                 std::size_t n, double lr, double beta1, double beta2,
                 double eps, double bias1, double bias2, double sign);
}  // namespace avx2

}  // namespace dualsrc::kernels
