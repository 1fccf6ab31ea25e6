#include "dualsrc/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>

#include "dualsrc/errors.hpp"

namespace dualsrc::kernels {

namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa initial_isa() {
  const char* env = std::getenv("DUALSRC_SIMD");
  if (env != nullptr && std::strcmp(env, "scalar") == 0) return Isa::kScalar;
  return detect_isa();
}

std::atomic<Isa>& current() {
  static std::atomic<Isa> isa{initial_isa()};
  return isa;
}

void check_same(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw DomainError(std::string("kernel size mismatch: ") + what);
}

}  // namespace

Isa detect_isa() { return cpu_has_avx2() ? Isa::kAvx2 : Isa::kScalar; }

Isa active_isa() { return current().load(std::memory_order_relaxed); }

void set_isa(Isa isa) {
  if (isa == Isa::kAvx2 && !cpu_has_avx2()) isa = Isa::kScalar;
  current().store(isa, std::memory_order_relaxed);
}

std::string_view isa_name(Isa isa) {
  return isa == Isa::kAvx2 ? "avx2" : "scalar";
}

double dot(std::span<const double> a, std::span<const double> b) {
  check_same(a.size(), b.size(), "dot");
  if (active_isa() == Isa::kAvx2) return avx2::dot(a.data(), b.data(), a.size());
  return scalar::dot(a.data(), b.data(), a.size());
}

void gemv_bias(std::span<const double> w, std::span<const double> x,
               std::span<const double> b, std::span<double> y) {
  check_same(w.size(), x.size() * y.size(), "gemv weights");
  check_same(b.size(), y.size(), "gemv bias");
  if (active_isa() == Isa::kAvx2) {
    avx2::gemv_bias(w.data(), x.data(), b.data(), y.data(), y.size(), x.size());
  } else {
    scalar::gemv_bias(w.data(), x.data(), b.data(), y.data(), y.size(),
                      x.size());
  }
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  check_same(x.size(), y.size(), "axpy");
  if (active_isa() == Isa::kAvx2) {
    avx2::axpy(alpha, x.data(), y.data(), x.size());
  } else {
    scalar::axpy(alpha, x.data(), y.data(), x.size());
  }
}

void adam_update(std::span<double> params, std::span<const double> grad,
                 std::span<double> m, std::span<double> v, double lr,
                 double beta1, double beta2, double eps, double bias1,
                 double bias2, double sign) {
  check_same(params.size(), grad.size(), "adam grad");
  check_same(params.size(), m.size(), "adam m");
  check_same(params.size(), v.size(), "adam v");
  if (active_isa() == Isa::kAvx2) {
    avx2::adam_update(params.data(), grad.data(), m.data(), v.data(),
                      params.size(), lr, beta1, beta2, eps, bias1, bias2, sign);
  } else {
    scalar::adam_update(params.data(), grad.data(), m.data(), v.data(),
                        params.size(), lr, beta1, beta2, eps, bias1, bias2,
                        sign);
  }
}

}  // namespace dualsrc::kernels
