#pragma once

// Dense double-precision kernels used by the critic head and the PPO trainer.
//
// Every kernel has a portable scalar reference and, on x86-64, an AVX2+FMA
// variant. The variant is picked once per process from CPUID; setting
// COPIC_KERNELS=scalar in the environment pins the reference path. Matrices
// are row-major with an explicit row count and column count.

#include <cstddef>
#include <span>
#include <string_view>

namespace copic::kernels {

enum class Isa { kScalar, kAvx2 };

struct KernelTable {
  Isa isa;
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // y = M x, M is rows x cols
  void (*gemv)(const double* m, std::size_t rows, std::size_t cols, const double* x, double* y);
  // y = M^T x, M is rows x cols
  void (*gemv_t)(const double* m, std::size_t rows, std::size_t cols, const double* x, double* y);
  // M += alpha * x y^T
  void (*ger)(double* m, std::size_t rows, std::size_t cols, double alpha, const double* x,
              const double* y);
};

const KernelTable& scalar_table();
/// nullptr when the build or the CPU lacks AVX2+FMA.
const KernelTable* avx2_table();

/// The table selected for this process.
const KernelTable& active();
/// Overrides the process-wide choice (tests and benchmarks only).
void set_active(Isa isa);
bool avx2_available();
std::string_view isa_name(Isa isa);

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(alpha, x.data(), y.data(), x.size());
}
inline void gemv(std::span<const double> m, std::size_t rows, std::size_t cols,
                 std::span<const double> x, std::span<double> y) {
  active().gemv(m.data(), rows, cols, x.data(), y.data());
}
inline void gemv_t(std::span<const double> m, std::size_t rows, std::size_t cols,
                   std::span<const double> x, std::span<double> y) {
  active().gemv_t(m.data(), rows, cols, x.data(), y.data());
}
inline void ger(std::span<double> m, std::size_t rows, std::size_t cols, double alpha,
                std::span<const double> x, std::span<const double> y) {
  active().ger(m.data(), rows, cols, alpha, x.data(), y.data());
}

}  // namespace copic::kernels
