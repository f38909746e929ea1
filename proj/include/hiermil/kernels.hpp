#pragma once
// Data-parallel inner loops behind the tensor/tape layer.
//
// Every kernel exists as a scalar reference implementation and, on x86-64, an
// AVX2 variant. The active variant is selected once at startup from CPUID;
// HIERMIL_ISA=scalar (or =avx2) in the environment overrides the choice.
// Elementwise kernels are bit-identical across variants (no reassociation, no
// FMA contraction); reductions (dot/sum) reorder partial sums and agree within
// a small relative tolerance, enforced by the equivalence tests.

#include <cstddef>

namespace hiermil::kernels {

// Name of the selected implementation: "avx2" or "scalar".
const char* active_isa();

// True when the AVX2 variant is compiled in and the CPU supports it.
bool avx2_available();

double dot(const double* a, const double* b, std::size_t n);
double sum(const double* x, std::size_t n);
double max_value(const double* x, std::size_t n);  // n >= 1
void axpy(double alpha, const double* x, double* y, std::size_t n);  // y += alpha*x
void add(const double* a, const double* b, double* out, std::size_t n);
void sub(const double* a, const double* b, double* out, std::size_t n);
void mul(const double* a, const double* b, double* out, std::size_t n);
void scale(double alpha, const double* x, double* out, std::size_t n);

// Bias-corrected Adam update, fused over one parameter tensor:
//   m <- beta1*m + (1-beta1)*g
//   v <- beta2*v + (1-beta2)*g^2
//   p <- p - lr * (m/bc1) / (sqrt(v/bc2) + eps)
// where bc1 = 1-beta1^t and bc2 = 1-beta2^t are passed in by the caller.
void adam_update(double* p, double* m, double* v, const double* g, std::size_t n,
                 double lr, double beta1, double beta2, double eps, double bc1, double bc2);

namespace scalar {
double dot(const double* a, const double* b, std::size_t n);
double sum(const double* x, std::size_t n);
double max_value(const double* x, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void add(const double* a, const double* b, double* out, std::size_t n);
void sub(const double* a, const double* b, double* out, std::size_t n);
void mul(const double* a, const double* b, double* out, std::size_t n);
void scale(double alpha, const double* x, double* out, std::size_t n);
void adam_update(double* p, double* m, double* v, const double* g, std::size_t n,
                 double lr, double beta1, double beta2, double eps, double bc1, double bc2);
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
namespace avx2 {
double dot(const double* a, const double* b, std::size_t n);
double sum(const double* x, std::size_t n);
double max_value(const double* x, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void add(const double* a, const double* b, double* out, std::size_t n);
void sub(const double* a, const double* b, double* out, std::size_t n);
void mul(const double* a, const double* b, double* out, std::size_t n);
void scale(double alpha, const double* x, double* out, std::size_t n);
void adam_update(double* p, double* m, double* v, const double* g, std::size_t n,
                 double lr, double beta1, double beta2, double eps, double bc1, double bc2);
}  // namespace avx2
#endif

}  // namespace hiermil::kernels
