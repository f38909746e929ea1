// Runtime kernel selection. Resolved once on first use; HIERMIL_ISA=scalar
// forces the reference path (used by the equivalence tests and for debugging),
// HIERMIL_ISA=avx2 asks for AVX2 and falls back to scalar if unsupported.

#include "hiermil/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace hiermil::kernels {

namespace {

struct Table {
    const char* name;
    double (*dot)(const double*, const double*, std::size_t);
    double (*sum)(const double*, std::size_t);
    double (*max_value)(const double*, std::size_t);
    void (*axpy)(double, const double*, double*, std::size_t);
    void (*add)(const double*, const double*, double*, std::size_t);
    void (*sub)(const double*, const double*, double*, std::size_t);
    void (*mul)(const double*, const double*, double*, std::size_t);
    void (*scale)(double, const double*, double*, std::size_t);
    void (*adam_update)(double*, double*, double*, const double*, std::size_t, double, double,
                        double, double, double, double);
};

constexpr Table kScalar{
    "scalar",     scalar::dot, scalar::sum, scalar::max_value,   scalar::axpy,
    scalar::add,  scalar::sub, scalar::mul, scalar::scale,       scalar::adam_update,
};

#if defined(__x86_64__) || defined(_M_X64)
constexpr Table kAvx2{
    "avx2",     avx2::dot, avx2::sum, avx2::max_value,   avx2::axpy,
    avx2::add,  avx2::sub, avx2::mul, avx2::scale,       avx2::adam_update,
};

bool cpu_has_avx2() {
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
}
#endif

const Table& select() {
    static const Table* chosen = [] {
        const char* env = std::getenv("HIERMIL_ISA");
        const bool force_scalar = env && std::strcmp(env, "scalar") == 0;
#if defined(__x86_64__) || defined(_M_X64)
        if (!force_scalar && cpu_has_avx2()) return &kAvx2;
#endif
        (void)force_scalar;
        return &kScalar;
    }();
    return *chosen;
}

}  // namespace

const char* active_isa() { return select().name; }

bool avx2_available() {
#if defined(__x86_64__) || defined(_M_X64)
    return cpu_has_avx2();
#else
    return false;
#endif
}

double dot(const double* a, const double* b, std::size_t n) { return select().dot(a, b, n); }
double sum(const double* x, std::size_t n) { return select().sum(x, n); }
double max_value(const double* x, std::size_t n) { return select().max_value(x, n); }
void axpy(double alpha, const double* x, double* y, std::size_t n) {
    select().axpy(alpha, x, y, n);
}
void add(const double* a, const double* b, double* out, std::size_t n) {
    select().add(a, b, out, n);
}
void sub(const double* a, const double* b, double* out, std::size_t n) {
    select().sub(a, b, out, n);
}
void mul(const double* a, const double* b, double* out, std::size_t n) {
    select().mul(a, b, out, n);
}
void scale(double alpha, const double* x, double* out, std::size_t n) {
    select().scale(alpha, x, out, n);
}
void adam_update(double* p, double* m, double* v, const double* g, std::size_t n, double lr,
                 double beta1, double beta2, double eps, double bc1, double bc2) {
    select().adam_update(p, m, v, g, n, lr, beta1, beta2, eps, bc1, bc2);
}

}  // namespace hiermil::kernels
