#include "sqpbox/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

namespace sqpbox::kern {

// ---------------------------------------------------------------------------
// Scalar reference kernels
// ---------------------------------------------------------------------------

namespace scalar {

double dot(const double* x, const double* y, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
    return s;
}

double dot3(const double* w, const double* x, const double* y, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += w[i] * x[i] * y[i];
    return s;
}

double max_abs(const double* x, std::size_t n) {
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i) m = std::max(m, std::abs(x[i]));
    return m;
}

void axpy(double a, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void axpby(double a, const double* x, double b, const double* y, double* out,
           std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a * x[i] + b * y[i];
}

void clamp(const double* x, double lo, double hi, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = std::min(std::max(x[i], lo), hi);
}

} // namespace scalar

// AVX2 variants live in kernels_avx2.cpp (compiled with -mavx2 -mfma).
namespace avx2 {
double dot(const double* x, const double* y, std::size_t n);
double dot3(const double* w, const double* x, const double* y, std::size_t n);
double max_abs(const double* x, std::size_t n);
void axpy(double a, const double* x, double* y, std::size_t n);
void axpby(double a, const double* x, double b, const double* y, double* out,
           std::size_t n);
void clamp(const double* x, double lo, double hi, double* out, std::size_t n);
} // namespace avx2

// ---------------------------------------------------------------------------
// Runtime dispatch
// ---------------------------------------------------------------------------

namespace {

struct KernelTable {
    double (*dot)(const double*, const double*, std::size_t);
    double (*dot3)(const double*, const double*, const double*, std::size_t);
    double (*max_abs)(const double*, std::size_t);
    void (*axpy)(double, const double*, double*, std::size_t);
    void (*axpby)(double, const double*, double, const double*, double*, std::size_t);
    void (*clamp)(const double*, double, double, double*, std::size_t);
};

constexpr KernelTable kScalarTable = {
    scalar::dot, scalar::dot3, scalar::max_abs,
    scalar::axpy, scalar::axpby, scalar::clamp,
};

#if defined(__x86_64__) || defined(_M_X64)
constexpr KernelTable kAvx2Table = {
    avx2::dot, avx2::dot3, avx2::max_abs,
    avx2::axpy, avx2::axpby, avx2::clamp,
};
#endif

bool detect_avx2() {
#if defined(__x86_64__) && (defined(__GNUC__) || defined(__clang__))
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

struct Dispatch {
    const KernelTable* table;
    Backend backend;
    Dispatch() {
#if defined(__x86_64__) || defined(_M_X64)
        if (detect_avx2()) {
            table = &kAvx2Table;
            backend = Backend::avx2;
            return;
        }
#endif
        table = &kScalarTable;
        backend = Backend::scalar;
    }
};

Dispatch& dispatch() {
    static Dispatch d;
    return d;
}

} // namespace

Backend active_backend() { return dispatch().backend; }

bool avx2_supported() { return detect_avx2(); }

bool force_backend(Backend b) {
    if (b == Backend::avx2) {
#if defined(__x86_64__) || defined(_M_X64)
        if (!detect_avx2()) return false;
        dispatch().table = &kAvx2Table;
        dispatch().backend = Backend::avx2;
        return true;
#else
        return false;
#endif
    }
    dispatch().table = &kScalarTable;
    dispatch().backend = Backend::scalar;
    return true;
}

double dot(const double* x, const double* y, std::size_t n) {
    return dispatch().table->dot(x, y, n);
}

double dot3(const double* w, const double* x, const double* y, std::size_t n) {
    return dispatch().table->dot3(w, x, y, n);
}

double max_abs(const double* x, std::size_t n) {
    return dispatch().table->max_abs(x, n);
}

void axpy(double a, const double* x, double* y, std::size_t n) {
    dispatch().table->axpy(a, x, y, n);
}

void axpby(double a, const double* x, double b, const double* y, double* out,
           std::size_t n) {
    dispatch().table->axpby(a, x, b, y, out, n);
}

void clamp(const double* x, double lo, double hi, double* out, std::size_t n) {
    dispatch().table->clamp(x, lo, hi, out, n);
}

} // namespace sqpbox::kern
