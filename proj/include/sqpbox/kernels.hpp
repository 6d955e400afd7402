#pragma once

#include <cstddef>

// Vector kernels used by the inner loops (weighted norms and inner products,
// CG updates, box projection). Every kernel has a scalar reference
// implementation and, on x86-64 with AVX2+FMA, a vectorized variant selected
// at runtime. The two variants are equivalence-tested against each other;
// results may differ by reduction order at round-off level.

namespace sqpbox::kern {

enum class Backend { scalar, avx2 };

/// Backend that dispatched calls currently use.
Backend active_backend();

/// Override the dispatch, e.g. to compare backends in tests. Returns false
/// (and leaves the dispatch unchanged) if the requested backend is not
/// supported by the executing CPU.
bool force_backend(Backend b);

/// True if the executing CPU supports the AVX2 variants.
bool avx2_supported();

/// sum_i x[i] * y[i]
double dot(const double* x, const double* y, std::size_t n);

/// sum_i w[i] * x[i] * y[i]  (mu-weighted inner product)
double dot3(const double* w, const double* x, const double* y, std::size_t n);

/// max_i |x[i]|, 0 for n == 0
double max_abs(const double* x, std::size_t n);

/// y[i] += a * x[i]
void axpy(double a, const double* x, double* y, std::size_t n);

/// out[i] = a * x[i] + b * y[i]  (aliasing with x or y allowed)
void axpby(double a, const double* x, double b, const double* y, double* out,
           std::size_t n);

/// out[i] = min(max(x[i], lo), hi); lo/hi may be -inf/+inf
void clamp(const double* x, double lo, double hi, double* out, std::size_t n);

} // namespace sqpbox::kern
