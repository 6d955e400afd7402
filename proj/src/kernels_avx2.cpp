// AVX2+FMA kernel variants. This translation unit is compiled with
// -mavx2 -mfma; the functions are only ever called after the dispatcher has
// confirmed CPU support.

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <cstddef>

namespace sqpbox::kern::avx2 {

namespace {

// Ordered horizontal sum: ((l0+l1)+(l2+l3)). Fixed order keeps results
// deterministic for a given backend.
inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    double l0 = _mm_cvtsd_f64(lo);
    double l1 = _mm_cvtsd_f64(_mm_unpackhi_pd(lo, lo));
    double l2 = _mm_cvtsd_f64(hi);
    double l3 = _mm_cvtsd_f64(_mm_unpackhi_pd(hi, hi));
    return (l0 + l1) + (l2 + l3);
}

} // namespace

double dot(const double* x, const double* y, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
    }
    for (; i + 4 <= n; i += 4) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    }
    double s = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) s += x[i] * y[i];
    return s;
}

double dot3(const double* w, const double* x, const double* y, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256d p0 = _mm256_mul_pd(_mm256_loadu_pd(w + i), _mm256_loadu_pd(x + i));
        __m256d p1 = _mm256_mul_pd(_mm256_loadu_pd(w + i + 4), _mm256_loadu_pd(x + i + 4));
        acc0 = _mm256_fmadd_pd(p0, _mm256_loadu_pd(y + i), acc0);
        acc1 = _mm256_fmadd_pd(p1, _mm256_loadu_pd(y + i + 4), acc1);
    }
    for (; i + 4 <= n; i += 4) {
        __m256d p = _mm256_mul_pd(_mm256_loadu_pd(w + i), _mm256_loadu_pd(x + i));
        acc0 = _mm256_fmadd_pd(p, _mm256_loadu_pd(y + i), acc0);
    }
    double s = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) s += w[i] * x[i] * y[i];
    return s;
}

double max_abs(const double* x, std::size_t n) {
    const __m256d sign_mask = _mm256_set1_pd(-0.0);
    __m256d m = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d v = _mm256_andnot_pd(sign_mask, _mm256_loadu_pd(x + i));
        m = _mm256_max_pd(m, v);
    }
    __m128d lo = _mm256_castpd256_pd128(m);
    __m128d hi = _mm256_extractf128_pd(m, 1);
    __m128d mx = _mm_max_pd(lo, hi);
    double r = std::max(_mm_cvtsd_f64(mx), _mm_cvtsd_f64(_mm_unpackhi_pd(mx, mx)));
    for (; i < n; ++i) r = std::max(r, std::abs(x[i]));
    return r;
}

void axpy(double a, const double* x, double* y, std::size_t n) {
    const __m256d av = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d r = _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i));
        _mm256_storeu_pd(y + i, r);
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

void axpby(double a, const double* x, double b, const double* y, double* out,
           std::size_t n) {
    const __m256d av = _mm256_set1_pd(a);
    const __m256d bv = _mm256_set1_pd(b);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d r = _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i),
                                    _mm256_mul_pd(bv, _mm256_loadu_pd(y + i)));
        _mm256_storeu_pd(out + i, r);
    }
    for (; i < n; ++i) out[i] = a * x[i] + b * y[i];
}

void clamp(const double* x, double lo, double hi, double* out, std::size_t n) {
    const __m256d lov = _mm256_set1_pd(lo);
    const __m256d hiv = _mm256_set1_pd(hi);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d v = _mm256_loadu_pd(x + i);
        v = _mm256_min_pd(_mm256_max_pd(v, lov), hiv);
        _mm256_storeu_pd(out + i, v);
    }
    for (; i < n; ++i) out[i] = std::min(std::max(x[i], lo), hi);
}

} // namespace sqpbox::kern::avx2

#endif // x86-64
