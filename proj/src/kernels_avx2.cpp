#include "leaps/kernels.hpp"

#include <cmath>

#if defined(__x86_64__) || defined(_M_X64)
#define LEAPS_X86 1
#include <immintrin.h>
#else
#define LEAPS_X86 0
#endif

namespace leaps::kernels {

#if LEAPS_X86
namespace {

inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d sh = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

void a_axpy(double* y, double a, const double* x, std::size_t n) {
    const __m256d va = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d vy = _mm256_loadu_pd(y + i);
        vy = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), vy);
        _mm256_storeu_pd(y + i, vy);
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

double a_dot(const double* x, const double* y, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
    }
    for (; i + 4 <= n; i += 4)
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    double acc = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) acc += x[i] * y[i];
    return acc;
}

double a_sum(const double* x, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(x + i));
    double acc = hsum(acc0);
    for (; i < n; ++i) acc += x[i];
    return acc;
}

double a_sumsq(const double* x, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d v = _mm256_loadu_pd(x + i);
        acc0 = _mm256_fmadd_pd(v, v, acc0);
    }
    double acc = hsum(acc0);
    for (; i < n; ++i) acc += x[i] * x[i];
    return acc;
}

double a_sum_abs_diff(const double* x, const double* y, std::size_t n) {
    const __m256d signmask = _mm256_set1_pd(-0.0);
    __m256d acc0 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d d = _mm256_sub_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i));
        acc0 = _mm256_add_pd(acc0, _mm256_andnot_pd(signmask, d));
    }
    double acc = hsum(acc0);
    for (; i < n; ++i) acc += std::abs(x[i] - y[i]);
    return acc;
}

void a_add(double* out, const double* a, const double* b, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) out[i] = a[i] + b[i];
}

void a_sub(double* out, const double* a, const double* b, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) out[i] = a[i] - b[i];
}

void a_mul(double* out, const double* a, const double* b, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) out[i] = a[i] * b[i];
}

void a_scale(double* out, const double* x, double a, std::size_t n) {
    const __m256d va = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
    for (; i < n; ++i) out[i] = a * x[i];
}

void a_clamp(double* x, double lo, double hi, std::size_t n) {
    const __m256d vlo = _mm256_set1_pd(lo);
    const __m256d vhi = _mm256_set1_pd(hi);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d v = _mm256_loadu_pd(x + i);
        v = _mm256_min_pd(_mm256_max_pd(v, vlo), vhi);
        _mm256_storeu_pd(x + i, v);
    }
    for (; i < n; ++i) x[i] = x[i] < lo ? lo : (x[i] > hi ? hi : x[i]);
}

void a_relu_fwd(double* out, const double* x, std::size_t n) {
    const __m256d z = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_max_pd(_mm256_loadu_pd(x + i), z));
    for (; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void a_relu_bwd(double* dx, const double* x, const double* dy, std::size_t n) {
    const __m256d z = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(x + i), z, _CMP_GT_OQ);
        _mm256_storeu_pd(dx + i, _mm256_and_pd(mask, _mm256_loadu_pd(dy + i)));
    }
    for (; i < n; ++i) dx[i] = x[i] > 0.0 ? dy[i] : 0.0;
}

void a_jaccard_acc(const double* a, const double* b, std::size_t n,
                   double* nume, double* deno) {
    const __m256d z = _mm256_setzero_pd();
    __m256d vnu = z, vde = z;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d va = _mm256_loadu_pd(a + i);
        __m256d vb = _mm256_loadu_pd(b + i);
        __m256d ap = _mm256_max_pd(va, z);
        __m256d an = _mm256_max_pd(_mm256_sub_pd(z, va), z);
        __m256d bp = _mm256_max_pd(vb, z);
        __m256d bn = _mm256_max_pd(_mm256_sub_pd(z, vb), z);
        vnu = _mm256_add_pd(vnu, _mm256_add_pd(_mm256_min_pd(ap, bp), _mm256_min_pd(an, bn)));
        vde = _mm256_add_pd(vde, _mm256_add_pd(_mm256_max_pd(ap, bp), _mm256_max_pd(an, bn)));
    }
    double nu = hsum(vnu), de = hsum(vde);
    for (; i < n; ++i) {
        const double ap = a[i] > 0.0 ? a[i] : 0.0;
        const double an = a[i] < 0.0 ? -a[i] : 0.0;
        const double bp = b[i] > 0.0 ? b[i] : 0.0;
        const double bn = b[i] < 0.0 ? -b[i] : 0.0;
        nu += ap < bp ? ap : bp;
        nu += an < bn ? an : bn;
        de += ap > bp ? ap : bp;
        de += an > bn ? an : bn;
    }
    *nume += nu;
    *deno += de;
}

}  // namespace

const KernelTable kAvx2 = {
    a_axpy, a_dot, a_sum, a_sumsq, a_sum_abs_diff,
    a_add,  a_sub, a_mul, a_scale, a_clamp,
    a_relu_fwd, a_relu_bwd, a_jaccard_acc,
};

#else  // non-x86 builds fall back to the scalar table

const KernelTable kAvx2 = kScalar;

#endif

}  // namespace leaps::kernels
