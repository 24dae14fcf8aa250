#pragma once

#include <cstddef>

// Scalar reference kernels plus AVX2 variants for the hot inner loops
// (conv3d accumulation, matmul, elementwise loss math). The active variant
// is chosen once at startup from CPUID; set LEAPS_SIMD=scalar|avx2 to force.

namespace leaps::kernels {

struct KernelTable {
    // y[i] += a * x[i]
    void (*axpy)(double* y, double a, const double* x, std::size_t n);
    // sum_i x[i] * y[i]
    double (*dot)(const double* x, const double* y, std::size_t n);
    double (*sum)(const double* x, std::size_t n);
    double (*sumsq)(const double* x, std::size_t n);
    // sum_i |x[i] - y[i]|
    double (*sum_abs_diff)(const double* x, const double* y, std::size_t n);
    void (*add)(double* out, const double* a, const double* b, std::size_t n);
    void (*sub)(double* out, const double* a, const double* b, std::size_t n);
    void (*mul)(double* out, const double* a, const double* b, std::size_t n);
    void (*scale)(double* out, const double* x, double a, std::size_t n);
    void (*clamp)(double* x, double lo, double hi, std::size_t n);
    void (*relu_fwd)(double* out, const double* x, std::size_t n);
    // dx[i] = x[i] > 0 ? dy[i] : 0
    void (*relu_bwd)(double* dx, const double* x, const double* dy, std::size_t n);
    // Jaccard accumulators over the positive/negative split:
    // nume += sum min(a~,b~), deno += sum max(a~,b~)
    void (*jaccard_acc)(const double* a, const double* b, std::size_t n,
                        double* nume, double* deno);
};

extern const KernelTable kScalar;
extern const KernelTable kAvx2;

// Active table (set during static init, overridable via LEAPS_SIMD).
const KernelTable& active();
const char* active_name();
void force(const char* name);  // "scalar" or "avx2"; throws on unknown/unsupported

bool avx2_supported();

}  // namespace leaps::kernels
