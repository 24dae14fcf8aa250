#include "leaps/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace leaps::kernels {
namespace {

void s_axpy(double* y, double a, const double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

double s_dot(const double* x, const double* y, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
    return acc;
}

double s_sum(const double* x, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i];
    return acc;
}

double s_sumsq(const double* x, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i] * x[i];
    return acc;
}

double s_sum_abs_diff(const double* x, const double* y, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += std::abs(x[i] - y[i]);
    return acc;
}

void s_add(double* out, const double* a, const double* b, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void s_sub(double* out, const double* a, const double* b, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void s_mul(double* out, const double* a, const double* b, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void s_scale(double* out, const double* x, double a, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a * x[i];
}

void s_clamp(double* x, double lo, double hi, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) x[i] = std::clamp(x[i], lo, hi);
}

void s_relu_fwd(double* out, const double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void s_relu_bwd(double* dx, const double* x, const double* dy, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) dx[i] = x[i] > 0.0 ? dy[i] : 0.0;
}

void s_jaccard_acc(const double* a, const double* b, std::size_t n,
                   double* nume, double* deno) {
    double nu = 0.0, de = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double ap = a[i] > 0.0 ? a[i] : 0.0;
        const double an = a[i] < 0.0 ? -a[i] : 0.0;
        const double bp = b[i] > 0.0 ? b[i] : 0.0;
        const double bn = b[i] < 0.0 ? -b[i] : 0.0;
        nu += std::min(ap, bp) + std::min(an, bn);
        de += std::max(ap, bp) + std::max(an, bn);
    }
    *nume += nu;
    *deno += de;
}

}  // namespace

const KernelTable kScalar = {
    s_axpy, s_dot, s_sum, s_sumsq, s_sum_abs_diff,
    s_add,  s_sub, s_mul, s_scale, s_clamp,
    s_relu_fwd, s_relu_bwd, s_jaccard_acc,
};

}  // namespace leaps::kernels
