#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "leaps/tensor.hpp"

// Tape-free reverse-mode autodiff over Tensor. Graphs are built per
// iteration by the ops below and freed when the last Var reference drops.
// Everything is double precision; deterministic given a fixed op order.

namespace leaps::ag {

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
    Tensor value;
    Tensor grad;  // allocated lazily on first accumulation
    bool requires_grad = false;
    std::vector<Var> parents;
    std::function<void(Node&)> backward_fn;  // reads this->grad, accumulates into parents

    Tensor& ensure_grad() {
        if (grad.numel() == 0) grad = Tensor(value.shape());
        return grad;
    }
};

Var leaf(Tensor value, bool requires_grad);
inline Var constant(Tensor value) { return leaf(std::move(value), false); }
Var scalar(double v);

// Seeds d(root)/d(root) = 1 (root must be scalar) and runs reverse sweep.
void backward(const Var& root);

// ---- elementwise ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& x, double c);
Var add_const(const Var& x, double c);
Var square(const Var& x);
Var abs_v(const Var& x);
Var relu(const Var& x);
Var gelu(const Var& x);
Var elem_min(const Var& a, const Var& b);
Var elem_max(const Var& a, const Var& b);

// ---- scalar-variable algebra (1-element Vars) ----
Var mul_sv(const Var& x, const Var& s);   // x * s[0]
Var div_ss(const Var& a, const Var& b);   // a[0] / b[0]
Var sqrt_s(const Var& x);                 // elementwise sqrt (used on scalars/vectors)

// ---- reductions / shape ----
Var sum(const Var& x);
Var mean(const Var& x);
Var reduce_sum(const Var& x, const std::vector<int>& axes);
Var reduce_mean(const Var& x, const std::vector<int>& axes);
Var reshape(const Var& x, std::vector<long> shape);
Var permute(const Var& x, const std::vector<int>& perm);
// out[i] = x[indices[i]]; backward scatter-adds. Pure re-indexing.
Var take(const Var& x, std::vector<long> indices, std::vector<long> out_shape);
Var slice_axis0(const Var& x, long begin, long end);

// ---- linear algebra ----
Var matmul(const Var& a, const Var& b);                 // [M,K]x[K,N]
Var bmm(const Var& a, const Var& b);                    // [B,M,K]x[B,K,N]
Var add_rowvec(const Var& x, const Var& b);             // x[R,D] + b[D]
Var linear(const Var& x, const Var& w, const Var& b);   // x[R,D]·w[D,K]+b

// ---- nn ----
struct Conv3dGeom {
    long st = 1, sh = 1, sw = 1;
    long pt = 0, ph = 0, pw = 0;
};
Var conv3d(const Var& x, const Var& w, const Var& b, const Conv3dGeom& g);

Var batchnorm_eval(const Var& x, const Var& gamma, const Var& beta,
                   const Tensor& running_mean, const Tensor& running_var, double eps);
// Training-mode BN over (N,T,H,W); updates running stats in place (EMA with
// the given momentum, population variance).
Var batchnorm_train(const Var& x, const Var& gamma, const Var& beta,
                    Tensor& running_mean, Tensor& running_var,
                    double momentum, double eps);

Var layernorm(const Var& x, const Var& gamma, const Var& beta, double eps);  // over last axis
Var softmax_lastaxis(const Var& x);
// mean over rows of -log softmax(logits)[label]; logits [N,K]
Var cross_entropy_logits(const Var& logits, const std::vector<long>& labels);

// value-only helpers
std::vector<double> softmax_row(const double* logits, long k);

}  // namespace leaps::ag
