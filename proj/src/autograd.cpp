#include "leaps/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "leaps/kernels.hpp"

namespace leaps::ag {

namespace {
const kernels::KernelTable& K() { return kernels::active(); }

Var make_node(Tensor value, std::vector<Var> parents,
              std::function<void(Node&)> bwd) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->parents = std::move(parents);
    bool rg = false;
    for (const auto& p : n->parents) rg = rg || p->requires_grad;
    n->requires_grad = rg;
    if (rg) n->backward_fn = std::move(bwd);
    return n;
}

void accum(Node& p, const Tensor& g) {
    Tensor& dst = p.ensure_grad();
    K().add(dst.data(), dst.data(), g.data(), static_cast<std::size_t>(g.numel()));
}

}  // namespace

Var leaf(Tensor value, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return n;
}

Var scalar(double v) {
    Tensor t({1});
    t[0] = v;
    return constant(std::move(t));
}

void backward(const Var& root) {
    if (root->value.numel() != 1)
        throw std::invalid_argument("backward: root must be scalar");
    // postorder DFS, then reverse
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.push_back({root.get(), 0});
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [n, i] = stack.back();
        if (i < n->parents.size()) {
            Node* p = n->parents[i].get();
            ++i;
            if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    root->ensure_grad()[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && n->grad.numel() > 0) n->backward_fn(*n);
    }
}

// ---------------- elementwise ----------------

Var add(const Var& a, const Var& b) {
    if (!a->value.same_shape(b->value)) throw std::invalid_argument("add: shape mismatch");
    Tensor out(a->value.shape());
    K().add(out.data(), a->value.data(), b->value.data(), out.numel());
    return make_node(std::move(out), {a, b}, [](Node& n) {
        if (n.parents[0]->requires_grad) accum(*n.parents[0], n.grad);
        if (n.parents[1]->requires_grad) accum(*n.parents[1], n.grad);
    });
}

Var sub(const Var& a, const Var& b) {
    if (!a->value.same_shape(b->value)) throw std::invalid_argument("sub: shape mismatch");
    Tensor out(a->value.shape());
    K().sub(out.data(), a->value.data(), b->value.data(), out.numel());
    return make_node(std::move(out), {a, b}, [](Node& n) {
        if (n.parents[0]->requires_grad) accum(*n.parents[0], n.grad);
        if (n.parents[1]->requires_grad) {
            Tensor& dst = n.parents[1]->ensure_grad();
            K().sub(dst.data(), dst.data(), n.grad.data(), n.grad.numel());
        }
    });
}

Var mul(const Var& a, const Var& b) {
    if (!a->value.same_shape(b->value)) throw std::invalid_argument("mul: shape mismatch");
    Tensor out(a->value.shape());
    K().mul(out.data(), a->value.data(), b->value.data(), out.numel());
    return make_node(std::move(out), {a, b}, [](Node& n) {
        const long m = n.grad.numel();
        Tensor tmp(n.grad.shape());
        if (n.parents[0]->requires_grad) {
            K().mul(tmp.data(), n.grad.data(), n.parents[1]->value.data(), m);
            accum(*n.parents[0], tmp);
        }
        if (n.parents[1]->requires_grad) {
            K().mul(tmp.data(), n.grad.data(), n.parents[0]->value.data(), m);
            accum(*n.parents[1], tmp);
        }
    });
}

Var scale(const Var& x, double c) {
    Tensor out(x->value.shape());
    K().scale(out.data(), x->value.data(), c, out.numel());
    return make_node(std::move(out), {x}, [c](Node& n) {
        Tensor& dst = n.parents[0]->ensure_grad();
        K().axpy(dst.data(), c, n.grad.data(), n.grad.numel());
    });
}

Var add_const(const Var& x, double c) {
    Tensor out = x->value;
    for (long i = 0; i < out.numel(); ++i) out[i] += c;
    return make_node(std::move(out), {x}, [](Node& n) { accum(*n.parents[0], n.grad); });
}

Var square(const Var& x) {
    Tensor out(x->value.shape());
    K().mul(out.data(), x->value.data(), x->value.data(), out.numel());
    return make_node(std::move(out), {x}, [](Node& n) {
        Tensor tmp(n.grad.shape());
        K().mul(tmp.data(), n.grad.data(), n.parents[0]->value.data(), n.grad.numel());
        Tensor& dst = n.parents[0]->ensure_grad();
        K().axpy(dst.data(), 2.0, tmp.data(), tmp.numel());
    });
}

Var abs_v(const Var& x) {
    Tensor out(x->value.shape());
    for (long i = 0; i < out.numel(); ++i) out[i] = std::abs(x->value[i]);
    return make_node(std::move(out), {x}, [](Node& n) {
        const Tensor& xv = n.parents[0]->value;
        Tensor tmp(n.grad.shape());
        for (long i = 0; i < tmp.numel(); ++i)
            tmp[i] = n.grad[i] * (xv[i] > 0.0 ? 1.0 : (xv[i] < 0.0 ? -1.0 : 0.0));
        accum(*n.parents[0], tmp);
    });
}

Var relu(const Var& x) {
    Tensor out(x->value.shape());
    K().relu_fwd(out.data(), x->value.data(), out.numel());
    return make_node(std::move(out), {x}, [](Node& n) {
        Tensor tmp(n.grad.shape());
        K().relu_bwd(tmp.data(), n.parents[0]->value.data(), n.grad.data(), tmp.numel());
        accum(*n.parents[0], tmp);
    });
}

Var gelu(const Var& x) {
    Tensor out(x->value.shape());
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    for (long i = 0; i < out.numel(); ++i) {
        const double v = x->value[i];
        out[i] = 0.5 * v * (1.0 + std::erf(v * inv_sqrt2));
    }
    return make_node(std::move(out), {x}, [inv_sqrt2](Node& n) {
        const Tensor& xv = n.parents[0]->value;
        const double inv_sqrt2pi = 1.0 / std::sqrt(2.0 * M_PI);
        Tensor tmp(n.grad.shape());
        for (long i = 0; i < tmp.numel(); ++i) {
            const double v = xv[i];
            const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
            const double pdf = inv_sqrt2pi * std::exp(-0.5 * v * v);
            tmp[i] = n.grad[i] * (cdf + v * pdf);
        }
        accum(*n.parents[0], tmp);
    });
}

Var elem_min(const Var& a, const Var& b) {
    if (!a->value.same_shape(b->value)) throw std::invalid_argument("elem_min: shape mismatch");
    Tensor out(a->value.shape());
    for (long i = 0; i < out.numel(); ++i) out[i] = std::min(a->value[i], b->value[i]);
    return make_node(std::move(out), {a, b}, [](Node& n) {
        const Tensor& av = n.parents[0]->value;
        const Tensor& bv = n.parents[1]->value;
        Tensor ga(n.grad.shape()), gb(n.grad.shape());
        for (long i = 0; i < n.grad.numel(); ++i) {
            if (av[i] <= bv[i]) ga[i] = n.grad[i];
            else gb[i] = n.grad[i];
        }
        if (n.parents[0]->requires_grad) accum(*n.parents[0], ga);
        if (n.parents[1]->requires_grad) accum(*n.parents[1], gb);
    });
}

Var elem_max(const Var& a, const Var& b) {
    if (!a->value.same_shape(b->value)) throw std::invalid_argument("elem_max: shape mismatch");
    Tensor out(a->value.shape());
    for (long i = 0; i < out.numel(); ++i) out[i] = std::max(a->value[i], b->value[i]);
    return make_node(std::move(out), {a, b}, [](Node& n) {
        const Tensor& av = n.parents[0]->value;
        const Tensor& bv = n.parents[1]->value;
        Tensor ga(n.grad.shape()), gb(n.grad.shape());
        for (long i = 0; i < n.grad.numel(); ++i) {
            if (av[i] >= bv[i]) ga[i] = n.grad[i];
            else gb[i] = n.grad[i];
        }
        if (n.parents[0]->requires_grad) accum(*n.parents[0], ga);
        if (n.parents[1]->requires_grad) accum(*n.parents[1], gb);
    });
}

// ---------------- scalar algebra ----------------

Var mul_sv(const Var& x, const Var& s) {
    if (s->value.numel() != 1) throw std::invalid_argument("mul_sv: s must be scalar");
    Tensor out(x->value.shape());
    K().scale(out.data(), x->value.data(), s->value[0], out.numel());
    return make_node(std::move(out), {x, s}, [](Node& n) {
        const double sv = n.parents[1]->value[0];
        if (n.parents[0]->requires_grad) {
            Tensor& dst = n.parents[0]->ensure_grad();
            K().axpy(dst.data(), sv, n.grad.data(), n.grad.numel());
        }
        if (n.parents[1]->requires_grad) {
            n.parents[1]->ensure_grad()[0] +=
                K().dot(n.grad.data(), n.parents[0]->value.data(), n.grad.numel());
        }
    });
}

Var div_ss(const Var& a, const Var& b) {
    if (a->value.numel() != 1 || b->value.numel() != 1)
        throw std::invalid_argument("div_ss: scalars required");
    Tensor out({1});
    out[0] = a->value[0] / b->value[0];
    return make_node(std::move(out), {a, b}, [](Node& n) {
        const double av = n.parents[0]->value[0];
        const double bv = n.parents[1]->value[0];
        if (n.parents[0]->requires_grad)
            n.parents[0]->ensure_grad()[0] += n.grad[0] / bv;
        if (n.parents[1]->requires_grad)
            n.parents[1]->ensure_grad()[0] += -n.grad[0] * av / (bv * bv);
    });
}

Var sqrt_s(const Var& x) {
    Tensor out(x->value.shape());
    for (long i = 0; i < out.numel(); ++i) out[i] = std::sqrt(x->value[i]);
    Tensor keep = out;
    return make_node(std::move(out), {x}, [keep](Node& n) {
        Tensor tmp(n.grad.shape());
        for (long i = 0; i < tmp.numel(); ++i)
            tmp[i] = n.grad[i] * 0.5 / std::max(keep[i], 1e-300);
        accum(*n.parents[0], tmp);
    });
}

// ---------------- reductions / shape ----------------

Var sum(const Var& x) {
    Tensor out({1});
    out[0] = K().sum(x->value.data(), x->value.numel());
    return make_node(std::move(out), {x}, [](Node& n) {
        Tensor& dst = n.parents[0]->ensure_grad();
        const double g = n.grad[0];
        for (long i = 0; i < dst.numel(); ++i) dst[i] += g;
    });
}

Var mean(const Var& x) {
    const double inv = 1.0 / static_cast<double>(x->value.numel());
    return scale(sum(x), inv);
}

namespace {

// maps every input linear index to its reduced-output linear index
std::vector<long> reduce_index_map(const std::vector<long>& shape,
                                   const std::vector<int>& axes,
                                   std::vector<long>* out_shape) {
    const int r = static_cast<int>(shape.size());
    std::vector<bool> red(r, false);
    for (int a : axes) red.at(a) = true;
    out_shape->clear();
    for (int i = 0; i < r; ++i)
        if (!red[i]) out_shape->push_back(shape[i]);
    if (out_shape->empty()) out_shape->push_back(1);

    std::vector<long> out_strides(r, 0);
    long s = 1;
    for (int i = r - 1; i >= 0; --i) {
        if (!red[i]) {
            out_strides[i] = s;
            s *= shape[i];
        }
    }
    const long n = Tensor::numel_of(shape);
    std::vector<long> map(n);
    std::vector<long> idx(r, 0);
    for (long li = 0; li < n; ++li) {
        long o = 0;
        for (int i = 0; i < r; ++i) o += idx[i] * out_strides[i];
        map[li] = o;
        for (int i = r - 1; i >= 0; --i) {
            if (++idx[i] < shape[i]) break;
            idx[i] = 0;
        }
    }
    return map;
}

}  // namespace

Var reduce_sum(const Var& x, const std::vector<int>& axes) {
    std::vector<long> out_shape;
    auto map = reduce_index_map(x->value.shape(), axes, &out_shape);
    Tensor out(out_shape);
    for (long i = 0; i < x->value.numel(); ++i) out[map[i]] += x->value[i];
    auto map_keep = std::make_shared<std::vector<long>>(std::move(map));
    return make_node(std::move(out), {x}, [map_keep](Node& n) {
        Tensor& dst = n.parents[0]->ensure_grad();
        for (long i = 0; i < dst.numel(); ++i) dst[i] += n.grad[(*map_keep)[i]];
    });
}

Var reduce_mean(const Var& x, const std::vector<int>& axes) {
    Var s = reduce_sum(x, axes);
    const double inv = static_cast<double>(s->value.numel()) /
                       static_cast<double>(x->value.numel());
    return scale(s, inv);
}

Var reshape(const Var& x, std::vector<long> shape) {
    Tensor out = x->value.reshaped(shape);
    return make_node(std::move(out), {x}, [](Node& n) {
        Tensor g = n.grad.reshaped(n.parents[0]->value.shape());
        accum(*n.parents[0], g);
    });
}

Var permute(const Var& x, const std::vector<int>& perm) {
    const auto& shape = x->value.shape();
    const int r = static_cast<int>(shape.size());
    if (static_cast<int>(perm.size()) != r) throw std::invalid_argument("permute: rank mismatch");
    std::vector<long> out_shape(r);
    for (int i = 0; i < r; ++i) out_shape[i] = shape[perm[i]];
    std::vector<long> in_strides(r, 1);
    for (int i = r - 2; i >= 0; --i) in_strides[i] = in_strides[i + 1] * shape[i + 1];

    const long n = x->value.numel();
    std::vector<long> map(n);  // out index -> in index
    std::vector<long> idx(r, 0);
    for (long lo = 0; lo < n; ++lo) {
        long src = 0;
        for (int i = 0; i < r; ++i) src += idx[i] * in_strides[perm[i]];
        map[lo] = src;
        for (int i = r - 1; i >= 0; --i) {
            if (++idx[i] < out_shape[i]) break;
            idx[i] = 0;
        }
    }
    Tensor out(out_shape);
    for (long i = 0; i < n; ++i) out[i] = x->value[map[i]];
    auto mk = std::make_shared<std::vector<long>>(std::move(map));
    return make_node(std::move(out), {x}, [mk](Node& n) {
        Tensor& dst = n.parents[0]->ensure_grad();
        for (long i = 0; i < n.grad.numel(); ++i) dst[(*mk)[i]] += n.grad[i];
    });
}

Var take(const Var& x, std::vector<long> indices, std::vector<long> out_shape) {
    if (Tensor::numel_of(out_shape) != static_cast<long>(indices.size()))
        throw std::invalid_argument("take: indices/out_shape mismatch");
    Tensor out(out_shape);
    for (std::size_t i = 0; i < indices.size(); ++i) out[i] = x->value[indices[i]];
    auto mk = std::make_shared<std::vector<long>>(std::move(indices));
    return make_node(std::move(out), {x}, [mk](Node& n) {
        Tensor& dst = n.parents[0]->ensure_grad();
        for (long i = 0; i < n.grad.numel(); ++i) dst[(*mk)[i]] += n.grad[i];
    });
}

Var slice_axis0(const Var& x, long begin, long end) {
    const auto& shape = x->value.shape();
    long inner = 1;
    for (std::size_t i = 1; i < shape.size(); ++i) inner *= shape[i];
    std::vector<long> idx((end - begin) * inner);
    for (long i = 0; i < static_cast<long>(idx.size()); ++i) idx[i] = begin * inner + i;
    std::vector<long> out_shape = shape;
    out_shape[0] = end - begin;
    return take(x, std::move(idx), std::move(out_shape));
}

// ---------------- linear algebra ----------------

Var matmul(const Var& a, const Var& b) {
    const auto& as = a->value.shape();
    const auto& bs = b->value.shape();
    if (as.size() != 2 || bs.size() != 2 || as[1] != bs[0])
        throw std::invalid_argument("matmul: bad shapes");
    const long M = as[0], Kd = as[1], N = bs[1];
    Tensor out({M, N});
    for (long m = 0; m < M; ++m)
        for (long k = 0; k < Kd; ++k)
            K().axpy(out.data() + m * N, a->value[m * Kd + k], b->value.data() + k * N, N);
    return make_node(std::move(out), {a, b}, [M, Kd, N](Node& n) {
        if (n.parents[0]->requires_grad) {
            Tensor& da = n.parents[0]->ensure_grad();
            for (long m = 0; m < M; ++m)
                for (long k = 0; k < Kd; ++k)
                    da[m * Kd + k] += K().dot(n.grad.data() + m * N,
                                              n.parents[1]->value.data() + k * N, N);
        }
        if (n.parents[1]->requires_grad) {
            Tensor& db = n.parents[1]->ensure_grad();
            for (long m = 0; m < M; ++m)
                for (long k = 0; k < Kd; ++k)
                    K().axpy(db.data() + k * N, n.parents[0]->value[m * Kd + k],
                             n.grad.data() + m * N, N);
        }
    });
}

Var bmm(const Var& a, const Var& b) {
    const auto& as = a->value.shape();
    const auto& bs = b->value.shape();
    if (as.size() != 3 || bs.size() != 3 || as[0] != bs[0] || as[2] != bs[1])
        throw std::invalid_argument("bmm: bad shapes");
    const long B = as[0], M = as[1], Kd = as[2], N = bs[2];
    Tensor out({B, M, N});
    for (long bi = 0; bi < B; ++bi) {
        const double* ap = a->value.data() + bi * M * Kd;
        const double* bp = b->value.data() + bi * Kd * N;
        double* op = out.data() + bi * M * N;
        for (long m = 0; m < M; ++m)
            for (long k = 0; k < Kd; ++k)
                K().axpy(op + m * N, ap[m * Kd + k], bp + k * N, N);
    }
    return make_node(std::move(out), {a, b}, [B, M, Kd, N](Node& n) {
        for (long bi = 0; bi < B; ++bi) {
            const double* gp = n.grad.data() + bi * M * N;
            const double* ap = n.parents[0]->value.data() + bi * M * Kd;
            const double* bp = n.parents[1]->value.data() + bi * Kd * N;
            if (n.parents[0]->requires_grad) {
                double* da = n.parents[0]->ensure_grad().data() + bi * M * Kd;
                for (long m = 0; m < M; ++m)
                    for (long k = 0; k < Kd; ++k)
                        da[m * Kd + k] += K().dot(gp + m * N, bp + k * N, N);
            }
            if (n.parents[1]->requires_grad) {
                double* db = n.parents[1]->ensure_grad().data() + bi * Kd * N;
                for (long m = 0; m < M; ++m)
                    for (long k = 0; k < Kd; ++k)
                        K().axpy(db + k * N, ap[m * Kd + k], gp + m * N, N);
            }
        }
    });
}

Var add_rowvec(const Var& x, const Var& b) {
    const auto& xs = x->value.shape();
    const long D = xs.back();
    if (b->value.numel() != D) throw std::invalid_argument("add_rowvec: width mismatch");
    const long R = x->value.numel() / D;
    Tensor out(xs);
    for (long r = 0; r < R; ++r)
        K().add(out.data() + r * D, x->value.data() + r * D, b->value.data(), D);
    return make_node(std::move(out), {x, b}, [R, D](Node& n) {
        if (n.parents[0]->requires_grad) accum(*n.parents[0], n.grad);
        if (n.parents[1]->requires_grad) {
            Tensor& db = n.parents[1]->ensure_grad();
            for (long r = 0; r < R; ++r)
                K().add(db.data(), db.data(), n.grad.data() + r * D, D);
        }
    });
}

Var linear(const Var& x, const Var& w, const Var& b) {
    return add_rowvec(matmul(x, w), b);
}

// ---------------- conv3d ----------------

namespace {

// repack [Co,Ci,Kt,Kh,Kw] -> [Ci,Kt,Kh,Kw,Co] so the inner loop runs over Co
Tensor pack_weights(const Tensor& w) {
    const auto& s = w.shape();
    const long Co = s[0], Ci = s[1], Kt = s[2], Kh = s[3], Kw = s[4];
    Tensor p({Ci, Kt, Kh, Kw, Co});
    for (long co = 0; co < Co; ++co)
        for (long ci = 0; ci < Ci; ++ci)
            for (long kt = 0; kt < Kt; ++kt)
                for (long kh = 0; kh < Kh; ++kh)
                    for (long kw = 0; kw < Kw; ++kw)
                        p[(((ci * Kt + kt) * Kh + kh) * Kw + kw) * Co + co] =
                            w[(((co * Ci + ci) * Kt + kt) * Kh + kh) * Kw + kw];
    return p;
}

}  // namespace

Var conv3d(const Var& x, const Var& w, const Var& b, const Conv3dGeom& g) {
    const auto& xs = x->value.shape();
    const auto& ws = w->value.shape();
    if (xs.size() != 5 || ws.size() != 5 || xs[1] != ws[1])
        throw std::invalid_argument("conv3d: bad shapes");
    const long N = xs[0], Ci = xs[1], T = xs[2], H = xs[3], W = xs[4];
    const long Co = ws[0], Kt = ws[2], Kh = ws[3], Kw = ws[4];
    const long To = (T + 2 * g.pt - Kt) / g.st + 1;
    const long Ho = (H + 2 * g.ph - Kh) / g.sh + 1;
    const long Wo = (W + 2 * g.pw - Kw) / g.sw + 1;
    if (To < 1 || Ho < 1 || Wo < 1) throw std::invalid_argument("conv3d: empty output");

    Tensor wp = pack_weights(w->value);
    Tensor out({N, Co, To, Ho, Wo});
    const long out_cs = To * Ho * Wo;  // channel stride in output
    std::vector<double> acc(Co);

    for (long n = 0; n < N; ++n) {
        const double* xn = x->value.data() + n * Ci * T * H * W;
        double* on = out.data() + n * Co * out_cs;
        for (long to = 0; to < To; ++to)
            for (long ho = 0; ho < Ho; ++ho)
                for (long wo = 0; wo < Wo; ++wo) {
                    std::copy(b->value.data(), b->value.data() + Co, acc.data());
                    for (long ci = 0; ci < Ci; ++ci)
                        for (long kt = 0; kt < Kt; ++kt) {
                            const long ti = to * g.st - g.pt + kt;
                            if (ti < 0 || ti >= T) continue;
                            for (long kh = 0; kh < Kh; ++kh) {
                                const long hi = ho * g.sh - g.ph + kh;
                                if (hi < 0 || hi >= H) continue;
                                for (long kw = 0; kw < Kw; ++kw) {
                                    const long wi = wo * g.sw - g.pw + kw;
                                    if (wi < 0 || wi >= W) continue;
                                    const double xv = xn[((ci * T + ti) * H + hi) * W + wi];
                                    K().axpy(acc.data(), xv,
                                             wp.data() + (((ci * Kt + kt) * Kh + kh) * Kw + kw) * Co,
                                             Co);
                                }
                            }
                        }
                    const long pos = (to * Ho + ho) * Wo + wo;
                    for (long co = 0; co < Co; ++co) on[co * out_cs + pos] = acc[co];
                }
    }

    auto wp_keep = std::make_shared<Tensor>(std::move(wp));
    Conv3dGeom gg = g;
    return make_node(std::move(out), {x, w, b},
                     [N, Ci, T, H, W, Co, Kt, Kh, Kw, To, Ho, Wo, out_cs, gg, wp_keep](Node& nd) {
        const bool need_dx = nd.parents[0]->requires_grad;
        const bool need_dw = nd.parents[1]->requires_grad;
        const bool need_db = nd.parents[2]->requires_grad;
        Tensor* dx = need_dx ? &nd.parents[0]->ensure_grad() : nullptr;
        Tensor dwp;
        if (need_dw) dwp = Tensor({Ci, Kt, Kh, Kw, Co});
        Tensor* db = need_db ? &nd.parents[2]->ensure_grad() : nullptr;
        std::vector<double> dacc(Co);

        for (long n = 0; n < N; ++n) {
            const double* xn = nd.parents[0]->value.data() + n * Ci * T * H * W;
            const double* gn = nd.grad.data() + n * Co * out_cs;
            double* dxn = need_dx ? dx->data() + n * Ci * T * H * W : nullptr;
            for (long to = 0; to < To; ++to)
                for (long ho = 0; ho < Ho; ++ho)
                    for (long wo = 0; wo < Wo; ++wo) {
                        const long pos = (to * Ho + ho) * Wo + wo;
                        for (long co = 0; co < Co; ++co) dacc[co] = gn[co * out_cs + pos];
                        if (need_db)
                            for (long co = 0; co < Co; ++co) (*db)[co] += dacc[co];
                        for (long ci = 0; ci < Ci; ++ci)
                            for (long kt = 0; kt < Kt; ++kt) {
                                const long ti = to * gg.st - gg.pt + kt;
                                if (ti < 0 || ti >= T) continue;
                                for (long kh = 0; kh < Kh; ++kh) {
                                    const long hi = ho * gg.sh - gg.ph + kh;
                                    if (hi < 0 || hi >= H) continue;
                                    for (long kw = 0; kw < Kw; ++kw) {
                                        const long wi = wo * gg.sw - gg.pw + kw;
                                        if (wi < 0 || wi >= W) continue;
                                        const long xoff = ((ci * T + ti) * H + hi) * W + wi;
                                        const long woff =
                                            (((ci * Kt + kt) * Kh + kh) * Kw + kw) * Co;
                                        if (need_dx)
                                            dxn[xoff] +=
                                                K().dot(dacc.data(), wp_keep->data() + woff, Co);
                                        if (need_dw)
                                            K().axpy(dwp.data() + woff, xn[xoff], dacc.data(), Co);
                                    }
                                }
                            }
                    }
        }
        if (need_dw) {
            Tensor& dw = nd.parents[1]->ensure_grad();
            for (long co = 0; co < Co; ++co)
                for (long ci = 0; ci < Ci; ++ci)
                    for (long kt = 0; kt < Kt; ++kt)
                        for (long kh = 0; kh < Kh; ++kh)
                            for (long kw = 0; kw < Kw; ++kw)
                                dw[(((co * Ci + ci) * Kt + kt) * Kh + kh) * Kw + kw] +=
                                    dwp[(((ci * Kt + kt) * Kh + kh) * Kw + kw) * Co + co];
        }
    });
}

// ---------------- batch norm ----------------

Var batchnorm_eval(const Var& x, const Var& gamma, const Var& beta,
                   const Tensor& running_mean, const Tensor& running_var, double eps) {
    const auto& xs = x->value.shape();
    const long N = xs[0], C = xs[1];
    const long S = x->value.numel() / (N * C);
    Tensor out(xs);
    std::vector<double> a(C), bsh(C);
    for (long c = 0; c < C; ++c) {
        a[c] = gamma->value[c] / std::sqrt(running_var[c] + eps);
        bsh[c] = beta->value[c] - a[c] * running_mean[c];
    }
    for (long n = 0; n < N; ++n)
        for (long c = 0; c < C; ++c) {
            const double* xp = x->value.data() + (n * C + c) * S;
            double* op = out.data() + (n * C + c) * S;
            for (long i = 0; i < S; ++i) op[i] = a[c] * xp[i] + bsh[c];
        }
    std::vector<double> inv_std(C);
    for (long c = 0; c < C; ++c) inv_std[c] = 1.0 / std::sqrt(running_var[c] + eps);
    auto a_keep = std::make_shared<std::vector<double>>(std::move(a));
    auto is_keep = std::make_shared<std::vector<double>>(std::move(inv_std));
    return make_node(std::move(out), {x, gamma, beta},
                     [N, C, S, a_keep, is_keep, running_mean](Node& nd) {
        if (nd.parents[0]->requires_grad) {
            Tensor& dx = nd.parents[0]->ensure_grad();
            for (long n = 0; n < N; ++n)
                for (long c = 0; c < C; ++c)
                    K().axpy(dx.data() + (n * C + c) * S, (*a_keep)[c],
                             nd.grad.data() + (n * C + c) * S, S);
        }
        if (nd.parents[1]->requires_grad || nd.parents[2]->requires_grad) {
            const Tensor& xv = nd.parents[0]->value;
            for (long c = 0; c < C; ++c) {
                double dg = 0.0, dbta = 0.0;
                for (long n = 0; n < N; ++n) {
                    const double* gp = nd.grad.data() + (n * C + c) * S;
                    const double* xp = xv.data() + (n * C + c) * S;
                    for (long i = 0; i < S; ++i) {
                        dbta += gp[i];
                        dg += gp[i] * (xp[i] - running_mean[c]) * (*is_keep)[c];
                    }
                }
                if (nd.parents[1]->requires_grad) nd.parents[1]->ensure_grad()[c] += dg;
                if (nd.parents[2]->requires_grad) nd.parents[2]->ensure_grad()[c] += dbta;
            }
        }
    });
}

Var batchnorm_train(const Var& x, const Var& gamma, const Var& beta,
                    Tensor& running_mean, Tensor& running_var,
                    double momentum, double eps) {
    const auto& xs = x->value.shape();
    const long N = xs[0], C = xs[1];
    const long S = x->value.numel() / (N * C);
    const double cnt = static_cast<double>(N * S);

    std::vector<double> mu(C, 0.0), var(C, 0.0);
    for (long n = 0; n < N; ++n)
        for (long c = 0; c < C; ++c)
            mu[c] += K().sum(x->value.data() + (n * C + c) * S, S);
    for (long c = 0; c < C; ++c) mu[c] /= cnt;
    for (long n = 0; n < N; ++n)
        for (long c = 0; c < C; ++c) {
            const double* xp = x->value.data() + (n * C + c) * S;
            double acc = 0.0;
            for (long i = 0; i < S; ++i) {
                const double d = xp[i] - mu[c];
                acc += d * d;
            }
            var[c] += acc;
        }
    for (long c = 0; c < C; ++c) var[c] /= cnt;

    for (long c = 0; c < C; ++c) {
        running_mean[c] = (1.0 - momentum) * running_mean[c] + momentum * mu[c];
        running_var[c] = (1.0 - momentum) * running_var[c] + momentum * var[c];
    }

    Tensor out(xs);
    std::vector<double> inv_std(C);
    for (long c = 0; c < C; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + eps);
    for (long n = 0; n < N; ++n)
        for (long c = 0; c < C; ++c) {
            const double* xp = x->value.data() + (n * C + c) * S;
            double* op = out.data() + (n * C + c) * S;
            const double g = gamma->value[c], bt = beta->value[c];
            for (long i = 0; i < S; ++i) op[i] = g * (xp[i] - mu[c]) * inv_std[c] + bt;
        }

    auto mu_k = std::make_shared<std::vector<double>>(std::move(mu));
    auto is_k = std::make_shared<std::vector<double>>(std::move(inv_std));
    return make_node(std::move(out), {x, gamma, beta},
                     [N, C, S, cnt, mu_k, is_k](Node& nd) {
        const Tensor& xv = nd.parents[0]->value;
        for (long c = 0; c < C; ++c) {
            // per-channel sums of dy and dy*xhat
            double sum_dy = 0.0, sum_dy_xhat = 0.0;
            for (long n = 0; n < N; ++n) {
                const double* gp = nd.grad.data() + (n * C + c) * S;
                const double* xp = xv.data() + (n * C + c) * S;
                for (long i = 0; i < S; ++i) {
                    const double xhat = (xp[i] - (*mu_k)[c]) * (*is_k)[c];
                    sum_dy += gp[i];
                    sum_dy_xhat += gp[i] * xhat;
                }
            }
            if (nd.parents[1]->requires_grad) nd.parents[1]->ensure_grad()[c] += sum_dy_xhat;
            if (nd.parents[2]->requires_grad) nd.parents[2]->ensure_grad()[c] += sum_dy;
            if (nd.parents[0]->requires_grad) {
                Tensor& dx = nd.parents[0]->ensure_grad();
                const double g = nd.parents[1]->value[c];
                for (long n = 0; n < N; ++n) {
                    const double* gp = nd.grad.data() + (n * C + c) * S;
                    const double* xp = xv.data() + (n * C + c) * S;
                    double* dp = dx.data() + (n * C + c) * S;
                    for (long i = 0; i < S; ++i) {
                        const double xhat = (xp[i] - (*mu_k)[c]) * (*is_k)[c];
                        dp[i] += g * (*is_k)[c] *
                                 (gp[i] - sum_dy / cnt - xhat * sum_dy_xhat / cnt);
                    }
                }
            }
        }
    });
}

// ---------------- layer norm / softmax / CE ----------------

Var layernorm(const Var& x, const Var& gamma, const Var& beta, double eps) {
    const auto& xs = x->value.shape();
    const long D = xs.back();
    const long R = x->value.numel() / D;
    Tensor out(xs);
    std::vector<double> mu(R), is(R);
    for (long r = 0; r < R; ++r) {
        const double* xp = x->value.data() + r * D;
        double m = K().sum(xp, D) / D;
        double v = 0.0;
        for (long i = 0; i < D; ++i) v += (xp[i] - m) * (xp[i] - m);
        v /= D;
        mu[r] = m;
        is[r] = 1.0 / std::sqrt(v + eps);
        double* op = out.data() + r * D;
        for (long i = 0; i < D; ++i)
            op[i] = gamma->value[i] * (xp[i] - m) * is[r] + beta->value[i];
    }
    auto mu_k = std::make_shared<std::vector<double>>(std::move(mu));
    auto is_k = std::make_shared<std::vector<double>>(std::move(is));
    return make_node(std::move(out), {x, gamma, beta}, [R, D, mu_k, is_k](Node& nd) {
        const Tensor& xv = nd.parents[0]->value;
        for (long r = 0; r < R; ++r) {
            const double* gp = nd.grad.data() + r * D;
            const double* xp = xv.data() + r * D;
            double sum_dy = 0.0, sum_dy_xhat = 0.0;
            for (long i = 0; i < D; ++i) {
                const double xhat = (xp[i] - (*mu_k)[r]) * (*is_k)[r];
                const double dyh = gp[i] * nd.parents[1]->value[i];
                sum_dy += dyh;
                sum_dy_xhat += dyh * xhat;
            }
            for (long i = 0; i < D; ++i) {
                const double xhat = (xp[i] - (*mu_k)[r]) * (*is_k)[r];
                if (nd.parents[1]->requires_grad)
                    nd.parents[1]->ensure_grad()[i] += gp[i] * xhat;
                if (nd.parents[2]->requires_grad) nd.parents[2]->ensure_grad()[i] += gp[i];
                if (nd.parents[0]->requires_grad) {
                    const double dyh = gp[i] * nd.parents[1]->value[i];
                    nd.parents[0]->ensure_grad()[r * D + i] +=
                        (*is_k)[r] * (dyh - sum_dy / D - xhat * sum_dy_xhat / D);
                }
            }
        }
    });
}

std::vector<double> softmax_row(const double* logits, long k) {
    std::vector<double> p(k);
    double mx = logits[0];
    for (long i = 1; i < k; ++i) mx = std::max(mx, logits[i]);
    double z = 0.0;
    for (long i = 0; i < k; ++i) {
        p[i] = std::exp(logits[i] - mx);
        z += p[i];
    }
    for (long i = 0; i < k; ++i) p[i] /= z;
    return p;
}

Var softmax_lastaxis(const Var& x) {
    const auto& xs = x->value.shape();
    const long D = xs.back();
    const long R = x->value.numel() / D;
    Tensor out(xs);
    for (long r = 0; r < R; ++r) {
        auto p = softmax_row(x->value.data() + r * D, D);
        std::copy(p.begin(), p.end(), out.data() + r * D);
    }
    Tensor keep = out;
    return make_node(std::move(out), {x}, [R, D, keep](Node& nd) {
        Tensor& dx = nd.parents[0]->ensure_grad();
        for (long r = 0; r < R; ++r) {
            const double* yp = keep.data() + r * D;
            const double* gp = nd.grad.data() + r * D;
            const double dot = K().dot(yp, gp, D);
            for (long i = 0; i < D; ++i) dx[r * D + i] += yp[i] * (gp[i] - dot);
        }
    });
}

Var cross_entropy_logits(const Var& logits, const std::vector<long>& labels) {
    const auto& ls = logits->value.shape();
    if (ls.size() != 2 || static_cast<long>(labels.size()) != ls[0])
        throw std::invalid_argument("cross_entropy_logits: bad shapes");
    const long N = ls[0], C = ls[1];
    Tensor out({1});
    Tensor probs({N, C});
    double loss = 0.0;
    for (long n = 0; n < N; ++n) {
        auto p = softmax_row(logits->value.data() + n * C, C);
        std::copy(p.begin(), p.end(), probs.data() + n * C);
        loss -= std::log(std::max(p[labels[n]], 1e-300));
    }
    out[0] = loss / N;
    auto probs_k = std::make_shared<Tensor>(std::move(probs));
    auto labels_k = std::make_shared<std::vector<long>>(labels);
    return make_node(std::move(out), {logits}, [N, C, probs_k, labels_k](Node& nd) {
        Tensor& dx = nd.parents[0]->ensure_grad();
        const double g = nd.grad[0] / N;
        for (long n = 0; n < N; ++n) {
            for (long c = 0; c < C; ++c) dx[n * C + c] += g * (*probs_k)[n * C + c];
            dx[n * C + (*labels_k)[n]] -= g;
        }
    });
}

}  // namespace leaps::ag
