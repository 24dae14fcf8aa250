#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "leaps/autograd.hpp"
#include "test_util.hpp"

using namespace leaps;
namespace ag = leaps::ag;
using testutil::grad_check;
using testutil::random_tensor;

namespace {

// shift entries away from non-differentiable points (0 for relu/abs)
Tensor offset_tensor(std::vector<long> shape, std::uint64_t seed) {
    Tensor t = random_tensor(std::move(shape), seed);
    for (long i = 0; i < t.numel(); ++i)
        t[i] += t[i] >= 0.0 ? 0.25 : -0.25;
    return t;
}

}  // namespace

TEST_CASE("elementwise op gradients") {
    const Tensor x = offset_tensor({3, 4}, 1);
    const Tensor other = random_tensor({3, 4}, 2);

    CHECK(grad_check([&](const ag::Var& v) {
              return ag::sum(ag::mul(v, ag::constant(other)));
          }, x) < 1e-7);
    CHECK(grad_check([&](const ag::Var& v) {
              return ag::sum(ag::add(ag::square(v), ag::scale(v, -2.5)));
          }, x) < 1e-7);
    CHECK(grad_check([&](const ag::Var& v) { return ag::sum(ag::abs_v(v)); }, x) < 1e-7);
    CHECK(grad_check([&](const ag::Var& v) { return ag::sum(ag::relu(v)); }, x) < 1e-7);
    CHECK(grad_check([&](const ag::Var& v) { return ag::sum(ag::gelu(v)); }, x) < 1e-7);
    CHECK(grad_check([&](const ag::Var& v) {
              return ag::sum(ag::elem_max(v, ag::constant(other)));
          }, x) < 1e-7);
    CHECK(grad_check([&](const ag::Var& v) {
              return ag::sum(ag::elem_min(v, ag::constant(other)));
          }, x) < 1e-7);
    CHECK(grad_check([&](const ag::Var& v) {
              return ag::sub(ag::mean(v), ag::scalar(0.0));
          }, x) < 1e-7);
}

TEST_CASE("scalar helper gradients") {
    Tensor s({1});
    s[0] = 2.3;
    Tensor t({1});
    t[0] = -1.7;
    CHECK(grad_check([&](const ag::Var& v) { return ag::div_ss(v, ag::constant(t)); }, s) < 1e-7);
    CHECK(grad_check([&](const ag::Var& v) { return ag::div_ss(ag::constant(t), v); }, s) < 1e-7);
    CHECK(grad_check([&](const ag::Var& v) { return ag::sqrt_s(v); }, s) < 1e-7);
    const Tensor x = random_tensor({5}, 3);
    CHECK(grad_check([&](const ag::Var& v) {
              return ag::sum(ag::mul_sv(ag::constant(x), v));
          }, s) < 1e-7);
}

TEST_CASE("reduction and shape op gradients") {
    const Tensor x = random_tensor({2, 3, 4}, 4);
    CHECK(grad_check([&](const ag::Var& v) {
              return ag::sum(ag::square(ag::reduce_sum(v, {1})));
          }, x) < 1e-7);
    CHECK(grad_check([&](const ag::Var& v) {
              return ag::sum(ag::square(ag::reduce_mean(v, {0, 2})));
          }, x) < 1e-7);
    CHECK(grad_check([&](const ag::Var& v) {
              return ag::sum(ag::square(ag::permute(v, {2, 0, 1})));
          }, x) < 1e-7);
    CHECK(grad_check([&](const ag::Var& v) {
              return ag::sum(ag::square(ag::reshape(v, {6, 4})));
          }, x) < 1e-7);
    CHECK(grad_check([&](const ag::Var& v) {
              return ag::sum(ag::square(ag::slice_axis0(v, 0, 1)));
          }, x) < 1e-7);
    // gather with repeated indices exercises scatter-add
    CHECK(grad_check([&](const ag::Var& v) {
              return ag::sum(ag::square(ag::take(v, {0, 5, 5, 23, 1}, {5})));
          }, x) < 1e-7);
}

TEST_CASE("matmul family gradients") {
    const Tensor a = random_tensor({3, 4}, 5);
    const Tensor b = random_tensor({4, 2}, 6);
    CHECK(grad_check([&](const ag::Var& v) {
              return ag::sum(ag::square(ag::matmul(v, ag::constant(b))));
          }, a) < 1e-7);
    CHECK(grad_check([&](const ag::Var& v) {
              return ag::sum(ag::square(ag::matmul(ag::constant(a), v)));
          }, b) < 1e-7);

    const Tensor ba = random_tensor({2, 3, 4}, 7);
    const Tensor bb = random_tensor({2, 4, 5}, 8);
    CHECK(grad_check([&](const ag::Var& v) {
              return ag::sum(ag::square(ag::bmm(v, ag::constant(bb))));
          }, ba) < 1e-7);
    CHECK(grad_check([&](const ag::Var& v) {
              return ag::sum(ag::square(ag::bmm(ag::constant(ba), v)));
          }, bb) < 1e-7);

    const Tensor w = random_tensor({4, 3}, 9);
    const Tensor bias = random_tensor({3}, 10);
    CHECK(grad_check([&](const ag::Var& v) {
              return ag::sum(ag::square(ag::linear(v, ag::constant(w), ag::constant(bias))));
          }, a) < 1e-7);
    const Tensor row = random_tensor({4}, 22);
    CHECK(grad_check([&](const ag::Var& v) {
              return ag::sum(ag::square(ag::add_rowvec(ag::constant(a), v)));
          }, row) < 1e-7);
}

TEST_CASE("conv3d gradients wrt input, weight and bias") {
    const Tensor x = random_tensor({2, 3, 3, 5, 5}, 11);
    const Tensor w = random_tensor({4, 3, 3, 3, 3}, 12, 0.5);
    const Tensor b = random_tensor({4}, 13);
    const ag::Conv3dGeom g{1, 2, 2, 1, 1, 1};

    CHECK(grad_check([&](const ag::Var& v) {
              return ag::sum(ag::square(ag::conv3d(v, ag::constant(w), ag::constant(b), g)));
          }, x) < 1e-6);
    CHECK(grad_check([&](const ag::Var& v) {
              return ag::sum(ag::square(ag::conv3d(ag::constant(x), v, ag::constant(b), g)));
          }, w) < 1e-6);
    CHECK(grad_check([&](const ag::Var& v) {
              return ag::sum(ag::square(ag::conv3d(ag::constant(x), ag::constant(w), v, g)));
          }, b) < 1e-6);
}

TEST_CASE("normalization gradients") {
    const Tensor x = random_tensor({2, 3, 2, 4, 4}, 14);
    const Tensor gamma = random_tensor({3}, 15, 0.5);
    const Tensor beta = random_tensor({3}, 16);
    Tensor rm = random_tensor({3}, 17, 0.3);
    Tensor rv({3});
    rv.fill(1.4);
    // a fixed linear functional of the output: sum(square(bn(x))) is nearly
    // invariant to x since normalization fixes per-channel second moments
    const Tensor probe = random_tensor({2, 3, 2, 4, 4}, 23);

    CHECK(grad_check([&](const ag::Var& v) {
              return ag::sum(ag::mul(ag::constant(probe),
                  ag::batchnorm_eval(v, ag::constant(gamma), ag::constant(beta), rm, rv, 1e-5)));
          }, x) < 1e-6);
    CHECK(grad_check([&](const ag::Var& v) {
              return ag::sum(ag::mul(ag::constant(probe),
                  ag::batchnorm_eval(ag::constant(x), v, ag::constant(beta), rm, rv, 1e-5)));
          }, gamma) < 1e-6);

    CHECK(grad_check([&](const ag::Var& v) {
              Tensor m = rm, s = rv;  // train mode mutates the running buffers
              return ag::sum(ag::mul(ag::constant(probe),
                  ag::batchnorm_train(v, ag::constant(gamma), ag::constant(beta), m, s, 0.1,
                                      1e-5)));
          }, x) < 1e-6);

    const Tensor rows = random_tensor({5, 6}, 18);
    const Tensor lg = random_tensor({6}, 19, 0.5);
    const Tensor lb = random_tensor({6}, 20);
    CHECK(grad_check([&](const ag::Var& v) {
              return ag::sum(ag::square(ag::layernorm(v, ag::constant(lg), ag::constant(lb),
                                                      1e-5)));
          }, rows) < 1e-6);
    CHECK(grad_check([&](const ag::Var& v) {
              return ag::sum(ag::square(ag::layernorm(ag::constant(rows), v, ag::constant(lb),
                                                      1e-5)));
          }, lg) < 1e-6);
}

TEST_CASE("softmax and cross entropy gradients") {
    const Tensor logits = random_tensor({4, 6}, 21);
    const std::vector<long> labels = {0, 3, 5, 2};
    CHECK(grad_check([&](const ag::Var& v) {
              return ag::sum(ag::square(ag::softmax_lastaxis(v)));
          }, logits) < 1e-6);
    CHECK(grad_check([&](const ag::Var& v) {
              return ag::cross_entropy_logits(v, labels);
          }, logits) < 1e-7);
}

TEST_CASE("uniform logits give ln(k) cross entropy") {
    Tensor logits({2, 6});
    logits.fill(0.37);
    auto ce = ag::cross_entropy_logits(ag::constant(logits), {1, 4});
    CHECK(ce->value[0] == doctest::Approx(std::log(6.0)).epsilon(1e-12));
}

TEST_CASE("backward accumulates through shared subgraphs") {
    Tensor x({2});
    x[0] = 1.5;
    x[1] = -0.5;
    ag::Var v = ag::leaf(x, true);
    ag::Var s = ag::square(v);
    ag::Var out = ag::sum(ag::add(s, s));
    ag::backward(out);
    CHECK(v->grad[0] == doctest::Approx(4.0 * x[0]));
    CHECK(v->grad[1] == doctest::Approx(4.0 * x[1]));
}
