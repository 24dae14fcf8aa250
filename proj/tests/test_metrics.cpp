#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <vector>

#include "leaps/metrics.hpp"
#include "leaps/nn.hpp"
#include "test_util.hpp"

using namespace leaps;
using testutil::random_tensor;

namespace {

// classifier with dictated logits: each video encodes a row index in its
// first sample
class StubClassifier : public nn::Model {
public:
    std::vector<std::vector<double>> rows;
    long K;
    explicit StubClassifier(long k) : K(k) {}

    std::string kind() const override { return "stub"; }
    std::string arch_json() const override { return "{}"; }
    long num_classes() const override { return K; }
    std::vector<std::pair<std::string, Tensor*>> parameters() override { return {}; }
    std::vector<std::pair<std::string, Tensor*>> buffers() override { return {}; }
    nn::ForwardResult forward(const ag::Var& input, const nn::ForwardOptions&) override {
        const long N = input->value.dim(0);
        const long per = input->value.numel() / N;
        Tensor lg({N, K});
        for (long i = 0; i < N; ++i) {
            const long idx = std::lround(input->value[i * per]);
            for (long k = 0; k < K; ++k) lg[i * K + k] = rows.at(idx).at(k);
        }
        nn::ForwardResult fr;
        fr.logits = ag::constant(std::move(lg));
        return fr;
    }
    std::vector<std::string> tap_ids() const override { return {}; }
    std::vector<std::string> priming_layers() const override { return {}; }
    std::string coherence_layer() const override { return ""; }
    std::vector<std::string> bn_layers() const override { return {}; }
    std::string bn_input_tap(const std::string& s) const override {
        throw Error(ErrorCode::not_bn, s);
    }
};

VideoTensor index_video(long idx) {
    Tensor t({1, 1, 1, 1});
    t[0] = static_cast<double>(idx);
    return VideoTensor(std::move(t), {-3, 3});
}

std::vector<double> softmax_of(const std::vector<double>& logits) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double z = 0.0;
    for (std::size_t k = 0; k < logits.size(); ++k) z += (p[k] = std::exp(logits[k] - mx));
    for (auto& x : p) x /= z;
    return p;
}

// direct split-score oracle over dictated probability rows
std::pair<double, double> is_oracle(const std::vector<std::vector<double>>& probs,
                                    long n_splits) {
    const long n = static_cast<long>(probs.size());
    const long K = static_cast<long>(probs[0].size());
    std::vector<double> scores;
    for (long s = 0; s < n_splits; ++s) {
        const long lo = s * n / n_splits, hi = (s + 1) * n / n_splits;
        std::vector<double> marg(K, 0.0);
        for (long i = lo; i < hi; ++i)
            for (long k = 0; k < K; ++k) marg[k] += probs[i][k] / (hi - lo);
        double kl = 0.0;
        for (long i = lo; i < hi; ++i)
            for (long k = 0; k < K; ++k)
                if (probs[i][k] > 0) kl += probs[i][k] * std::log(probs[i][k] / marg[k]);
        scores.push_back(std::exp(kl / (hi - lo)));
    }
    double mean = 0.0;
    for (double v : scores) mean += v;
    mean /= scores.size();
    double var = 0.0;
    for (double v : scores) var += (v - mean) * (v - mean);
    return {mean, std::sqrt(var / scores.size())};
}

double pair_dist(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(acc);
}

Tensor frame01(long C, long H, long W, std::uint64_t seed) {
    Tensor f = random_tensor({C, H, W}, seed, 0.2);
    for (long i = 0; i < f.numel(); ++i) f[i] = std::clamp(f[i] + 0.5, 0.0, 1.0);
    return f;
}

}  // namespace

TEST_CASE("uniform predictions give inception score one") {
    StubClassifier cls(6);
    cls.rows.assign(4, std::vector<double>(6, 0.0));
    std::vector<VideoTensor> vids;
    for (long i = 0; i < 4; ++i) vids.push_back(index_video(i));
    auto [mean, sd] = metrics::inception_score(vids, cls, 2);
    CHECK(mean == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(sd == doctest::Approx(0.0).scale(1).epsilon(1e-12));
}

TEST_CASE("confident distinct classes give inception score equal to the class count") {
    StubClassifier cls(6);
    for (long k = 0; k < 6; ++k) {
        std::vector<double> row(6, 0.0);
        row[k] = 60.0;
        cls.rows.push_back(row);
    }
    std::vector<VideoTensor> vids;
    for (long i = 0; i < 6; ++i) vids.push_back(index_video(i));
    auto [mean, sd] = metrics::inception_score(vids, cls, 1);
    CHECK(mean == doctest::Approx(6.0).epsilon(1e-6));
    CHECK(sd == 0.0);
}

TEST_CASE("identical confident predictions give inception score one") {
    StubClassifier cls(6);
    std::vector<double> row(6, 0.0);
    row[3] = 60.0;
    cls.rows.assign(8, row);
    std::vector<VideoTensor> vids;
    for (long i = 0; i < 8; ++i) vids.push_back(index_video(i));
    auto [mean, sd] = metrics::inception_score(vids, cls, 2);
    CHECK(mean == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(sd == doctest::Approx(0.0).scale(1).epsilon(1e-9));
}

TEST_CASE("inception score matches the split oracle on random predictions") {
    Rng rng(91);
    StubClassifier cls(5);
    std::vector<std::vector<double>> probs;
    for (long i = 0; i < 10; ++i) {
        std::vector<double> row(5);
        for (auto& x : row) x = 2.0 * rng.gaussian();
        cls.rows.push_back(row);
        probs.push_back(softmax_of(row));
    }
    std::vector<VideoTensor> vids;
    for (long i = 0; i < 10; ++i) vids.push_back(index_video(i));
    for (long splits : {1L, 2L, 5L}) {
        auto got = metrics::inception_score(vids, cls, splits);
        auto want = is_oracle(probs, splits);
        CHECK(got.first == doctest::Approx(want.first).epsilon(1e-10));
        CHECK(got.second == doctest::Approx(want.second).epsilon(1e-8));
    }
}

TEST_CASE("single-split inception score is order invariant") {
    Rng rng(92);
    StubClassifier cls(4);
    for (long i = 0; i < 7; ++i) {
        std::vector<double> row(4);
        for (auto& x : row) x = rng.gaussian();
        cls.rows.push_back(row);
    }
    std::vector<VideoTensor> fwd, rev;
    for (long i = 0; i < 7; ++i) fwd.push_back(index_video(i));
    for (long i = 6; i >= 0; --i) rev.push_back(index_video(i));
    CHECK(metrics::inception_score(fwd, cls, 1).first ==
          doctest::Approx(metrics::inception_score(rev, cls, 1).first).epsilon(1e-12));
}

TEST_CASE("inception score rejects bad splits and empty sets") {
    StubClassifier cls(3);
    cls.rows.assign(2, std::vector<double>(3, 0.0));
    std::vector<VideoTensor> vids = {index_video(0), index_video(1)};
    try {
        metrics::inception_score(vids, cls, 3);
        FAIL("expected split_error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::split_error);
    }
    CHECK_THROWS_AS(metrics::inception_score({}, cls, 1), Error);
}

TEST_CASE("top1 counts argmax hits") {
    StubClassifier cls(3);
    cls.rows = {{5.0, 0.0, 0.0}, {0.0, 5.0, 0.0}, {0.0, 0.0, 5.0}, {5.0, 0.0, 0.0}};
    std::vector<VideoTensor> vids;
    for (long i = 0; i < 4; ++i) vids.push_back(index_video(i));
    CHECK(metrics::top1(vids, {0, 1, 2, 0}, cls) == 1.0);
    CHECK(metrics::top1(vids, {0, 1, 2, 1}, cls) == doctest::Approx(0.75));
    CHECK_THROWS_AS(metrics::top1(vids, {0, 1}, cls), Error);
}

TEST_CASE("psnr hand values") {
    Tensor f1({1, 8, 8});
    f1.fill(0.2);
    Tensor f2({1, 8, 8});
    f2.fill(0.3);
    CHECK(metrics::psnr_pair(f1, f2) == doctest::Approx(20.0).epsilon(1e-10));
    CHECK(metrics::psnr_pair(f2, f1) == metrics::psnr_pair(f1, f2));
    CHECK(metrics::psnr_pair(f1, f1) == 100.0);

    Tensor g = frame01(2, 9, 9, 93);
    Tensor h = frame01(2, 9, 9, 94);
    CHECK(metrics::psnr_pair(g, h) == metrics::psnr_pair(h, g));
    Tensor bad({1, 4, 4});
    CHECK_THROWS_AS(metrics::psnr_pair(f1, bad), Error);
}

TEST_CASE("ssim hand values and properties") {
    Tensor f = frame01(1, 10, 12, 95);
    CHECK(metrics::ssim_pair(f, f) == doctest::Approx(1.0).epsilon(1e-12));

    Tensor zero({1, 7, 7});
    Tensor one({1, 7, 7});
    one.fill(1.0);
    const double c1 = 1e-4;
    CHECK(metrics::ssim_pair(zero, one) == doctest::Approx(c1 / (1.0 + c1)).epsilon(1e-10));
    CHECK(metrics::ssim_pair(zero, one) > 0.0);

    Tensor small_noise = f, big_noise = f;
    Rng rng(96);
    for (long i = 0; i < f.numel(); ++i) {
        const double n = rng.gaussian();
        small_noise[i] = std::clamp(f[i] + 0.01 * n, 0.0, 1.0);
        big_noise[i] = std::clamp(f[i] + 0.3 * n, 0.0, 1.0);
    }
    CHECK(metrics::ssim_pair(f, small_noise) > metrics::ssim_pair(f, big_noise));
    CHECK(metrics::ssim_pair(f, big_noise) == metrics::ssim_pair(big_noise, f));

    Tensor tiny({1, 5, 5});
    CHECK_THROWS_AS(metrics::ssim_pair(tiny, tiny), Error);
}

TEST_CASE("frame-pair traces agree with the pair metrics") {
    Tensor data({2, 3, 8, 8});
    Rng rng(97);
    for (long i = 0; i < data.numel(); ++i) data[i] = 0.5 + 0.2 * std::sin(0.3 * i + rng.uniform());
    VideoTensor v(std::move(data), {0, 1});
    auto pt = metrics::psnr_trace(v);
    auto st = metrics::ssim_trace(v);
    REQUIRE(pt.size() == 2);
    REQUIRE(st.size() == 2);
    auto frame = [&](long t) {
        Tensor f({2, 8, 8});
        long i = 0;
        for (long c = 0; c < 2; ++c)
            for (long h = 0; h < 8; ++h)
                for (long w = 0; w < 8; ++w) f[i++] = v.at(c, t, h, w);
        return f;
    };
    for (long t = 0; t < 2; ++t) {
        CHECK(pt[t] == metrics::psnr_pair(frame(t), frame(t + 1)));
        CHECK(st[t] == metrics::ssim_pair(frame(t), frame(t + 1)));
    }

    Tensor single({1, 1, 8, 8});
    VideoTensor sv(std::move(single), {0, 1});
    CHECK_THROWS_AS(metrics::psnr_trace(sv), Error);
}

TEST_CASE("pca recovers a rank-1 structure") {
    Rng rng(98);
    const std::vector<double> dir = {0.6, -0.8, 0.0};
    std::vector<std::vector<double>> emb;
    std::vector<double> ts;
    for (long i = 0; i < 8; ++i) {
        const double t = rng.gaussian();
        ts.push_back(t);
        emb.push_back({1.0 + t * dir[0], 2.0 + t * dir[1], -0.5 + t * dir[2]});
    }
    std::vector<double> eig;
    auto pts = metrics::pca_project(emb, 2, &eig);
    REQUIRE(eig.size() == 3);
    CHECK(eig[0] > 1e-6);
    CHECK(eig[1] < 1e-9);
    CHECK(eig[2] < 1e-9);
    for (const auto& p : pts) CHECK(std::fabs(p[1]) < 1e-6);
    for (std::size_t i = 0; i < pts.size(); ++i)
        for (std::size_t j = i + 1; j < pts.size(); ++j)
            CHECK(std::fabs(pts[i][0] - pts[j][0]) ==
                  doctest::Approx(std::fabs(ts[i] - ts[j])).epsilon(1e-8));
}

TEST_CASE("pca projection of planar data is an isometry") {
    Rng rng(99);
    // orthonormal pair embedded in 5 dims
    const std::vector<double> u = {0.5, 0.5, 0.5, 0.5, 0.0};
    const std::vector<double> w = {0.5, -0.5, 0.5, -0.5, 0.0};
    std::vector<std::vector<double>> emb;
    for (long i = 0; i < 10; ++i) {
        const double a = rng.gaussian(), b = rng.gaussian();
        std::vector<double> e(5);
        for (long d = 0; d < 5; ++d) e[d] = 3.0 + a * u[d] + b * w[d];
        emb.push_back(e);
    }
    auto pts = metrics::pca_project(emb, 2);
    for (std::size_t i = 0; i < emb.size(); ++i)
        for (std::size_t j = i + 1; j < emb.size(); ++j)
            CHECK(pair_dist(pts[i], pts[j]) ==
                  doctest::Approx(pair_dist(emb[i], emb[j])).epsilon(1e-8));
}

TEST_CASE("full-rank pca preserves all pairwise distances") {
    Rng rng(100);
    std::vector<std::vector<double>> emb;
    for (long i = 0; i < 9; ++i) {
        std::vector<double> e(4);
        for (auto& x : e) x = rng.gaussian();
        emb.push_back(e);
    }
    auto pts = metrics::pca_project(emb, 4);
    for (std::size_t i = 0; i < emb.size(); ++i)
        for (std::size_t j = i + 1; j < emb.size(); ++j)
            CHECK(pair_dist(pts[i], pts[j]) ==
                  doctest::Approx(pair_dist(emb[i], emb[j])).epsilon(1e-9));
}

TEST_CASE("pca axes follow the positive-peak sign convention") {
    Rng rng(101);
    std::vector<std::vector<double>> emb;
    for (long i = 0; i < 12; ++i) {
        std::vector<double> e(4);
        for (auto& x : e) x = rng.gaussian();
        emb.push_back(e);
    }
    std::vector<std::vector<double>> axes;
    metrics::pca_project(emb, 3, nullptr, &axes);
    REQUIRE(axes.size() == 3);
    for (const auto& axis : axes) {
        double norm = 0.0, peak = 0.0;
        for (double x : axis) {
            norm += x * x;
            if (std::fabs(x) > std::fabs(peak)) peak = x;
        }
        CHECK(norm == doctest::Approx(1.0).epsilon(1e-10));
        CHECK(peak > 0.0);
    }
}

TEST_CASE("pca rejects degenerate and malformed inputs") {
    std::vector<std::vector<double>> same(5, {1.0, 2.0});
    try {
        metrics::pca_project(same, 1);
        FAIL("expected degenerate_rank");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::degenerate_rank);
    }
    std::vector<std::vector<double>> two = {{1.0}, {2.0}};
    CHECK_THROWS_AS(metrics::pca_project(two, 1), Error);
    std::vector<std::vector<double>> ragged = {{1.0, 2.0}, {1.0}, {0.0, 1.0}};
    CHECK_THROWS_AS(metrics::pca_project(ragged, 1), Error);
    std::vector<std::vector<double>> ok = {{1.0, 2.0}, {0.0, 1.0}, {2.0, 0.0}};
    CHECK_THROWS_AS(metrics::pca_project(ok, 3), Error);
}

TEST_CASE("evaluation report and json round-trip") {
    StubClassifier model(3);
    model.rows = {{5.0, 0.0, 0.0}, {0.0, 5.0, 0.0}, {0.0, 0.0, 5.0}};
    StubClassifier verifier(3);
    verifier.rows = model.rows;

    std::vector<VideoTensor> vids;
    for (long i = 0; i < 3; ++i) vids.push_back(index_video(i));
    Tensor disp = random_tensor({1, 3, 8, 8}, 102, 0.1);
    for (long i = 0; i < disp.numel(); ++i) disp[i] = std::clamp(disp[i] + 0.5, 0.0, 1.0);
    VideoTensor display01(std::move(disp), {0, 1});

    auto rep = metrics::evaluate(vids, {0, 1, 2}, model, &verifier, display01, 3);
    CHECK(rep.top1_model == 1.0);
    CHECK(rep.top1_verifier == 1.0);
    CHECK(rep.is_mean == doctest::Approx(metrics::inception_score(vids, verifier, 3).first));
    REQUIRE(rep.psnr_trace.size() == 2);
    REQUIRE(rep.ssim_trace.size() == 2);

    rep.embedding.push_back({0.5, -1.25, "real"});
    rep.embedding.push_back({2.0, 0.125, "synth"});
    auto back = metrics::EvalReport::from_json(rep.to_json());
    CHECK(back.top1_model == rep.top1_model);
    CHECK(back.top1_verifier == rep.top1_verifier);
    CHECK(back.is_mean == rep.is_mean);
    CHECK(back.is_std == rep.is_std);
    CHECK(back.psnr_trace == rep.psnr_trace);
    CHECK(back.ssim_trace == rep.ssim_trace);
    REQUIRE(back.embedding.size() == 2);
    CHECK(back.embedding[0].x == 0.5);
    CHECK(back.embedding[0].tag == "real");
    CHECK(back.embedding[1].y == 0.125);
    CHECK(back.embedding[1].tag == "synth");
}
