#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "leaps/ablate.hpp"
#include "leaps/capture.hpp"
#include "leaps/dataset.hpp"
#include "leaps/metrics.hpp"
#include "leaps/nn.hpp"
#include "leaps/objectives.hpp"
#include "leaps/rng.hpp"
#include "leaps/synthesis.hpp"
#include "test_util.hpp"

using namespace leaps;
using testutil::fixture;
using testutil::random_tensor;

namespace {

double now_s() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

// Pearson correlation of average ranks (ties share their mean rank)
double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    auto ranks = [](const std::vector<double>& x) {
        const long n = static_cast<long>(x.size());
        std::vector<long> order(n);
        for (long i = 0; i < n; ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](long p, long q) { return x[p] < x[q]; });
        std::vector<double> r(n);
        long i = 0;
        while (i < n) {
            long j = i;
            while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
            const double avg = 0.5 * (i + j);
            for (long k = i; k <= j; ++k) r[order[k]] = avg;
            i = j + 1;
        }
        return r;
    };
    const auto ra = ranks(a), rb = ranks(b);
    const long n = static_cast<long>(a.size());
    double ma = 0, mb = 0;
    for (long i = 0; i < n; ++i) { ma += ra[i]; mb += rb[i]; }
    ma /= n; mb /= n;
    double sab = 0, saa = 0, sbb = 0;
    for (long i = 0; i < n; ++i) {
        sab += (ra[i] - ma) * (rb[i] - mb);
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

struct Pair {
    VideoTensor stim;
    long cls = 0;
};

struct Context {
    std::unique_ptr<nn::Model> model;     // inverted conv3d
    std::unique_ptr<nn::Model> verifier;  // second-seed conv3d
    std::vector<Pair> pairs;              // one val stimulus per class 0..2
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    long iters = 500;

    nn::Model* vit() {
        if (!vit_) vit_ = nn::load_model(fixture("vit.leapsmdl"));
        return vit_.get();
    }

private:
    std::unique_ptr<nn::Model> vit_;  // inverted transformer
};

Context& ctx() {
    static Context c = [] {
        Context x;
        x.model = nn::load_model(fixture("conv_a.leapsmdl"));
        x.verifier = nn::load_model(fixture("conv_b.leapsmdl"));
        const auto& ds = testutil::fixture_dataset();
        for (long cls = 0; cls < 3; ++cls)
            for (const auto& clip : ds.val)
                if (clip.label == cls) {
                    x.pairs.push_back({clip.video, cls});
                    break;
                }
        return x;
    }();
    return c;
}

struct VariantStats {
    std::vector<double> top1_model;     // per seed
    std::vector<double> top1_verifier;  // per seed
    std::vector<VideoTensor> finals;    // seed-major, pair-minor
    bool any_aborted = false;
    double wall_s = 0.0;
};

VariantStats run_variant(nn::Model& model, const ObjectiveConfig& cfg,
                         const PrimingSchedule& sched_in) {
    auto& c = ctx();
    PrimingSchedule sched = sched_in;
    if (sched.layer_ids.empty()) sched.layer_ids = model.priming_layers();

    VariantStats out;
    const double t0 = now_s();
    for (std::uint64_t seed : c.seeds) {
        std::vector<VideoTensor> finals;
        std::vector<long> labels;
        for (std::size_t p = 0; p < c.pairs.size(); ++p) {
            const auto& s = c.pairs[p].stim;
            auto rec = synthesis::synthesize(
                model, c.verifier.get(), {s}, c.pairs[p].cls, cfg, sched,
                Rng(seed).derive(p + 1), {s.channels(), s.frames(), s.height(), s.width()},
                s.range);
            out.any_aborted |= rec.aborted_nonfinite;
            finals.push_back(rec.final_video);
            labels.push_back(c.pairs[p].cls);
        }
        out.top1_model.push_back(metrics::top1(finals, labels, model));
        out.top1_verifier.push_back(metrics::top1(finals, labels, *c.verifier));
        for (auto& f : finals) out.finals.push_back(std::move(f));
    }
    out.wall_s = now_s() - t0;
    return out;
}

ObjectiveConfig base_cfg() {
    ObjectiveConfig cfg;
    cfg.num_iterations = ctx().iters;
    cfg.snapshot_every = ctx().iters;
    return cfg;
}

// shared across the trend criteria so each configuration is synthesized once
VariantStats& variant(const std::string& name) {
    static std::map<std::string, VariantStats> cache;
    auto it = cache.find(name);
    if (it != cache.end()) return it->second;

    ObjectiveConfig cfg = base_cfg();
    PrimingSchedule sched;
    nn::Model* model = ctx().model.get();
    if (name == "prim") {
        cfg.enable_coherence = cfg.enable_diversity = false;
    } else if (name == "prim+coh") {
        cfg.enable_diversity = false;
    } else if (name == "prim+feat") {
        cfg.enable_coherence = false;
    } else if (name == "full") {
    } else if (name == "l2" || name == "cosine") {
        cfg.distance = distance_from_string(name);
    } else if (name == "frac20" || name == "frac60") {
        sched.subset_fraction = name == "frac20" ? 0.2 : 0.6;
    } else if (name == "vit_full") {
        model = ctx().vit();
    } else if (name == "vit_prim") {
        cfg.enable_coherence = cfg.enable_diversity = false;
        model = ctx().vit();
    } else {
        throw std::runtime_error("unknown variant " + name);
    }
    return cache.emplace(name, run_variant(*model, cfg, sched)).first->second;
}

VariantStats run_baseline_variant_uncached(objectives::BaselineKind kind) {
    auto& c = ctx();
    ObjectiveConfig cfg = base_cfg();
    VariantStats out;
    const double t0 = now_s();
    for (std::uint64_t seed : c.seeds) {
        std::vector<VideoTensor> finals;
        std::vector<long> labels;
        for (std::size_t p = 0; p < c.pairs.size(); ++p) {
            const auto& s = c.pairs[p].stim;
            auto rec = synthesis::run_baseline(
                kind, *c.model, c.pairs[p].cls, cfg, Rng(seed).derive(p + 1),
                {s.channels(), s.frames(), s.height(), s.width()}, s.range);
            out.any_aborted |= rec.aborted_nonfinite;
            finals.push_back(rec.final_video);
            labels.push_back(c.pairs[p].cls);
        }
        out.top1_model.push_back(metrics::top1(finals, labels, *c.model));
        out.top1_verifier.push_back(metrics::top1(finals, labels, *c.verifier));
        for (auto& f : finals) out.finals.push_back(std::move(f));
    }
    out.wall_s = now_s() - t0;
    return out;
}

VariantStats& run_baseline_variant(objectives::BaselineKind kind) {
    static std::map<int, VariantStats> cache;
    auto it = cache.find(static_cast<int>(kind));
    if (it != cache.end()) return it->second;
    return cache.emplace(static_cast<int>(kind), run_baseline_variant_uncached(kind))
        .first->second;
}

void verdict(int idx, const char* name, bool pass, const std::string& detail) {
    std::printf("[%d/9] %-34s %s  (%s)\n", idx, name, pass ? "PASS" : "FAIL", detail.c_str());
    std::fflush(stdout);
    CHECK_MESSAGE(pass, name << ": " << detail);
}

// classifier with dictated logits, indexed by the first sample of the video
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

}  // namespace

TEST_CASE("gradient correctness") {
    const double t0 = now_s();
    nn::ConvSpec spec;
    spec.widths = {4, 4, 4, 4};
    nn::ToyConv3d model{spec};
    model.init_params(99);
    nn::ToyConv3d verifier{spec};
    verifier.init_params(100);

    const Tensor x = random_tensor({1, 3, 4, 6, 6}, 31, 0.5);
    const VideoTensor stim(random_tensor({3, 4, 6, 6}, 32, 0.5), {-3.0, 3.0});
    PrimingSchedule sched;
    sched.layer_ids = model.priming_layers();
    auto stim_sess = capture::capture(model, stim, sched.layer_ids, false);

    auto term_fn = [&](ObjectiveConfig cfg) {
        return [&, cfg](const ag::Var& leaf) {
            return objectives::total_loss(model, &verifier, leaf, {stim_sess}, 2, cfg, sched)
                .total;
        };
    };

    double worst = 0.0;
    for (DistanceKind kind :
         {DistanceKind::jvs, DistanceKind::l1, DistanceKind::l2, DistanceKind::cosine}) {
        ObjectiveConfig cfg;
        cfg.enable_ce = cfg.enable_coherence = cfg.enable_diversity = false;
        cfg.distance = kind;
        worst = std::max(worst, testutil::grad_check(term_fn(cfg), x));
    }
    {
        ObjectiveConfig cfg;
        cfg.enable_ce = cfg.enable_priming = cfg.enable_diversity = false;
        cfg.reg_scale = 1.0;
        worst = std::max(worst, testutil::grad_check(term_fn(cfg), x));
    }
    {
        ObjectiveConfig cfg;
        cfg.enable_ce = cfg.enable_priming = cfg.enable_coherence = false;
        cfg.reg_scale = 1.0;
        worst = std::max(worst, testutil::grad_check(term_fn(cfg), x));
    }
    {
        ObjectiveConfig cfg;
        cfg.enable_priming = cfg.enable_coherence = cfg.enable_diversity = false;
        worst = std::max(worst, testutil::grad_check(term_fn(cfg), x));
    }
    const Tensor x4 = random_tensor({3, 4, 6, 6}, 33, 0.5);
    worst = std::max(worst,
                     testutil::grad_check([](const ag::Var& v) { return objectives::tv3d_v(v); },
                                          x4));
    worst = std::max(
        worst,
        testutil::grad_check([](const ag::Var& v) { return objectives::l2_prior_v(v); }, x4));

    const double dt = now_s() - t0;
    char buf[128];
    std::snprintf(buf, sizeof(buf), "worst rel err %.3g, %.1f s", worst, dt);
    verdict(1, "gradient correctness", worst < 1e-4 && dt < 60.0, buf);
}

TEST_CASE("metric oracle equivalence") {
    const double t0 = now_s();
    double worst = 0.0;
    auto track = [&](double got, double want) {
        worst = std::max(worst, std::fabs(got - want));
    };

    for (int inst = 0; inst < 50; ++inst) {
        Rng rng(1000 + inst);

        {  // similarity of positive/negative parts
            const long n = 4 + rng.uniform_int(0, 10);
            std::vector<double> a(n), b(n);
            for (long i = 0; i < n; ++i) {
                a[i] = rng.uniform() < 0.2 ? 0.0 : rng.gaussian();
                b[i] = rng.uniform() < 0.2 ? 0.0 : rng.gaussian();
            }
            double nume = 0.0, deno = 0.0;
            for (long i = 0; i < n; ++i) {
                const double ap = std::max(a[i], 0.0), an = std::max(-a[i], 0.0);
                const double bp = std::max(b[i], 0.0), bn = std::max(-b[i], 0.0);
                nume += std::min(ap, bp) + std::min(an, bn);
                deno += std::max(ap, bp) + std::max(an, bn);
            }
            track(objectives::jvs_similarity(a, b), deno == 0.0 ? 1.0 : nume / deno);
        }

        {  // coherence over frame pairs, direct O(T^2) loop
            const long C = 2 + rng.uniform_int(0, 2), T = 2 + rng.uniform_int(0, 3);
            const long H = 2, W = 3;
            const double delta = rng.uniform(0.5, 2.0);
            Tensor t = random_tensor({C, T, H, W}, 2000 + inst, 0.4);
            capture::ActivationRecord rec;
            rec.layer_id = "x";
            rec.tensor = ag::leaf(t, false);
            double cons = 0.0, hinge = 0.0;
            long n_cons = 0, n_non = 0;
            for (long t1 = 0; t1 < T; ++t1)
                for (long t2 = t1 + 1; t2 < T; ++t2) {
                    double l1 = 0.0;
                    for (long c = 0; c < C; ++c)
                        for (long r = 0; r < H * W; ++r)
                            l1 += std::fabs(t[c * T * H * W + t1 * H * W + r] -
                                            t[c * T * H * W + t2 * H * W + r]);
                    if (t2 - t1 == 1) {
                        cons += l1;
                        ++n_cons;
                    } else {
                        hinge += std::max(0.0, delta - l1);
                        ++n_non;
                    }
                }
            double want = cons / n_cons;
            if (n_non > 0) want += hinge / n_non;
            track(objectives::coherence_loss(rec, delta)->value[0], want);
        }

        {  // distance of batch statistics to running statistics
            capture::CaptureSession sess;
            std::vector<std::pair<std::string, objectives::BnStatPair>> stats;
            double want = 0.0;
            const long taps = 1 + rng.uniform_int(0, 2);
            for (long k = 0; k < taps; ++k) {
                const long C = 2 + rng.uniform_int(0, 3);
                std::vector<double> mu(C), var(C), rm(C), rv(C);
                for (long c = 0; c < C; ++c) {
                    mu[c] = rng.gaussian();
                    var[c] = std::fabs(rng.gaussian());
                    rm[c] = rng.gaussian();
                    rv[c] = std::fabs(rng.gaussian());
                }
                capture::ActivationRecord rec;
                rec.layer_id = "t" + std::to_string(k);
                rec.channel_mean = ag::constant(Tensor({C}, mu));
                rec.channel_var = ag::constant(Tensor({C}, var));
                sess.records[rec.layer_id] = rec;
                stats.push_back({rec.layer_id, {rm, rv}});
                double dm = 0.0, dv = 0.0;
                for (long c = 0; c < C; ++c) {
                    dm += (mu[c] - rm[c]) * (mu[c] - rm[c]);
                    dv += (var[c] - rv[c]) * (var[c] - rv[c]);
                }
                want += std::sqrt(dm) + std::sqrt(dv);
            }
            track(objectives::diversity_loss(sess, stats)->value[0], want);
        }

        {  // split-score against dictated probability rows
            const long N = 4 + rng.uniform_int(0, 8), K = 3 + rng.uniform_int(0, 3);
            StubClassifier stub{K};
            std::vector<VideoTensor> vids;
            std::vector<std::vector<double>> probs;
            for (long i = 0; i < N; ++i) {
                std::vector<double> lg(K);
                for (long k = 0; k < K; ++k) lg[k] = 2.0 * rng.gaussian();
                stub.rows.push_back(lg);
                Tensor t({1, 1, 1, 1});
                t[0] = static_cast<double>(i);
                vids.emplace_back(std::move(t), ValueRange{-3.0, 3.0});
                const double mx = *std::max_element(lg.begin(), lg.end());
                std::vector<double> p(K);
                double z = 0.0;
                for (long k = 0; k < K; ++k) z += (p[k] = std::exp(lg[k] - mx));
                for (auto& v : p) v /= z;
                probs.push_back(p);
            }
            const long splits = 1 + rng.uniform_int(0, std::min<long>(2, N - 1));
            std::vector<double> scores;
            for (long s = 0; s < splits; ++s) {
                const long lo = s * N / splits, hi = (s + 1) * N / splits;
                std::vector<double> marg(K, 0.0);
                for (long i = lo; i < hi; ++i)
                    for (long k = 0; k < K; ++k) marg[k] += probs[i][k] / (hi - lo);
                double kl = 0.0;
                for (long i = lo; i < hi; ++i)
                    for (long k = 0; k < K; ++k)
                        kl += probs[i][k] * std::log(probs[i][k] / marg[k]);
                scores.push_back(std::exp(kl / (hi - lo)));
            }
            double mean = 0.0;
            for (double s : scores) mean += s;
            mean /= scores.size();
            double var = 0.0;
            for (double s : scores) var += (s - mean) * (s - mean);
            auto [got_m, got_s] = metrics::inception_score(vids, stub, splits);
            track(got_m, mean);
            track(got_s, std::sqrt(var / scores.size()));
        }

        {  // frame-pair fidelity metrics
            const long C = 1 + rng.uniform_int(0, 1), H = 7 + rng.uniform_int(0, 3),
                       W = 7 + rng.uniform_int(0, 3);
            Tensor f1({C, H, W}), f2({C, H, W});
            for (long i = 0; i < f1.numel(); ++i) {
                f1[i] = rng.uniform();
                f2[i] = std::clamp(f1[i] + 0.2 * rng.gaussian(), 0.0, 1.0);
            }
            double mse = 0.0;
            for (long i = 0; i < f1.numel(); ++i) mse += (f1[i] - f2[i]) * (f1[i] - f2[i]);
            mse /= f1.numel();
            track(metrics::psnr_pair(f1, f2),
                  mse < 1e-10 ? 100.0 : 10.0 * std::log10(1.0 / mse));

            double total = 0.0;
            long count = 0;
            for (long c = 0; c < C; ++c)
                for (long y = 0; y + 7 <= H; ++y)
                    for (long x = 0; x + 7 <= W; ++x) {
                        double ma = 0, mb = 0;
                        for (long dy = 0; dy < 7; ++dy)
                            for (long dx = 0; dx < 7; ++dx) {
                                ma += f1[c * H * W + (y + dy) * W + x + dx];
                                mb += f2[c * H * W + (y + dy) * W + x + dx];
                            }
                        ma /= 49.0;
                        mb /= 49.0;
                        double va = 0, vb = 0, cab = 0;
                        for (long dy = 0; dy < 7; ++dy)
                            for (long dx = 0; dx < 7; ++dx) {
                                const double da = f1[c * H * W + (y + dy) * W + x + dx] - ma;
                                const double db = f2[c * H * W + (y + dy) * W + x + dx] - mb;
                                va += da * da;
                                vb += db * db;
                                cab += da * db;
                            }
                        va /= 49.0;
                        vb /= 49.0;
                        cab /= 49.0;
                        total += ((2 * ma * mb + 1e-4) * (2 * cab + 9e-4)) /
                                 ((ma * ma + mb * mb + 1e-4) * (va + vb + 9e-4));
                        ++count;
                    }
            track(metrics::ssim_pair(f1, f2), total / count);
        }
    }

    const double dt = now_s() - t0;
    char buf[128];
    std::snprintf(buf, sizeof(buf), "worst abs diff %.3g over 50 instances each, %.1f s", worst,
                  dt);
    verdict(2, "metric oracle equivalence", worst < 1e-6 && dt < 60.0, buf);
}

TEST_CASE("objective-term trend") {
    const double t0 = now_s();
    const double prim = median(variant("prim").top1_verifier);
    const double prim_coh = median(variant("prim+coh").top1_verifier);
    const double prim_feat = median(variant("prim+feat").top1_verifier);
    const double full = median(variant("full").top1_verifier);
    const double dt = now_s() - t0;

    const bool pass = full >= prim_feat && prim_feat >= prim_coh && prim_coh >= prim &&
                      full - prim >= 0.10 && dt < 1800.0;
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "verifier top-1 medians: prim %.3f <= prim+coh %.3f <= prim+feat %.3f <= "
                  "full %.3f, gap %.3f, %.0f s",
                  prim, prim_coh, prim_feat, full, full - prim, dt);
    verdict(3, "objective-term trend", pass, buf);
}

TEST_CASE("baseline ordering") {
    const VariantStats& dd = run_baseline_variant(objectives::BaselineKind::deepdream3d);
    const VariantStats& am = run_baseline_variant(objectives::BaselineKind::am3d);
    const double full = median(variant("full").top1_verifier);
    const double dd_m = median(dd.top1_verifier);
    const double am_m = median(am.top1_verifier);

    const bool pass = full - dd_m >= 0.20 && full - am_m >= 0.20;
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "verifier top-1 medians: full %.3f vs deepdream3d %.3f / am3d %.3f", full,
                  dd_m, am_m);
    verdict(4, "baseline ordering", pass, buf);
}

TEST_CASE("distance-function trend") {
    const double jvs = median(variant("full").top1_model);
    const double l2 = median(variant("l2").top1_model);
    const double cos = median(variant("cosine").top1_model);

    const bool pass = jvs >= l2 && l2 >= cos && cos < std::min(jvs, l2);
    char buf[160];
    std::snprintf(buf, sizeof(buf), "model top-1 medians: jvs %.3f >= l2 %.3f > cosine %.3f",
                  jvs, l2, cos);
    verdict(5, "distance-function trend", pass, buf);
}

TEST_CASE("layer-fraction trend") {
    const double f20 = median(variant("frac20").top1_model);
    const double f60 = median(variant("frac60").top1_model);
    const double f100 = median(variant("full").top1_model);

    const bool pass = f20 <= f60 && f60 <= f100;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "model top-1 medians: 20%% %.3f <= 60%% %.3f <= 100%% %.3f",
                  f20, f60, f100);
    verdict(6, "layer-fraction trend", pass, buf);
}

TEST_CASE("frame-metric correlation with stimulus") {
    auto& c = ctx();
    const auto& ds = testutil::fixture_dataset();
    auto rho_medians = [&](const VariantStats& vs) {
        std::vector<double> rp, rs;
        for (std::size_t i = 0; i < vs.finals.size(); ++i) {
            const auto& stim = c.pairs[i % c.pairs.size()].stim;
            const VideoTensor f01 = ds.destandardize(vs.finals[i]);
            const VideoTensor s01 = ds.destandardize(stim);
            rp.push_back(spearman(metrics::psnr_trace(f01), metrics::psnr_trace(s01)));
            rs.push_back(spearman(metrics::ssim_trace(f01), metrics::ssim_trace(s01)));
        }
        return std::pair<double, double>{median(rp), median(rs)};
    };

    const auto [leaps_p, leaps_s] = rho_medians(variant("full"));
    const VariantStats& dd = run_baseline_variant(objectives::BaselineKind::deepdream3d);
    const auto [dd_p, dd_s] = rho_medians(dd);

    const bool pass = leaps_p > 0.3 && leaps_s > 0.3;
    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "median Spearman rho vs stimulus: psnr %.3f ssim %.3f "
                  "(deepdream3d unconstrained: psnr %.3f ssim %.3f)",
                  leaps_p, leaps_s, dd_p, dd_s);
    verdict(7, "frame-metric correlation", pass, buf);
}

TEST_CASE("determinism and frozen models") {
    auto& c = ctx();
    ObjectiveConfig cfg = base_cfg();
    cfg.num_iterations = 20;
    cfg.snapshot_every = 10;
    PrimingSchedule sched;
    sched.layer_ids = c.model->priming_layers();
    const auto& s = c.pairs[0].stim;

    const std::uint64_t ck_model = nn::param_checksum(*c.model);
    const std::uint64_t ck_verifier = nn::param_checksum(*c.verifier);
    std::vector<Tensor> bn_before;
    for (auto& [name, buf] : c.model->buffers()) bn_before.push_back(*buf);

    auto run = [&] {
        return synthesis::synthesize(*c.model, c.verifier.get(), {s}, c.pairs[0].cls, cfg,
                                     sched, 123,
                                     {s.channels(), s.frames(), s.height(), s.width()},
                                     s.range);
    };
    auto a = run();
    auto b = run();

    bool same = a.trace.size() == b.trace.size() && a.snapshots.size() == b.snapshots.size();
    for (std::size_t i = 0; same && i < a.trace.size(); ++i)
        same = a.trace[i].total == b.trace[i].total && a.trace[i].ce == b.trace[i].ce &&
               a.trace[i].priming == b.trace[i].priming &&
               a.trace[i].coherence == b.trace[i].coherence &&
               a.trace[i].diversity == b.trace[i].diversity &&
               a.trace[i].target_prob == b.trace[i].target_prob;
    for (long i = 0; same && i < a.final_video.data.numel(); ++i)
        same = a.final_video.data[i] == b.final_video.data[i];
    for (std::size_t k = 0; same && k < a.snapshots.size(); ++k) {
        same = a.snapshots[k].first == b.snapshots[k].first;
        for (long i = 0; same && i < a.snapshots[k].second.data.numel(); ++i)
            same = a.snapshots[k].second.data[i] == b.snapshots[k].second.data[i];
    }

    bool frozen = nn::param_checksum(*c.model) == ck_model &&
                  nn::param_checksum(*c.verifier) == ck_verifier;
    {
        auto bufs = c.model->buffers();
        for (std::size_t k = 0; frozen && k < bufs.size(); ++k)
            for (long i = 0; frozen && i < bufs[k].second->numel(); ++i)
                frozen = (*bufs[k].second)[i] == bn_before[k][i];
    }

    auto s1 = capture::capture(*c.model, s, sched.layer_ids, false);
    auto s2 = capture::capture(*c.model, s, sched.layer_ids, false);
    bool cap_same = true;
    for (const auto& id : sched.layer_ids) {
        const auto& t1 = s1.records.at(id).tensor->value;
        const auto& t2 = s2.records.at(id).tensor->value;
        for (long i = 0; cap_same && i < t1.numel(); ++i) cap_same = t1[i] == t2[i];
    }
    cap_same = cap_same && nn::param_checksum(*c.model) == ck_model;

    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "bit-identical replay %s, frozen params/buffers %s, capture replay %s",
                  same ? "yes" : "no", frozen ? "yes" : "no", cap_same ? "yes" : "no");
    verdict(8, "determinism and frozen models", same && frozen && cap_same, buf);
}

TEST_CASE("transformer path") {
    nn::TransformerSpec tspec;
    tspec.patch_t = 2;
    tspec.patch_h = 2;
    tspec.patch_w = 2;
    tspec.dim = 8;
    tspec.depth = 1;
    tspec.heads = 2;
    tspec.mlp_hidden = 16;
    nn::ToyVideoTransformer small{tspec};
    small.init_params(101);

    const Tensor x = random_tensor({1, 3, 4, 6, 6}, 41, 0.5);
    const VideoTensor stim(random_tensor({3, 4, 6, 6}, 42, 0.5), {-3.0, 3.0});
    PrimingSchedule sched;
    sched.layer_ids = small.priming_layers();
    auto stim_sess = capture::capture(small, stim, sched.layer_ids, false);

    ObjectiveConfig pcfg;
    pcfg.enable_ce = pcfg.enable_coherence = pcfg.enable_diversity = false;
    const double g_prim = testutil::grad_check(
        [&](const ag::Var& leaf) {
            return objectives::total_loss(small, nullptr, leaf, {stim_sess}, 1, pcfg, sched)
                .total;
        },
        x);
    ObjectiveConfig ccfg;
    ccfg.enable_ce = ccfg.enable_priming = ccfg.enable_diversity = false;
    ccfg.reg_scale = 1.0;
    const double g_coh = testutil::grad_check(
        [&](const ag::Var& leaf) {
            return objectives::total_loss(small, nullptr, leaf, {}, 1, ccfg, sched).total;
        },
        x);

    const auto& full = variant("vit_full");
    const auto& prim = variant("vit_prim");
    const double full_m = median(full.top1_verifier);
    const double prim_m = median(prim.top1_verifier);

    const bool pass = g_prim < 1e-4 && g_coh < 1e-4 && !full.any_aborted &&
                      !prim.any_aborted && full_m >= prim_m;
    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "token grad err %.3g/%.3g, verifier top-1 medians full %.3f >= prim %.3f, "
                  "no aborts %s",
                  g_prim, g_coh, full_m, prim_m,
                  (!full.any_aborted && !prim.any_aborted) ? "yes" : "no");
    verdict(9, "transformer path", pass, buf);
}
