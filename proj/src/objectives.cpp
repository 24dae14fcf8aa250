#include "leaps/objectives.hpp"

#include <algorithm>
#include <cmath>

#include "leaps/kernels.hpp"

namespace leaps::objectives {

const char* to_string_impl(DistanceKind k) {
    switch (k) {
        case DistanceKind::l2: return "l2";
        case DistanceKind::l1: return "l1";
        case DistanceKind::cosine: return "cosine";
        case DistanceKind::jvs: return "jvs";
    }
    return "?";
}

}  // namespace leaps::objectives

namespace leaps {

const char* to_string(DistanceKind k) { return objectives::to_string_impl(k); }

DistanceKind distance_from_string(const std::string& s) {
    if (s == "l2") return DistanceKind::l2;
    if (s == "l1") return DistanceKind::l1;
    if (s == "cosine" || s == "cos") return DistanceKind::cosine;
    if (s == "jvs") return DistanceKind::jvs;
    throw Error(ErrorCode::config_error, "unknown distance kind: " + s);
}

}  // namespace leaps

namespace leaps::objectives {

// ---------------- value-level ----------------

double jvs_similarity(const std::vector<double>& a, const std::vector<double>& b,
                      bool* degenerate) {
    if (a.size() != b.size() || a.empty())
        throw Error(ErrorCode::length_mismatch, "jvs: vector lengths differ or empty");
    double nume = 0.0, deno = 0.0;
    kernels::active().jaccard_acc(a.data(), b.data(), a.size(), &nume, &deno);
    if (degenerate) *degenerate = (deno == 0.0);
    if (deno == 0.0) return 1.0;  // both all-zero
    return nume / deno;
}

double priming_distance(const std::vector<double>& a, const std::vector<double>& b,
                        DistanceKind kind) {
    if (a.size() != b.size() || a.empty())
        throw Error(ErrorCode::length_mismatch, "priming_distance: vector lengths differ");
    const auto& K = kernels::active();
    switch (kind) {
        case DistanceKind::l1:
            return K.sum_abs_diff(a.data(), b.data(), a.size());
        case DistanceKind::l2: {
            double acc = 0.0;
            for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
            return std::sqrt(acc);
        }
        case DistanceKind::cosine: {
            const double na = std::sqrt(K.sumsq(a.data(), a.size()));
            const double nb = std::sqrt(K.sumsq(b.data(), b.size()));
            if (na == 0.0 || nb == 0.0)
                throw Error(ErrorCode::zero_norm, "cosine distance on a zero vector");
            return 1.0 - K.dot(a.data(), b.data(), a.size()) / (na * nb);
        }
        case DistanceKind::jvs:
            return 1.0 - jvs_similarity(a, b);
    }
    throw Error(ErrorCode::config_error, "bad distance kind");
}

// ---------------- graph-level ----------------

ag::Var jvs_similarity_v(const ag::Var& a, const ag::Var& b) {
    if (!a->value.same_shape(b->value))
        throw Error(ErrorCode::length_mismatch, "jvs: shape mismatch");
    ag::Var ap = ag::relu(a);
    ag::Var an = ag::relu(ag::scale(a, -1.0));
    ag::Var bp = ag::relu(b);
    ag::Var bn = ag::relu(ag::scale(b, -1.0));
    ag::Var nume = ag::add(ag::sum(ag::elem_min(ap, bp)), ag::sum(ag::elem_min(an, bn)));
    ag::Var deno = ag::add(ag::sum(ag::elem_max(ap, bp)), ag::sum(ag::elem_max(an, bn)));
    if (deno->value[0] == 0.0) return ag::scalar(1.0);  // degenerate both-zero input
    return ag::div_ss(nume, deno);
}

ag::Var priming_distance_v(const ag::Var& a, const ag::Var& b, DistanceKind kind) {
    if (!a->value.same_shape(b->value))
        throw Error(ErrorCode::length_mismatch, "priming_distance: shape mismatch");
    switch (kind) {
        case DistanceKind::l1:
            return ag::sum(ag::abs_v(ag::sub(a, b)));
        case DistanceKind::l2:
            return ag::sqrt_s(ag::sum(ag::square(ag::sub(a, b))));
        case DistanceKind::cosine: {
            ag::Var na = ag::sqrt_s(ag::sum(ag::square(a)));
            ag::Var nb = ag::sqrt_s(ag::sum(ag::square(b)));
            if (na->value[0] == 0.0 || nb->value[0] == 0.0)
                throw Error(ErrorCode::zero_norm, "cosine distance on a zero vector");
            ag::Var dot = ag::sum(ag::mul(a, b));
            ag::Var cosv = ag::div_ss(dot, ag::mul(na, nb));
            return ag::add_const(ag::scale(cosv, -1.0), 1.0);
        }
        case DistanceKind::jvs:
            return ag::add_const(ag::scale(jvs_similarity_v(a, b), -1.0), 1.0);
    }
    throw Error(ErrorCode::config_error, "bad distance kind");
}

ag::Var priming_loss(const capture::CaptureSession& session_x,
                     const capture::CaptureSession& session_v,
                     const PrimingSchedule& sched, DistanceKind kind) {
    sched.validate();
    const long L = sched.full_size();
    const long retained = sched.retained_size();
    ag::Var acc = ag::scalar(0.0);
    for (long l = 0; l < retained; ++l) {
        const std::string& id = sched.layer_ids[l];
        auto itx = session_x.records.find(id);
        auto itv = session_v.records.find(id);
        if (itx == session_x.records.end() || itv == session_v.records.end())
            throw Error(ErrorCode::layer_mismatch, "layer not captured in both sessions: " + id);
        ag::Var d = priming_distance_v(itx->second.channel_mean, itv->second.channel_mean, kind);
        acc = ag::add(acc, ag::scale(d, sched.weight(l)));
    }
    return ag::scale(acc, 1.0 / static_cast<double>(L));
}

ag::Var coherence_loss(const capture::ActivationRecord& rec, double delta) {
    const capture::ActivationRecord* r = &rec;
    capture::ActivationRecord reshaped;
    if (rec.kind == capture::RecordKind::patch_tokens) {
        reshaped = capture::tokens_to_volume(rec);
        r = &reshaped;
    }
    const auto& shape = r->tensor->value.shape();
    const long C = shape[0], T = shape[1];
    long R = 1;
    for (std::size_t i = 2; i < shape.size(); ++i) R *= shape[i];
    if (T < 2)
        throw Error(ErrorCode::too_few_frames, "coherence needs at least 2 frames");

    // frames as rows: {T, C*R}
    ag::Var frames = ag::reshape(ag::permute(ag::reshape(r->tensor, {C, T, R}), {1, 0, 2}),
                                 {T, C * R});
    ag::Var cons = ag::scalar(0.0);
    ag::Var hinge = ag::scalar(0.0);
    long n_cons = 0, n_non = 0;
    for (long t1 = 0; t1 < T; ++t1)
        for (long t2 = t1 + 1; t2 < T; ++t2) {
            ag::Var f1 = ag::slice_axis0(frames, t1, t1 + 1);
            ag::Var f2 = ag::slice_axis0(frames, t2, t2 + 1);
            ag::Var l1 = ag::sum(ag::abs_v(ag::sub(f1, f2)));
            if (t2 - t1 == 1) {
                cons = ag::add(cons, l1);
                ++n_cons;
            } else {
                hinge = ag::add(hinge, ag::relu(ag::add_const(ag::scale(l1, -1.0), delta)));
                ++n_non;
            }
        }
    ag::Var out = ag::scale(cons, 1.0 / static_cast<double>(n_cons));
    if (n_non > 0) out = ag::add(out, ag::scale(hinge, 1.0 / static_cast<double>(n_non)));
    return out;
}

ag::Var diversity_loss(const capture::CaptureSession& session,
                       const std::vector<std::pair<std::string, BnStatPair>>& bn_stats) {
    if (bn_stats.empty())
        throw Error(ErrorCode::layer_mismatch, "diversity: no batch-norm statistics given");
    ag::Var acc = ag::scalar(0.0);
    for (const auto& [tap_id, stats] : bn_stats) {
        auto it = session.records.find(tap_id);
        if (it == session.records.end())
            throw Error(ErrorCode::layer_mismatch, "diversity: layer not captured: " + tap_id);
        const auto& rec = it->second;
        const long C = rec.channel_mean->value.numel();
        if (static_cast<long>(stats.first.size()) != C)
            throw Error(ErrorCode::layer_mismatch, "diversity: channel width mismatch at " + tap_id);
        ag::Var rm = ag::constant(Tensor({C}, stats.first));
        ag::Var rv = ag::constant(Tensor({C}, stats.second));
        ag::Var mean_term = ag::sqrt_s(ag::sum(ag::square(ag::sub(rec.channel_mean, rm))));
        ag::Var var_term = ag::sqrt_s(ag::sum(ag::square(ag::sub(rec.channel_var, rv))));
        acc = ag::add(acc, ag::add(mean_term, var_term));
    }
    return acc;
}

// ---------------- input priors ----------------

namespace {

// forward differences along one axis of {C,T,H,W}, as sum of abs + site count
std::pair<ag::Var, long> axis_tv(const ag::Var& x, int axis) {
    const auto& s = x->value.shape();
    if (s[axis] < 2) return {ag::scalar(0.0), 0};
    std::vector<long> strides(4, 1);
    for (int i = 2; i >= 0; --i) strides[i] = strides[i + 1] * s[i + 1];
    std::vector<long> hi_shape = s, lo_shape = s;
    std::vector<long> hi_idx, lo_idx;
    hi_shape[axis] -= 1;
    lo_shape[axis] -= 1;
    const long n = Tensor::numel_of(hi_shape);
    hi_idx.reserve(n);
    lo_idx.reserve(n);
    std::vector<long> idx(4, 0);
    for (long i = 0; i < n; ++i) {
        long base = 0;
        for (int d = 0; d < 4; ++d) base += idx[d] * strides[d];
        lo_idx.push_back(base);
        hi_idx.push_back(base + strides[axis]);
        for (int d = 3; d >= 0; --d) {
            if (++idx[d] < hi_shape[d]) break;
            idx[d] = 0;
        }
    }
    ag::Var lo = ag::take(x, std::move(lo_idx), hi_shape);
    ag::Var hi = ag::take(x, std::move(hi_idx), hi_shape);
    return {ag::sum(ag::abs_v(ag::sub(hi, lo))), n};
}

ag::Var squeeze_batch(const ag::Var& x) {
    const auto& s = x->value.shape();
    if (s.size() == 5) {
        if (s[0] != 1) throw Error(ErrorCode::shape_error, "tv3d: batch must be 1");
        return ag::reshape(x, {s[1], s[2], s[3], s[4]});
    }
    if (s.size() != 4) throw Error(ErrorCode::shape_error, "tv3d: rank-4 input expected");
    return x;
}

}  // namespace

ag::Var tv3d_v(const ag::Var& x_in) {
    ag::Var x = squeeze_batch(x_in);
    auto [st, nt] = axis_tv(x, 1);
    auto [sh, nh] = axis_tv(x, 2);
    auto [sw, nw] = axis_tv(x, 3);
    const long n = nt + nh + nw;
    if (n == 0) return ag::scalar(0.0);
    return ag::scale(ag::add(ag::add(st, sh), sw), 1.0 / static_cast<double>(n));
}

ag::Var l2_prior_v(const ag::Var& x) { return ag::mean(ag::square(x)); }

double tv3d(const VideoTensor& x) {
    return tv3d_v(ag::constant(x.data))->value[0];
}

double l2_prior(const VideoTensor& x) {
    return l2_prior_v(ag::constant(x.data))->value[0];
}

// ---------------- aggregation ----------------

TotalLossResult total_loss(nn::Model& model, nn::Model* verifier, const ag::Var& x_leaf,
                           const std::vector<capture::CaptureSession>& stim_sessions,
                           long y, const ObjectiveConfig& cfg, const PrimingSchedule& sched) {
    cfg.validate();
    if (cfg.enable_priming && stim_sessions.empty())
        throw Error(ErrorCode::empty_stimuli, "priming enabled with no stimulus");
    if (cfg.enable_diversity && !verifier)
        throw Error(ErrorCode::config_error, "diversity enabled with no verifier");

    // capture only what the enabled terms need
    std::vector<std::string> taps;
    if (cfg.enable_priming)
        for (long l = 0; l < sched.retained_size(); ++l) taps.push_back(sched.layer_ids[l]);
    const std::string coh_layer = model.coherence_layer();
    if (cfg.enable_coherence &&
        std::find(taps.begin(), taps.end(), coh_layer) == taps.end())
        taps.push_back(coh_layer);

    capture::CaptureSession sess = capture::capture_from_leaf(model, x_leaf, taps);

    TotalLossResult res;
    ag::Var total = ag::scalar(0.0);

    {
        const auto& lg = sess.logits->value;
        auto probs = ag::softmax_row(lg.data(), lg.dim(1));
        res.target_prob = probs[y];
        res.target_logit = lg[y];
    }

    if (cfg.enable_ce) {
        ag::Var ce = ag::cross_entropy_logits(sess.logits, {y});
        res.breakdown.ce = ce->value[0];
        total = ag::add(total, ce);
    }
    if (cfg.enable_priming) {
        ag::Var acc = ag::scalar(0.0);
        for (const auto& sv : stim_sessions)
            acc = ag::add(acc, priming_loss(sess, sv, sched, cfg.distance));
        ag::Var prim = ag::scale(acc, 1.0 / static_cast<double>(stim_sessions.size()));
        res.breakdown.priming = prim->value[0];
        total = ag::add(total, prim);
    }

    ag::Var reg = ag::scalar(0.0);
    bool any_reg = false;
    if (cfg.enable_coherence) {
        ag::Var coh = coherence_loss(sess.records.at(coh_layer), cfg.delta);
        res.breakdown.coherence = coh->value[0];
        reg = ag::add(reg, coh);
        any_reg = true;
    }
    if (cfg.enable_diversity) {
        const auto bn_ids = verifier->bn_layers();
        std::vector<std::string> vtaps;
        for (const auto& id : bn_ids) vtaps.push_back(verifier->bn_input_tap(id));
        capture::CaptureSession vsess = capture::capture_from_leaf(*verifier, x_leaf, vtaps);
        auto stats = capture::read_bn_stats(*verifier, bn_ids);
        std::vector<std::pair<std::string, BnStatPair>> pairs;
        for (const auto& id : bn_ids)
            pairs.push_back({verifier->bn_input_tap(id), stats.at(id)});
        ag::Var div = diversity_loss(vsess, pairs);
        res.breakdown.diversity = div->value[0];
        reg = ag::add(reg, div);
        any_reg = true;
    }
    if (any_reg) total = ag::add(total, ag::scale(reg, cfg.reg_scale));

    res.total = total;
    res.breakdown.total = total->value[0];
    return res;
}

BaselineKind baseline_from_string(const std::string& s) {
    if (s == "deepdream3d" || s == "deepdream") return BaselineKind::deepdream3d;
    if (s == "am3d" || s == "am") return BaselineKind::am3d;
    throw Error(ErrorCode::config_error, "unknown baseline kind: " + s);
}

const char* to_string(BaselineKind k) {
    return k == BaselineKind::deepdream3d ? "deepdream3d" : "am3d";
}

TotalLossResult baseline_loss(BaselineKind kind, nn::Model& model, const ag::Var& x_leaf,
                              long y, const ObjectiveConfig& cfg) {
    nn::ForwardOptions opt;
    nn::ForwardResult fr = model.forward(x_leaf, opt);

    TotalLossResult res;
    {
        const auto& lg = fr.logits->value;
        auto probs = ag::softmax_row(lg.data(), lg.dim(1));
        res.target_prob = probs[y];
        res.target_logit = lg[y];
    }

    ag::Var obj;
    if (kind == BaselineKind::deepdream3d) {
        obj = ag::cross_entropy_logits(fr.logits, {y});
        res.breakdown.ce = obj->value[0];
    } else {
        // gradient ascent on the target logit, expressed as minimizing its negation
        const long Kc = fr.logits->value.dim(1);
        obj = ag::scale(ag::take(fr.logits, {y}, {1}), -1.0);
        (void)Kc;
        res.breakdown.ce = obj->value[0];
    }
    ag::Var tv = tv3d_v(x_leaf);
    ag::Var l2 = l2_prior_v(x_leaf);
    res.breakdown.baseline_tv = tv->value[0];
    res.breakdown.baseline_l2 = l2->value[0];
    ag::Var total = ag::add(obj, ag::add(ag::scale(tv, cfg.alpha_tv), ag::scale(l2, cfg.alpha_l2)));
    res.total = total;
    res.breakdown.total = total->value[0];
    return res;
}

}  // namespace leaps::objectives
