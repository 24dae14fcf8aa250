#include "leaps/synthesis.hpp"

#include <cmath>

#include "leaps/kernels.hpp"
#include "leaps/rng.hpp"

namespace leaps::synthesis {

namespace ag = leaps::ag;

VideoTensor init_input(long C, long T, long H, long W, std::uint64_t seed, ValueRange range) {
    if (C < 1 || T < 1 || H < 1 || W < 1)
        throw Error(ErrorCode::dimension_error, "init_input: dims must be >= 1");
    Rng rng(seed);
    Tensor data({C, T, H, W});
    for (long i = 0; i < data.numel(); ++i)
        data[i] = std::clamp(rng.gaussian(), range.lo, range.hi);
    return VideoTensor(std::move(data), range);
}

double cosine_lr(long step, long num_iterations, double base_lr) {
    if (step < 0 || step > num_iterations)
        throw Error(ErrorCode::range_error, "cosine_lr: step outside [0, num_iterations]");
    return base_lr * 0.5 *
           (1.0 + std::cos(M_PI * static_cast<double>(step) /
                           static_cast<double>(num_iterations)));
}

namespace {

bool all_finite(const Tensor& t) {
    for (long i = 0; i < t.numel(); ++i)
        if (!std::isfinite(t[i])) return false;
    return true;
}

// shared Adam loop for LEAPS and the baselines
template <typename LossFn>
RunRecord optimize(LossFn&& loss_fn, const char* method, long y, const ObjectiveConfig& cfg,
                   std::uint64_t seed, std::array<long, 4> dims, ValueRange range) {
    cfg.validate();
    const auto [C, T, H, W] = dims;
    VideoTensor x = init_input(C, T, H, W, seed, range);

    RunRecord rec;
    rec.method = method;
    rec.seed = seed;
    rec.target_class = y;
    rec.cfg = cfg;
    rec.snapshots.push_back({0, x});

    AdamConfig adam;
    Tensor m({C, T, H, W}), v({C, T, H, W});
    const long n = x.data.numel();
    const auto& K = kernels::active();
    long updates_done = 0;

    for (long step = 0; step < cfg.num_iterations; ++step) {
        const double lr = cosine_lr(step, cfg.num_iterations, cfg.base_lr);
        ag::Var leaf = ag::leaf(x.data.reshaped({1, C, T, H, W}), true);
        objectives::TotalLossResult lr_res = loss_fn(leaf);

        TraceRow row;
        row.iteration = step;
        row.lr = lr;
        row.ce = lr_res.breakdown.ce;
        row.priming = lr_res.breakdown.priming;
        row.coherence = lr_res.breakdown.coherence;
        row.diversity = lr_res.breakdown.diversity;
        row.total = lr_res.breakdown.total;
        row.target_prob = lr_res.target_prob;
        row.target_logit = lr_res.target_logit;
        rec.trace.push_back(row);

        if (!std::isfinite(lr_res.breakdown.total)) {
            rec.aborted_nonfinite = true;
            break;
        }
        ag::backward(lr_res.total);
        const Tensor& g = leaf->grad;
        if (!all_finite(g)) {
            rec.aborted_nonfinite = true;
            break;
        }

        const double bc1 = 1.0 - std::pow(adam.beta1, static_cast<double>(step + 1));
        const double bc2 = 1.0 - std::pow(adam.beta2, static_cast<double>(step + 1));
        for (long i = 0; i < n; ++i) {
            m[i] = adam.beta1 * m[i] + (1.0 - adam.beta1) * g[i];
            v[i] = adam.beta2 * v[i] + (1.0 - adam.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            x.data[i] -= lr * mhat / (std::sqrt(vhat) + adam.epsilon);
        }
        K.clamp(x.data.data(), range.lo, range.hi, n);
        updates_done = step + 1;

        if (updates_done % cfg.snapshot_every == 0 && updates_done != cfg.num_iterations)
            rec.snapshots.push_back({updates_done, x});
    }
    rec.snapshots.push_back({updates_done, x});
    rec.final_video = x;
    return rec;
}

}  // namespace

RunRecord synthesize(nn::Model& model, nn::Model* verifier,
                     const std::vector<VideoTensor>& stimuli, long y,
                     const ObjectiveConfig& cfg, const PrimingSchedule& sched,
                     std::uint64_t seed, std::array<long, 4> dims, ValueRange range) {
    if (cfg.enable_priming && stimuli.empty())
        throw Error(ErrorCode::empty_stimuli, "priming enabled with no stimulus video");
    for (const auto& s : stimuli) validate_video(s);

    // prime once: stimulus sessions are value-only and reused every iteration
    std::vector<capture::CaptureSession> stim_sessions;
    if (cfg.enable_priming) {
        std::vector<std::string> taps;
        for (long l = 0; l < sched.retained_size(); ++l) taps.push_back(sched.layer_ids[l]);
        for (const auto& s : stimuli)
            stim_sessions.push_back(capture::capture(model, s, taps, false));
    }

    RunRecord rec = optimize(
        [&](const ag::Var& leaf) {
            return objectives::total_loss(model, verifier, leaf, stim_sessions, y, cfg, sched);
        },
        "leaps", y, cfg, seed, dims, range);
    rec.sched = sched;
    return rec;
}

RunRecord run_baseline(objectives::BaselineKind kind, nn::Model& model, long y,
                       const ObjectiveConfig& cfg, std::uint64_t seed,
                       std::array<long, 4> dims, ValueRange range) {
    return optimize(
        [&](const ag::Var& leaf) { return objectives::baseline_loss(kind, model, leaf, y, cfg); },
        objectives::to_string(kind), y, cfg, seed, dims, range);
}

}  // namespace leaps::synthesis
