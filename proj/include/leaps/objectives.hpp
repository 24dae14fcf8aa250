#pragma once

#include <map>
#include <string>
#include <vector>

#include "leaps/capture.hpp"
#include "leaps/config.hpp"
#include "leaps/nn.hpp"
#include "leaps/video.hpp"

namespace leaps::objectives {

namespace ag = leaps::ag;

struct LossBreakdown {
    double ce = 0.0;
    double priming = 0.0;
    double coherence = 0.0;
    double diversity = 0.0;
    double baseline_tv = 0.0;
    double baseline_l2 = 0.0;
    double total = 0.0;
};

// ---- value-level (oracle-friendly) ----
double jvs_similarity(const std::vector<double>& a, const std::vector<double>& b,
                      bool* degenerate = nullptr);
double priming_distance(const std::vector<double>& a, const std::vector<double>& b,
                        DistanceKind kind);

// ---- graph-level ----
ag::Var jvs_similarity_v(const ag::Var& a, const ag::Var& b);
ag::Var priming_distance_v(const ag::Var& a, const ag::Var& b, DistanceKind kind);

// (1/L_full) * sum over retained layers of lambda_l * dist(mu_x_l, mu_v_l).
// Subset ablations reweight against the full |Lambda|, they do not renormalize.
ag::Var priming_loss(const capture::CaptureSession& session_x,
                     const capture::CaptureSession& session_v,
                     const PrimingSchedule& sched, DistanceKind kind);

// Eq.-style margin loss over unordered frame pairs at one layer; consecutive
// pairs pull together (L1), the rest push apart by delta; group-averaged.
ag::Var coherence_loss(const capture::ActivationRecord& rec, double delta);

using BnStatPair = std::pair<std::vector<double>, std::vector<double>>;
// pairs of (session tap id, (running_mean, running_var))
ag::Var diversity_loss(const capture::CaptureSession& session,
                       const std::vector<std::pair<std::string, BnStatPair>>& bn_stats);

ag::Var tv3d_v(const ag::Var& x);      // x {C,T,H,W} or {1,C,T,H,W}
ag::Var l2_prior_v(const ag::Var& x);
double tv3d(const VideoTensor& x);
double l2_prior(const VideoTensor& x);

struct TotalLossResult {
    ag::Var total;
    LossBreakdown breakdown;
    double target_prob = 0.0;  // model's softmax probability of y on x*
    double target_logit = 0.0;
};

// Full objective on input leaf x {1,C,T,H,W}. Stimulus sessions are captured
// once by the caller (no-grad) and reused across iterations.
TotalLossResult total_loss(nn::Model& model, nn::Model* verifier, const ag::Var& x_leaf,
                           const std::vector<capture::CaptureSession>& stim_sessions,
                           long y, const ObjectiveConfig& cfg, const PrimingSchedule& sched);

enum class BaselineKind { deepdream3d, am3d };
BaselineKind baseline_from_string(const std::string& s);
const char* to_string(BaselineKind k);

TotalLossResult baseline_loss(BaselineKind kind, nn::Model& model, const ag::Var& x_leaf,
                              long y, const ObjectiveConfig& cfg);

}  // namespace leaps::objectives
