#pragma once

#include <string>
#include <vector>

#include "leaps/video.hpp"

namespace leaps {

enum class DistanceKind { l2, l1, cosine, jvs };

const char* to_string(DistanceKind k);
DistanceKind distance_from_string(const std::string& s);

// Ordered priming layer set with linearly decreasing per-layer weights.
struct PrimingSchedule {
    std::vector<std::string> layer_ids;
    double lambda_first = 1.0;
    double lambda_last = 0.3;
    double subset_fraction = 1.0;

    long full_size() const { return static_cast<long>(layer_ids.size()); }

    // floor(fraction * L) retained layers, counted from the front
    long retained_size() const {
        const long L = full_size();
        long k = static_cast<long>(subset_fraction * static_cast<double>(L) + 1e-9);
        return std::min(std::max(k, 0L), L);
    }

    // weight for layer index l (0-based over the full set), linear from
    // lambda_first to lambda_last
    double weight(long l) const {
        const long L = full_size();
        if (L <= 1) return lambda_first;
        const double a = static_cast<double>(l) / static_cast<double>(L - 1);
        return lambda_first + a * (lambda_last - lambda_first);
    }

    void validate() const {
        if (layer_ids.empty())
            throw Error(ErrorCode::config_error, "priming schedule has no layers");
        if (lambda_first <= 0.0 || lambda_first > 1.0 || lambda_last <= 0.0 ||
            lambda_last > 1.0)
            throw Error(ErrorCode::config_error, "lambda weights must lie in (0, 1]");
        if (subset_fraction <= 0.0 || subset_fraction > 1.0)
            throw Error(ErrorCode::config_error, "subset_fraction must lie in (0, 1]");
    }
};

struct ObjectiveConfig {
    DistanceKind distance = DistanceKind::jvs;
    double delta = 1.0;
    double reg_scale = 5e-3;
    bool enable_priming = true;
    bool enable_coherence = true;
    bool enable_diversity = true;
    bool enable_ce = true;
    long num_iterations = 2000;
    double base_lr = 0.2;
    long snapshot_every = 200;
    // baseline prior weights (deepdream3d / am3d)
    double alpha_tv = 1e-4;
    double alpha_l2 = 1e-5;

    void validate() const {
        if (delta < 0.0) throw Error(ErrorCode::config_error, "delta must be >= 0");
        if (reg_scale < 0.0) throw Error(ErrorCode::config_error, "reg_scale must be >= 0");
        if (num_iterations < 1)
            throw Error(ErrorCode::config_error, "num_iterations must be >= 1");
        if (base_lr <= 0.0) throw Error(ErrorCode::config_error, "base_lr must be > 0");
        if (snapshot_every < 1)
            throw Error(ErrorCode::config_error, "snapshot_every must be >= 1");
        if (!enable_priming && !enable_coherence && !enable_diversity && !enable_ce)
            throw Error(ErrorCode::config_error, "at least one loss term must be enabled");
    }
};

}  // namespace leaps
