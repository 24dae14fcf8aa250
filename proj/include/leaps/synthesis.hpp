#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "leaps/config.hpp"
#include "leaps/nn.hpp"
#include "leaps/objectives.hpp"
#include "leaps/video.hpp"

namespace leaps::synthesis {

struct TraceRow {
    long iteration = 0;
    double lr = 0.0;
    double ce = 0.0;
    double priming = 0.0;
    double coherence = 0.0;
    double diversity = 0.0;
    double total = 0.0;
    double target_prob = 0.0;
    double target_logit = 0.0;
};

struct RunRecord {
    std::string run_id;  // assigned when stored
    std::string method;  // "leaps" | "deepdream3d" | "am3d"
    std::uint64_t seed = 0;
    long target_class = 0;
    ObjectiveConfig cfg;
    PrimingSchedule sched;
    std::vector<TraceRow> trace;
    std::vector<std::pair<long, VideoTensor>> snapshots;  // (iteration, frame)
    VideoTensor final_video;
    bool aborted_nonfinite = false;
};

// i.i.d. N(0,1), clamped to range; deterministic per seed
VideoTensor init_input(long C, long T, long H, long W, std::uint64_t seed,
                       ValueRange range = {});

// base_lr * 0.5 * (1 + cos(pi * step / num_iterations))
double cosine_lr(long step, long num_iterations, double base_lr);

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

RunRecord synthesize(nn::Model& model, nn::Model* verifier,
                     const std::vector<VideoTensor>& stimuli, long y,
                     const ObjectiveConfig& cfg, const PrimingSchedule& sched,
                     std::uint64_t seed, std::array<long, 4> input_dims,
                     ValueRange range = {});

RunRecord run_baseline(objectives::BaselineKind kind, nn::Model& model, long y,
                       const ObjectiveConfig& cfg, std::uint64_t seed,
                       std::array<long, 4> input_dims, ValueRange range = {});

}  // namespace leaps::synthesis
