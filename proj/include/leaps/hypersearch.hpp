#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "leaps/config.hpp"
#include "leaps/nn.hpp"
#include "leaps/video.hpp"

namespace leaps::hypersearch {

struct GridSpec {
    std::vector<double> lambda1_values = {0.5, 0.625, 0.75, 0.875, 1.0};
    std::vector<double> lambdaL_values = {0.1, 0.2, 0.3, 0.4, 0.5};
    std::vector<double> r_values = {1e-3, 2.5e-3, 5e-3, 7.5e-3, 1e-2};
    long probe_iterations = 1000;
};

struct GridRow {
    double lambda1 = 0.0;
    double lambdaL = 0.0;
    double r = 0.0;
    double mean_loss = 0.0;
    bool failed = false;
    std::string error;
};

struct GridResult {
    std::vector<GridRow> rows;
    GridRow best;
};

// Probe-run grid search. Each point runs one short synthesis per
// (stimulus, class) pair; the score is the mean final total loss. Failed
// points stay in the table and are skipped for selection. Ties break toward
// larger lambda1, then smaller r, then smaller lambdaL.
GridResult grid_search(nn::Model& model, nn::Model* verifier,
                       const std::vector<VideoTensor>& stimuli, const std::vector<long>& y_set,
                       const GridSpec& grid, const ObjectiveConfig& base_cfg,
                       const PrimingSchedule& base_sched, std::uint64_t seed);

// header: lambda1,lambdaL,r,mean_loss,status
std::string to_csv(const GridResult& result);

}  // namespace leaps::hypersearch
