#include "leaps/hypersearch.hpp"

#include <cmath>
#include <cstdio>

#include "leaps/rng.hpp"
#include "leaps/synthesis.hpp"

namespace leaps::hypersearch {

namespace {

// tie-break order: larger lambda1, then smaller r, then smaller lambdaL
bool better(const GridRow& a, const GridRow& b) {
    if (a.mean_loss != b.mean_loss) return a.mean_loss < b.mean_loss;
    if (a.lambda1 != b.lambda1) return a.lambda1 > b.lambda1;
    if (a.r != b.r) return a.r < b.r;
    return a.lambdaL < b.lambdaL;
}

}  // namespace

GridResult grid_search(nn::Model& model, nn::Model* verifier,
                       const std::vector<VideoTensor>& stimuli, const std::vector<long>& y_set,
                       const GridSpec& grid, const ObjectiveConfig& base_cfg,
                       const PrimingSchedule& base_sched, std::uint64_t seed) {
    if (grid.lambda1_values.empty() || grid.lambdaL_values.empty() || grid.r_values.empty())
        throw Error(ErrorCode::config_error, "grid_search: empty grid axis");
    if (grid.probe_iterations < 1)
        throw Error(ErrorCode::config_error, "grid_search: probe_iterations must be >= 1");
    if (stimuli.empty()) throw Error(ErrorCode::empty_stimuli, "grid_search: no stimuli");
    if (stimuli.size() != y_set.size())
        throw Error(ErrorCode::length_mismatch, "grid_search: stimuli/classes size mismatch");

    GridResult result;
    bool have_best = false;
    for (double l1 : grid.lambda1_values)
        for (double lL : grid.lambdaL_values)
            for (double r : grid.r_values) {
                GridRow row;
                row.lambda1 = l1;
                row.lambdaL = lL;
                row.r = r;

                ObjectiveConfig cfg = base_cfg;
                cfg.reg_scale = r;
                cfg.num_iterations = grid.probe_iterations;
                cfg.snapshot_every = grid.probe_iterations;
                PrimingSchedule sched = base_sched;
                sched.lambda_first = l1;
                sched.lambda_last = lL;

                double loss_sum = 0.0;
                try {
                    for (size_t p = 0; p < stimuli.size(); ++p) {
                        const auto& s = stimuli[p];
                        const std::uint64_t probe_seed =
                            Rng(seed).derive(static_cast<std::uint64_t>(p) + 1);
                        auto rec = synthesis::synthesize(
                            model, verifier, {s}, y_set[p], cfg, sched, probe_seed,
                            {s.channels(), s.frames(), s.height(), s.width()}, s.range);
                        const double fin = rec.trace.back().total;
                        if (rec.aborted_nonfinite || !std::isfinite(fin))
                            throw Error(ErrorCode::divergence_error,
                                        "probe diverged to non-finite loss");
                        loss_sum += fin;
                    }
                    row.mean_loss = loss_sum / static_cast<double>(stimuli.size());
                } catch (const Error& e) {
                    row.failed = true;
                    row.error = e.what();
                }

                result.rows.push_back(row);
                if (!row.failed && (!have_best || better(row, result.best))) {
                    result.best = row;
                    have_best = true;
                }
            }
    if (!have_best)
        throw Error(ErrorCode::divergence_error, "grid_search: every grid point failed");
    return result;
}

std::string to_csv(const GridResult& result) {
    std::string out = "lambda1,lambdaL,r,mean_loss,status\n";
    char buf[160];
    for (const auto& row : result.rows) {
        if (row.failed)
            std::snprintf(buf, sizeof(buf), "%.6g,%.6g,%.6g,,failed\n", row.lambda1,
                          row.lambdaL, row.r);
        else
            std::snprintf(buf, sizeof(buf), "%.6g,%.6g,%.6g,%.9g,ok\n", row.lambda1,
                          row.lambdaL, row.r, row.mean_loss);
        out += buf;
    }
    return out;
}

}  // namespace leaps::hypersearch
