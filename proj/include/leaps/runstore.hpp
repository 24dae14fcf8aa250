#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "leaps/config.hpp"
#include "leaps/dataset.hpp"
#include "leaps/synthesis.hpp"

namespace leaps::store {

// Everything needed to re-execute a run exactly.
struct RunConfig {
    std::string method = "leaps";  // "leaps" | "deepdream3d" | "am3d"
    std::string model_path;
    std::string verifier_path;  // empty = no verifier
    std::string dataset_path;
    std::vector<long> stimulus_indices;  // into the dataset's validation split
    long target_class = 0;
    std::uint64_t seed = 0;
    long input_t = 0, input_h = 0, input_w = 0;  // 0 = stimulus resolution
    ObjectiveConfig objective;
    PrimingSchedule sched;

    std::string to_json() const;
    static RunConfig from_json(const std::string& text);
};

// Loads model/verifier/dataset and re-executes the run described by cfg.
// Stimuli above the native resolution are resampled to (input_t, input_h, input_w).
synthesis::RunRecord execute_run(const RunConfig& cfg);

std::string trace_to_csv(const std::vector<synthesis::TraceRow>& trace);
std::vector<synthesis::TraceRow> trace_from_csv(const std::string& text);

class RunStore {
public:
    explicit RunStore(std::filesystem::path root);
    // LEAPS_STORE env var, falling back to ./store
    static RunStore open_default();

    const std::filesystem::path& root() const { return root_; }
    std::filesystem::path run_dir(const std::string& run_id) const;

    // writes config.json, trace.csv, snapshots/, final.leapsvid, frames/,
    // report.json placeholder; returns the run_id
    std::string store_run(const RunConfig& cfg, const synthesis::RunRecord& rec);

    // generic table artifact (grid search, ablations)
    std::string store_table(const std::string& kind, const std::string& config_json,
                            const std::string& csv);

    void store_report(const std::string& run_id, const std::string& report_json);

    RunConfig load_config(const std::string& run_id) const;
    std::vector<synthesis::TraceRow> load_trace(const std::string& run_id) const;
    VideoTensor load_final(const std::string& run_id) const;
    std::vector<std::string> list_runs() const;

private:
    std::filesystem::path root_;
};

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace leaps::store
