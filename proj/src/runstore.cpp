#include "leaps/runstore.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "leaps/nn.hpp"
#include "leaps/objectives.hpp"

namespace leaps::store {

namespace fs = std::filesystem;
using nlohmann::json;

std::string RunConfig::to_json() const {
    json j;
    j["method"] = method;
    j["model_path"] = model_path;
    j["verifier_path"] = verifier_path;
    j["dataset_path"] = dataset_path;
    j["stimulus_indices"] = stimulus_indices;
    j["target_class"] = target_class;
    j["seed"] = seed;
    j["input_t"] = input_t;
    j["input_h"] = input_h;
    j["input_w"] = input_w;
    json jo;
    jo["distance"] = leaps::to_string(objective.distance);
    jo["delta"] = objective.delta;
    jo["reg_scale"] = objective.reg_scale;
    jo["enable_priming"] = objective.enable_priming;
    jo["enable_coherence"] = objective.enable_coherence;
    jo["enable_diversity"] = objective.enable_diversity;
    jo["enable_ce"] = objective.enable_ce;
    jo["num_iterations"] = objective.num_iterations;
    jo["base_lr"] = objective.base_lr;
    jo["snapshot_every"] = objective.snapshot_every;
    jo["alpha_tv"] = objective.alpha_tv;
    jo["alpha_l2"] = objective.alpha_l2;
    j["objective"] = jo;
    json js;
    js["layer_ids"] = sched.layer_ids;
    js["lambda_first"] = sched.lambda_first;
    js["lambda_last"] = sched.lambda_last;
    js["subset_fraction"] = sched.subset_fraction;
    j["schedule"] = js;
    return j.dump(2) + "\n";
}

RunConfig RunConfig::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::format_error, std::string("config.json: ") + e.what());
    }
    RunConfig cfg;
    try {
        cfg.method = j.at("method").get<std::string>();
        cfg.model_path = j.at("model_path").get<std::string>();
        cfg.verifier_path = j.at("verifier_path").get<std::string>();
        cfg.dataset_path = j.at("dataset_path").get<std::string>();
        cfg.stimulus_indices = j.at("stimulus_indices").get<std::vector<long>>();
        cfg.target_class = j.at("target_class").get<long>();
        cfg.seed = j.at("seed").get<std::uint64_t>();
        cfg.input_t = j.at("input_t").get<long>();
        cfg.input_h = j.at("input_h").get<long>();
        cfg.input_w = j.at("input_w").get<long>();
        const json& jo = j.at("objective");
        cfg.objective.distance = distance_from_string(jo.at("distance").get<std::string>());
        cfg.objective.delta = jo.at("delta").get<double>();
        cfg.objective.reg_scale = jo.at("reg_scale").get<double>();
        cfg.objective.enable_priming = jo.at("enable_priming").get<bool>();
        cfg.objective.enable_coherence = jo.at("enable_coherence").get<bool>();
        cfg.objective.enable_diversity = jo.at("enable_diversity").get<bool>();
        cfg.objective.enable_ce = jo.at("enable_ce").get<bool>();
        cfg.objective.num_iterations = jo.at("num_iterations").get<long>();
        cfg.objective.base_lr = jo.at("base_lr").get<double>();
        cfg.objective.snapshot_every = jo.at("snapshot_every").get<long>();
        cfg.objective.alpha_tv = jo.at("alpha_tv").get<double>();
        cfg.objective.alpha_l2 = jo.at("alpha_l2").get<double>();
        const json& js = j.at("schedule");
        cfg.sched.layer_ids = js.at("layer_ids").get<std::vector<std::string>>();
        cfg.sched.lambda_first = js.at("lambda_first").get<double>();
        cfg.sched.lambda_last = js.at("lambda_last").get<double>();
        cfg.sched.subset_fraction = js.at("subset_fraction").get<double>();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::format_error, std::string("config.json: ") + e.what());
    }
    return cfg;
}

synthesis::RunRecord execute_run(const RunConfig& cfg) {
    auto model = nn::load_model(cfg.model_path);
    std::unique_ptr<nn::Model> verifier;
    if (!cfg.verifier_path.empty()) verifier = nn::load_model(cfg.verifier_path);

    data::Dataset ds = data::load_dataset(cfg.dataset_path);
    const long T = cfg.input_t > 0 ? cfg.input_t : ds.spec.frames;
    const long H = cfg.input_h > 0 ? cfg.input_h : ds.spec.height;
    const long W = cfg.input_w > 0 ? cfg.input_w : ds.spec.width;

    if (cfg.method == "leaps") {
        std::vector<VideoTensor> stimuli;
        for (long idx : cfg.stimulus_indices) {
            if (idx < 0 || idx >= static_cast<long>(ds.val.size()))
                throw Error(ErrorCode::range_error, "stimulus index outside validation split");
            stimuli.push_back(resample_video(ds.val[idx].video, T, H, W));
        }
        return synthesis::synthesize(*model, verifier.get(), stimuli, cfg.target_class,
                                     cfg.objective, cfg.sched, cfg.seed,
                                     {ds.spec.channels, T, H, W});
    }
    const auto kind = objectives::baseline_from_string(cfg.method);
    return synthesis::run_baseline(kind, *model, cfg.target_class, cfg.objective, cfg.seed,
                                   {ds.spec.channels, T, H, W});
}

std::string trace_to_csv(const std::vector<synthesis::TraceRow>& trace) {
    std::string out = "iteration,lr,ce,priming,coherence,diversity,total,target_prob\n";
    char buf[256];
    for (const auto& r : trace) {
        std::snprintf(buf, sizeof(buf), "%ld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                      r.iteration, r.lr, r.ce, r.priming, r.coherence, r.diversity, r.total,
                      r.target_prob);
        out += buf;
    }
    return out;
}

std::vector<synthesis::TraceRow> trace_from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) ||
        line != "iteration,lr,ce,priming,coherence,diversity,total,target_prob")
        throw Error(ErrorCode::format_error, "trace.csv: bad header");
    std::vector<synthesis::TraceRow> trace;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        synthesis::TraceRow r;
        if (std::sscanf(line.c_str(), "%ld,%lg,%lg,%lg,%lg,%lg,%lg,%lg", &r.iteration, &r.lr,
                        &r.ce, &r.priming, &r.coherence, &r.diversity, &r.total,
                        &r.target_prob) != 8)
            throw Error(ErrorCode::format_error, "trace.csv: bad row: " + line);
        trace.push_back(r);
    }
    return trace;
}

std::string read_text_file(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorCode::format_error, "cannot open: " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_text_file(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorCode::format_error, "cannot open for write: " + path.string());
    f << text;
    if (!f) throw Error(ErrorCode::format_error, "write failed: " + path.string());
}

RunStore::RunStore(fs::path root) : root_(std::move(root)) {
    fs::create_directories(root_ / "runs");
}

RunStore RunStore::open_default() {
    const char* env = std::getenv("LEAPS_STORE");
    return RunStore(env && *env ? fs::path(env) : fs::path("store"));
}

fs::path RunStore::run_dir(const std::string& run_id) const { return root_ / "runs" / run_id; }

namespace {

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string make_run_id(const std::string& config_json, std::uint64_t seed,
                        const fs::path& runs_root) {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char stamp[32];
    std::strftime(stamp, sizeof(stamp), "%Y%m%d-%H%M%S", std::gmtime(&t));
    char base[128];
    std::snprintf(base, sizeof(base), "%s-s%llu-%08llx", stamp,
                  static_cast<unsigned long long>(seed),
                  static_cast<unsigned long long>(fnv1a(config_json) & 0xffffffffull));
    std::string id = base;
    for (int k = 2; fs::exists(runs_root / id); ++k) id = std::string(base) + "-" + std::to_string(k);
    return id;
}

}  // namespace

std::string RunStore::store_run(const RunConfig& cfg, const synthesis::RunRecord& rec) {
    const std::string config_json = cfg.to_json();
    const std::string run_id = make_run_id(config_json, cfg.seed, root_ / "runs");
    const fs::path dir = run_dir(run_id);
    fs::create_directories(dir / "snapshots");
    fs::create_directories(dir / "frames");
    write_text_file(dir / "config.json", config_json);
    write_text_file(dir / "trace.csv", trace_to_csv(rec.trace));
    for (const auto& [iter, video] : rec.snapshots) {
        char name[48];
        std::snprintf(name, sizeof(name), "iter_%06ld.leapsvid", iter);
        save_leapsvid(video, (dir / "snapshots" / name).string());
    }
    save_leapsvid(rec.final_video, (dir / "final.leapsvid").string());
    write_text_file(dir / "report.json", "{}\n");
    return run_id;
}

std::string RunStore::store_table(const std::string& kind, const std::string& config_json,
                                  const std::string& csv) {
    const std::string run_id = kind + "-" + make_run_id(config_json, 0, root_ / "runs");
    const fs::path dir = run_dir(run_id);
    fs::create_directories(dir);
    write_text_file(dir / "config.json", config_json);
    write_text_file(dir / "table.csv", csv);
    return run_id;
}

void RunStore::store_report(const std::string& run_id, const std::string& report_json) {
    write_text_file(run_dir(run_id) / "report.json", report_json);
}

RunConfig RunStore::load_config(const std::string& run_id) const {
    return RunConfig::from_json(read_text_file(run_dir(run_id) / "config.json"));
}

std::vector<synthesis::TraceRow> RunStore::load_trace(const std::string& run_id) const {
    return trace_from_csv(read_text_file(run_dir(run_id) / "trace.csv"));
}

VideoTensor RunStore::load_final(const std::string& run_id) const {
    return load_leapsvid((run_dir(run_id) / "final.leapsvid").string());
}

std::vector<std::string> RunStore::list_runs() const {
    std::vector<std::string> ids;
    for (const auto& e : fs::directory_iterator(root_ / "runs"))
        if (e.is_directory()) ids.push_back(e.path().filename().string());
    std::sort(ids.begin(), ids.end());
    return ids;
}

}  // namespace leaps::store
