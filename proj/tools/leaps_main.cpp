#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "leaps/ablate.hpp"
#include "leaps/capture.hpp"
#include "leaps/dataset.hpp"
#include "leaps/hypersearch.hpp"
#include "leaps/imageio.hpp"
#include "leaps/metrics.hpp"
#include "leaps/nn.hpp"
#include "leaps/runstore.hpp"
#include "leaps/synthesis.hpp"
#include "leaps/train.hpp"

namespace {

using namespace leaps;

int exit_code_for(const Error& e) {
    switch (e.code()) {
        case ErrorCode::config_error:
        case ErrorCode::format_error:
        case ErrorCode::version_error:
        case ErrorCode::range_error:
        case ErrorCode::unknown_layer:
        case ErrorCode::not_bn:
        case ErrorCode::empty_stimuli:
        case ErrorCode::empty_set:
        case ErrorCode::length_mismatch:
            return 2;
        default:
            return 3;
    }
}

long parse_stimulus_ref(const std::string& ref) {
    if (ref.rfind("val:", 0) != 0)
        throw Error(ErrorCode::config_error,
                    "stimulus: expected val:<index>, got \"" + ref + "\"");
    try {
        return std::stol(ref.substr(4));
    } catch (const std::exception&) {
        throw Error(ErrorCode::config_error, "stimulus: bad index in \"" + ref + "\"");
    }
}

// channel-mean embedding at the model's last priming layer
std::vector<double> embed_video(nn::Model& model, const VideoTensor& v) {
    const auto layers = model.priming_layers();
    auto session = capture::capture(model, v, {layers.back()}, false);
    const auto& rec = session.records.at(layers.back());
    const Tensor& mu = rec.channel_mean->value;
    return std::vector<double>(mu.data(), mu.data() + mu.numel());
}

// picks one validation stimulus per class, round-robin, up to n
void pick_stimuli(const data::Dataset& ds, long n, std::vector<VideoTensor>& stimuli,
                  std::vector<long>& classes) {
    std::vector<long> used(ds.spec.num_classes, 0);
    for (long want = 0; static_cast<long>(stimuli.size()) < n; ++want) {
        bool found = false;
        for (const auto& clip : ds.val) {
            if (clip.label != want % ds.spec.num_classes) continue;
            long seen = 0;
            for (size_t i = 0; i < classes.size(); ++i)
                if (classes[i] == clip.label) ++seen;
            if (seen > used[clip.label]) continue;
            stimuli.push_back(clip.video);
            classes.push_back(clip.label);
            ++used[clip.label];
            found = true;
            break;
        }
        if (!found && want >= ds.spec.num_classes * 10)
            throw Error(ErrorCode::empty_set, "dataset: not enough validation stimuli");
    }
}

struct PlotColors {
    static constexpr unsigned char kBlue[3] = {31, 119, 180};
    static constexpr unsigned char kOrange[3] = {255, 127, 14};
    static constexpr unsigned char kGreen[3] = {44, 160, 44};
    static constexpr unsigned char kRed[3] = {214, 39, 40};
    static constexpr unsigned char kPurple[3] = {148, 103, 189};
};

int cmd_zoo_generate(const std::string& out, std::uint64_t seed, long n_train, long n_val,
                     long frames, long side) {
    data::SyntheticVideoSpec spec;
    spec.frames = frames;
    spec.height = side;
    spec.width = side;
    auto ds = data::generate_dataset(spec, seed, n_train, n_val);
    data::save_dataset(ds, out);
    std::printf("dataset %s: %ld train / %ld val clips, %ldx%ldx%ld\n", out.c_str(), n_train,
                n_val, side, side, frames);
    return 0;
}

int cmd_zoo_train(const std::string& arch, const std::string& dataset_path,
                  const std::string& out, std::uint64_t seed, long epochs, double lr,
                  long batch_size) {
    auto ds = data::load_dataset(dataset_path);
    std::unique_ptr<nn::Model> model;
    if (arch == "conv3d") {
        model = std::make_unique<nn::ToyConv3d>(nn::ConvSpec{});
    } else if (arch == "transformer") {
        model = std::make_unique<nn::ToyVideoTransformer>(nn::TransformerSpec{});
    } else {
        throw Error(ErrorCode::config_error, "arch: must be conv3d or transformer");
    }
    model->init_params(seed);
    train::TrainConfig tc;
    tc.epochs = epochs;
    tc.lr = lr;
    tc.batch_size = batch_size;
    auto report = train::fit(*model, ds, tc, seed);
    nn::save_model(*model, out);
    std::printf("model %s (%s): val accuracy %.3f after %ld epochs\n", out.c_str(),
                arch.c_str(), report.final_val_accuracy, epochs);
    return 0;
}

int run_and_store(const store::RunConfig& cfg) {
    cfg.objective.validate();
    auto rec = store::execute_run(cfg);
    auto st = store::RunStore::open_default();
    const std::string run_id = st.store_run(cfg, rec);
    if (rec.aborted_nonfinite) {
        std::printf("run %s: aborted on non-finite loss after %zu iterations\n", run_id.c_str(),
                    rec.trace.size());
        return 3;
    }
    const auto& last = rec.trace.back();
    std::printf("run %s: %s class %ld, final loss %.4f, target prob %.3f\n", run_id.c_str(),
                cfg.method.c_str(), cfg.target_class, last.total, last.target_prob);
    return 0;
}

int cmd_evaluate(const std::string& run_id, long embed_real) {
    auto st = store::RunStore::open_default();
    auto cfg = st.load_config(run_id);
    auto model = nn::load_model(cfg.model_path);
    std::unique_ptr<nn::Model> verifier;
    if (!cfg.verifier_path.empty()) verifier = nn::load_model(cfg.verifier_path);
    auto ds = data::load_dataset(cfg.dataset_path);
    VideoTensor final_video = st.load_final(run_id);

    auto report = metrics::evaluate({final_video}, {cfg.target_class}, *model, verifier.get(),
                                    ds.destandardize(final_video), 1);
    if (embed_real > 0) {
        std::vector<std::vector<double>> embs;
        std::vector<std::string> tags;
        for (long i = 0; i < std::min<long>(embed_real, static_cast<long>(ds.val.size())); ++i) {
            embs.push_back(embed_video(*model, ds.val[i].video));
            tags.push_back("real");
        }
        embs.push_back(embed_video(*model, final_video));
        tags.push_back("synth");
        auto pts = metrics::pca_project(embs, 2);
        for (size_t i = 0; i < pts.size(); ++i)
            report.embedding.push_back({pts[i][0], pts[i][1], tags[i]});
    }
    st.store_report(run_id, report.to_json());
    std::printf("run %s: top1_model %.3f top1_verifier %.3f IS %.3f±%.3f\n", run_id.c_str(),
                report.top1_model, report.top1_verifier, report.is_mean, report.is_std);
    return 0;
}

int cmd_gridsearch(const std::string& model_path, const std::string& verifier_path,
                   const std::string& dataset_path, long probe_iters, long n_stimuli,
                   std::uint64_t seed) {
    auto model = nn::load_model(model_path);
    std::unique_ptr<nn::Model> verifier;
    if (!verifier_path.empty()) verifier = nn::load_model(verifier_path);
    auto ds = data::load_dataset(dataset_path);

    std::vector<VideoTensor> stimuli;
    std::vector<long> classes;
    pick_stimuli(ds, n_stimuli, stimuli, classes);

    hypersearch::GridSpec grid;
    grid.probe_iterations = probe_iters;
    ObjectiveConfig base;
    base.enable_diversity = verifier != nullptr;
    PrimingSchedule sched;
    sched.layer_ids = model->priming_layers();
    auto result =
        hypersearch::grid_search(*model, verifier.get(), stimuli, classes, grid, base, sched, seed);

    auto st = store::RunStore::open_default();
    nlohmann::json cj;
    cj["protocol"] = "gridsearch";
    cj["model_path"] = model_path;
    cj["verifier_path"] = verifier_path;
    cj["dataset_path"] = dataset_path;
    cj["probe_iterations"] = probe_iters;
    cj["seed"] = seed;
    const std::string id = st.store_table("grid", cj.dump(2) + "\n", hypersearch::to_csv(result));
    std::printf("run %s: best lambda1 %.3g lambdaL %.3g r %.3g (mean loss %.4f)\n", id.c_str(),
                result.best.lambda1, result.best.lambdaL, result.best.r, result.best.mean_loss);
    return 0;
}

int cmd_ablate(const std::string& protocol, const std::string& model_path,
               const std::string& verifier_path, const std::string& dataset_path, long n_seeds,
               long iters, long n_pairs) {
    auto model = nn::load_model(model_path);
    std::unique_ptr<nn::Model> verifier;
    if (!verifier_path.empty()) verifier = nn::load_model(verifier_path);
    auto ds = data::load_dataset(dataset_path);

    ablate::ProtocolSpec spec;
    spec.cfg.num_iterations = iters;
    spec.cfg.snapshot_every = iters;
    spec.cfg.enable_diversity = verifier != nullptr;
    spec.sched.layer_ids = model->priming_layers();
    for (long s = 1; s <= n_seeds; ++s) spec.seeds.push_back(static_cast<std::uint64_t>(s));

    if (protocol == "multi_stimuli") {
        // four stimuli of one class
        long cls = -1;
        for (const auto& clip : ds.val) {
            long count = 0;
            for (const auto& c2 : ds.val)
                if (c2.label == clip.label) ++count;
            if (count >= 4) {
                cls = clip.label;
                break;
            }
        }
        if (cls < 0) throw Error(ErrorCode::empty_set, "dataset: no class with 4 val clips");
        for (const auto& clip : ds.val)
            if (clip.label == cls && spec.stimuli.size() < 4) {
                spec.stimuli.push_back(clip.video);
                spec.classes.push_back(cls);
            }
    } else {
        pick_stimuli(ds, n_pairs, spec.stimuli, spec.classes);
    }

    std::vector<ablate::VariantResult> rows;
    if (protocol == "objective_terms")
        rows = ablate::objective_terms(*model, verifier.get(), spec);
    else if (protocol == "distance_functions")
        rows = ablate::distance_functions(*model, verifier.get(), spec);
    else if (protocol == "resolution")
        rows = ablate::resolution(*model, verifier.get(), spec);
    else if (protocol == "priming_layers")
        rows = ablate::priming_layers(*model, verifier.get(), spec);
    else if (protocol == "multi_stimuli")
        rows = ablate::multi_stimuli(*model, verifier.get(), spec);
    else
        throw Error(ErrorCode::config_error,
                    "protocol: must be one of objective_terms, distance_functions, "
                    "resolution, priming_layers, multi_stimuli");

    const std::string csv = ablate::to_csv(rows);
    auto st = store::RunStore::open_default();
    nlohmann::json cj;
    cj["protocol"] = protocol;
    cj["model_path"] = model_path;
    cj["verifier_path"] = verifier_path;
    cj["dataset_path"] = dataset_path;
    cj["seeds"] = n_seeds;
    cj["iterations"] = iters;
    const std::string id = st.store_table("ablate-" + protocol, cj.dump(2) + "\n", csv);
    std::printf("run %s: %s\n%s", id.c_str(), protocol.c_str(), csv.c_str());
    return 0;
}

int cmd_export(const std::string& run_id, long upscale, long embed_real) {
    auto st = store::RunStore::open_default();
    const auto dir = st.run_dir(run_id);
    auto cfg = st.load_config(run_id);
    auto ds = data::load_dataset(cfg.dataset_path);
    VideoTensor final_std = st.load_final(run_id);
    VideoTensor final01 = ds.destandardize(final_std);

    std::vector<imageio::Image> frames;
    for (long t = 0; t < final01.frames(); ++t) {
        auto img = imageio::frame_to_image(final01, t, upscale);
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%03ld.png", t);
        imageio::write_png(img, (dir / "frames" / name).string());
        frames.push_back(std::move(img));
    }
    imageio::write_gif(frames, (dir / "frames" / "final.gif").string());

    const auto trace = st.load_trace(run_id);
    auto col = [&](auto getter) {
        std::vector<double> v;
        for (const auto& r : trace) v.push_back(getter(r));
        return v;
    };
    std::vector<imageio::Series> loss_series = {
        {"total", col([](const auto& r) { return r.total; }), PlotColors::kBlue[0],
         PlotColors::kBlue[1], PlotColors::kBlue[2]},
        {"ce", col([](const auto& r) { return r.ce; }), PlotColors::kOrange[0],
         PlotColors::kOrange[1], PlotColors::kOrange[2]},
        {"priming", col([](const auto& r) { return r.priming; }), PlotColors::kGreen[0],
         PlotColors::kGreen[1], PlotColors::kGreen[2]},
        {"target_prob", col([](const auto& r) { return r.target_prob; }), PlotColors::kRed[0],
         PlotColors::kRed[1], PlotColors::kRed[2]},
    };
    imageio::write_png(imageio::line_plot(loss_series), (dir / "frames" / "trace.png").string());

    const auto psnr = metrics::psnr_trace(final01);
    const auto ssim = metrics::ssim_trace(final01);
    imageio::write_png(
        imageio::line_plot({{"psnr", psnr, PlotColors::kBlue[0], PlotColors::kBlue[1],
                             PlotColors::kBlue[2]}}),
        (dir / "frames" / "psnr.png").string());
    imageio::write_png(
        imageio::line_plot({{"ssim", ssim, PlotColors::kGreen[0], PlotColors::kGreen[1],
                             PlotColors::kGreen[2]}}),
        (dir / "frames" / "ssim.png").string());

    // PCA of real validation clips vs this run's synthesized video
    auto model = nn::load_model(cfg.model_path);
    std::vector<std::vector<double>> embs;
    for (long i = 0; i < std::min<long>(embed_real, static_cast<long>(ds.val.size())); ++i)
        embs.push_back(embed_video(*model, ds.val[i].video));
    const size_t n_real = embs.size();
    embs.push_back(embed_video(*model, final_std));
    auto pts = metrics::pca_project(embs, 2);
    std::vector<imageio::ScatterPoint> sp;
    for (size_t i = 0; i < pts.size(); ++i) {
        const bool real = i < n_real;
        sp.push_back({pts[i][0], pts[i][1],
                      real ? PlotColors::kBlue[0] : PlotColors::kRed[0],
                      real ? PlotColors::kBlue[1] : PlotColors::kRed[1],
                      real ? PlotColors::kBlue[2] : PlotColors::kRed[2]});
    }
    imageio::write_png(imageio::scatter_plot(sp), (dir / "frames" / "pca.png").string());

    std::printf("run %s: exported %ld frames, final.gif, trace/psnr/ssim/pca plots\n",
                run_id.c_str(), final01.frames());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"leaps: video model-inversion toolkit"};
    app.require_subcommand(1);
    long threads = 1;
    app.add_option("--threads", threads, "intra-run parallelism bound")->check(CLI::Range(1, 256));

    // ---- zoo ----
    auto* zoo = app.add_subcommand("zoo", "toy dataset and model zoo");
    zoo->require_subcommand(1);

    auto* zgen = zoo->add_subcommand("generate", "generate the synthetic dataset");
    std::string zg_out = "dataset.leapsdst";
    std::uint64_t zg_seed = 1;
    long zg_train = 360, zg_val = 120, zg_frames = 8, zg_side = 32;
    zgen->add_option("--out", zg_out, "output path");
    zgen->add_option("--seed", zg_seed, "generation seed");
    zgen->add_option("--train-clips", zg_train, "training clips")->check(CLI::PositiveNumber);
    zgen->add_option("--val-clips", zg_val, "validation clips")->check(CLI::PositiveNumber);
    zgen->add_option("--frames", zg_frames, "frames per clip")->check(CLI::PositiveNumber);
    zgen->add_option("--side", zg_side, "frame height/width")->check(CLI::PositiveNumber);

    auto* ztrain = zoo->add_subcommand("train", "train a toy classifier");
    std::string zt_arch = "conv3d", zt_dataset, zt_out = "model.leapsmdl";
    std::uint64_t zt_seed = 1;
    long zt_epochs = 8, zt_batch = 16;
    double zt_lr = 3e-3;
    ztrain->add_option("--arch", zt_arch, "conv3d or transformer");
    ztrain->add_option("--dataset", zt_dataset, "dataset path")->required();
    ztrain->add_option("--out", zt_out, "output checkpoint path");
    ztrain->add_option("--seed", zt_seed, "init/shuffle seed");
    ztrain->add_option("--epochs", zt_epochs, "epochs")->check(CLI::PositiveNumber);
    ztrain->add_option("--lr", zt_lr, "learning rate");
    ztrain->add_option("--batch-size", zt_batch, "batch size")->check(CLI::PositiveNumber);

    // ---- synthesize ----
    auto* synth = app.add_subcommand("synthesize", "LEAPS synthesis run");
    std::string sy_config;
    store::RunConfig sy;
    std::vector<std::string> sy_stimuli;
    std::vector<std::string> sy_disable;
    std::string sy_distance = "jvs";
    synth->add_option("--config", sy_config, "run config JSON (flags override)");
    auto* o_model = synth->add_option("--model", sy.model_path, "inverted model checkpoint");
    auto* o_verifier = synth->add_option("--verifier", sy.verifier_path, "verifier checkpoint");
    auto* o_dataset = synth->add_option("--dataset", sy.dataset_path, "dataset path");
    auto* o_class = synth->add_option("--class", sy.target_class, "target class index");
    auto* o_stim = synth->add_option("--stimulus", sy_stimuli, "stimulus refs (val:<index>)");
    auto* o_seed = synth->add_option("--seed", sy.seed, "run seed");
    auto* o_iters = synth->add_option("--iters", sy.objective.num_iterations, "iterations");
    auto* o_lr = synth->add_option("--lr", sy.objective.base_lr, "base learning rate");
    auto* o_snap = synth->add_option("--snapshot-every", sy.objective.snapshot_every,
                                     "snapshot interval");
    auto* o_dist = synth->add_option("--distance", sy_distance, "jvs|l2|l1|cosine");
    auto* o_delta = synth->add_option("--delta", sy.objective.delta, "coherence margin");
    auto* o_r = synth->add_option("--r", sy.objective.reg_scale, "regularizer scale");
    auto* o_l1v = synth->add_option("--lambda1", sy.sched.lambda_first, "first layer weight");
    auto* o_lLv = synth->add_option("--lambdaL", sy.sched.lambda_last, "last layer weight");
    auto* o_frac = synth->add_option("--fraction", sy.sched.subset_fraction,
                                     "priming layer fraction");
    auto* o_disable = synth->add_option("--disable", sy_disable,
                                        "terms to disable: ce,priming,coherence,diversity");
    auto* o_t = synth->add_option("--frames", sy.input_t, "input frames (0 = stimulus)");
    auto* o_h = synth->add_option("--height", sy.input_h, "input height (0 = stimulus)");
    auto* o_w = synth->add_option("--width", sy.input_w, "input width (0 = stimulus)");

    // ---- baseline ----
    auto* base = app.add_subcommand("baseline", "3D DeepDream / AM baseline run");
    store::RunConfig bl;
    bl.method = "deepdream3d";
    base->add_option("--method", bl.method, "deepdream3d or am3d");
    base->add_option("--model", bl.model_path, "inverted model checkpoint")->required();
    base->add_option("--dataset", bl.dataset_path, "dataset path")->required();
    base->add_option("--class", bl.target_class, "target class index")->required();
    base->add_option("--seed", bl.seed, "run seed")->required();
    base->add_option("--iters", bl.objective.num_iterations, "iterations");
    base->add_option("--lr", bl.objective.base_lr, "base learning rate");
    base->add_option("--alpha-tv", bl.objective.alpha_tv, "total-variation weight");
    base->add_option("--alpha-l2", bl.objective.alpha_l2, "l2 prior weight");
    base->add_option("--frames", bl.input_t, "input frames (0 = dataset)");
    base->add_option("--height", bl.input_h, "input height (0 = dataset)");
    base->add_option("--width", bl.input_w, "input width (0 = dataset)");

    // ---- evaluate ----
    auto* eval = app.add_subcommand("evaluate", "attach metrics to a stored run");
    std::string ev_run;
    long ev_embed = 0;
    eval->add_option("run_id", ev_run, "run id")->required();
    eval->add_option("--embedding", ev_embed, "PCA over N real clips plus the synthesis");

    // ---- gridsearch ----
    auto* gs = app.add_subcommand("gridsearch", "grid search over (lambda1, lambdaL, r)");
    std::string gs_model, gs_verifier, gs_dataset;
    long gs_iters = 1000, gs_stimuli = 3;
    std::uint64_t gs_seed = 1;
    gs->add_option("--model", gs_model, "inverted model checkpoint")->required();
    gs->add_option("--verifier", gs_verifier, "verifier checkpoint");
    gs->add_option("--dataset", gs_dataset, "dataset path")->required();
    gs->add_option("--probe-iters", gs_iters, "probe iterations")->check(CLI::PositiveNumber);
    gs->add_option("--stimuli", gs_stimuli, "probe stimulus count")->check(CLI::PositiveNumber);
    gs->add_option("--seed", gs_seed, "search seed");

    // ---- ablate ----
    auto* ab = app.add_subcommand("ablate", "run an ablation protocol");
    std::string ab_protocol, ab_model, ab_verifier, ab_dataset;
    long ab_seeds = 5, ab_iters = 500, ab_pairs = 3;
    ab->add_option("protocol", ab_protocol,
                   "objective_terms|distance_functions|resolution|priming_layers|multi_stimuli")
        ->required();
    ab->add_option("--model", ab_model, "inverted model checkpoint")->required();
    ab->add_option("--verifier", ab_verifier, "verifier checkpoint");
    ab->add_option("--dataset", ab_dataset, "dataset path")->required();
    ab->add_option("--seeds", ab_seeds, "number of seeds")->check(CLI::PositiveNumber);
    ab->add_option("--iters", ab_iters, "iterations per run")->check(CLI::PositiveNumber);
    ab->add_option("--pairs", ab_pairs, "stimulus/class pairs")->check(CLI::PositiveNumber);

    // ---- export ----
    auto* ex = app.add_subcommand("export", "export frames, GIF and plots for a run");
    std::string ex_run;
    long ex_upscale = 4, ex_embed = 30;
    ex->add_option("run_id", ex_run, "run id")->required();
    ex->add_option("--upscale", ex_upscale, "nearest-neighbor upscale")->check(CLI::PositiveNumber);
    ex->add_option("--embedding", ex_embed, "real clips in the PCA plot");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (zgen->parsed())
            return cmd_zoo_generate(zg_out, zg_seed, zg_train, zg_val, zg_frames, zg_side);
        if (ztrain->parsed())
            return cmd_zoo_train(zt_arch, zt_dataset, zt_out, zt_seed, zt_epochs, zt_lr, zt_batch);
        if (synth->parsed()) {
            store::RunConfig cfg;
            if (!sy_config.empty())
                cfg = store::RunConfig::from_json(store::read_text_file(sy_config));
            cfg.method = "leaps";
            if (o_model->count()) cfg.model_path = sy.model_path;
            if (o_verifier->count()) cfg.verifier_path = sy.verifier_path;
            if (o_dataset->count()) cfg.dataset_path = sy.dataset_path;
            if (o_class->count()) cfg.target_class = sy.target_class;
            if (o_stim->count()) {
                cfg.stimulus_indices.clear();
                for (const auto& ref : sy_stimuli)
                    cfg.stimulus_indices.push_back(parse_stimulus_ref(ref));
            }
            if (o_seed->count()) cfg.seed = sy.seed;
            if (o_iters->count()) cfg.objective.num_iterations = sy.objective.num_iterations;
            if (o_lr->count()) cfg.objective.base_lr = sy.objective.base_lr;
            if (o_snap->count()) cfg.objective.snapshot_every = sy.objective.snapshot_every;
            if (o_dist->count()) cfg.objective.distance = distance_from_string(sy_distance);
            if (o_delta->count()) cfg.objective.delta = sy.objective.delta;
            if (o_r->count()) cfg.objective.reg_scale = sy.objective.reg_scale;
            if (o_l1v->count()) cfg.sched.lambda_first = sy.sched.lambda_first;
            if (o_lLv->count()) cfg.sched.lambda_last = sy.sched.lambda_last;
            if (o_frac->count()) cfg.sched.subset_fraction = sy.sched.subset_fraction;
            if (o_t->count()) cfg.input_t = sy.input_t;
            if (o_h->count()) cfg.input_h = sy.input_h;
            if (o_w->count()) cfg.input_w = sy.input_w;
            for (const auto& term : sy_disable) {
                if (term == "ce")
                    cfg.objective.enable_ce = false;
                else if (term == "priming")
                    cfg.objective.enable_priming = false;
                else if (term == "coherence")
                    cfg.objective.enable_coherence = false;
                else if (term == "diversity")
                    cfg.objective.enable_diversity = false;
                else
                    throw Error(ErrorCode::config_error, "disable: unknown term \"" + term + "\"");
            }
            if (sy_config.empty() && !o_seed->count())
                throw Error(ErrorCode::config_error, "seed: --seed is required");
            if (cfg.model_path.empty())
                throw Error(ErrorCode::config_error, "model: no checkpoint given");
            if (cfg.dataset_path.empty())
                throw Error(ErrorCode::config_error, "dataset: no dataset given");
            if (cfg.verifier_path.empty()) cfg.objective.enable_diversity = false;
            if (cfg.sched.layer_ids.empty())
                cfg.sched.layer_ids = nn::load_model(cfg.model_path)->priming_layers();
            return run_and_store(cfg);
        }
        if (base->parsed()) {
            bl.sched.layer_ids = {"unused"};
            bl.objective.enable_priming = false;
            bl.objective.enable_coherence = false;
            bl.objective.enable_diversity = false;
            return run_and_store(bl);
        }
        if (eval->parsed()) return cmd_evaluate(ev_run, ev_embed);
        if (gs->parsed())
            return cmd_gridsearch(gs_model, gs_verifier, gs_dataset, gs_iters, gs_stimuli,
                                  gs_seed);
        if (ab->parsed())
            return cmd_ablate(ab_protocol, ab_model, ab_verifier, ab_dataset, ab_seeds, ab_iters,
                              ab_pairs);
        if (ex->parsed()) return cmd_export(ex_run, ex_upscale, ex_embed);
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
    return 0;
}
