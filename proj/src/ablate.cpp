#include "leaps/ablate.hpp"

#include <cstdio>

#include "leaps/metrics.hpp"
#include "leaps/rng.hpp"
#include "leaps/synthesis.hpp"

namespace leaps::ablate {

namespace {

void check_spec(const ProtocolSpec& spec) {
    if (spec.stimuli.empty()) throw Error(ErrorCode::empty_stimuli, "ablate: no stimuli");
    if (spec.stimuli.size() != spec.classes.size())
        throw Error(ErrorCode::length_mismatch, "ablate: stimuli/classes size mismatch");
    if (spec.seeds.empty()) throw Error(ErrorCode::empty_set, "ablate: no seeds");
}

}  // namespace

VariantResult run_variant(const std::string& name, nn::Model& model, nn::Model* verifier,
                          const ProtocolSpec& spec) {
    check_spec(spec);
    std::vector<VideoTensor> finals;
    std::vector<long> labels;
    for (std::uint64_t seed : spec.seeds)
        for (size_t p = 0; p < spec.stimuli.size(); ++p) {
            const auto& s = spec.stimuli[p];
            const std::uint64_t run_seed = Rng(seed).derive(static_cast<std::uint64_t>(p) + 1);
            auto rec = synthesis::synthesize(model, verifier, {s}, spec.classes[p], spec.cfg,
                                             spec.sched, run_seed,
                                             {s.channels(), s.frames(), s.height(), s.width()},
                                             s.range);
            finals.push_back(rec.final_video);
            labels.push_back(spec.classes[p]);
        }

    VariantResult res;
    res.name = name;
    res.num_runs = static_cast<long>(finals.size());
    res.top1_model = metrics::top1(finals, labels, model);
    if (verifier) {
        res.top1_verifier = metrics::top1(finals, labels, *verifier);
        const long splits = std::min<long>(5, static_cast<long>(finals.size()));
        std::tie(res.is_mean, res.is_std) = metrics::inception_score(finals, *verifier, splits);
    }
    return res;
}

std::vector<VariantResult> objective_terms(nn::Model& model, nn::Model* verifier,
                                           const ProtocolSpec& spec) {
    struct Row {
        const char* name;
        bool coh, div;
    };
    const Row rows[] = {{"prim", false, false},
                        {"prim+coh", true, false},
                        {"prim+feat", false, true},
                        {"full", true, true}};
    std::vector<VariantResult> out;
    for (const auto& row : rows) {
        ProtocolSpec v = spec;
        v.cfg.enable_priming = true;
        v.cfg.enable_coherence = row.coh;
        v.cfg.enable_diversity = row.div && verifier != nullptr;
        out.push_back(run_variant(row.name, model, verifier, v));
    }
    return out;
}

std::vector<VariantResult> distance_functions(nn::Model& model, nn::Model* verifier,
                                              const ProtocolSpec& spec) {
    std::vector<VariantResult> out;
    for (DistanceKind kind :
         {DistanceKind::jvs, DistanceKind::l2, DistanceKind::l1, DistanceKind::cosine}) {
        ProtocolSpec v = spec;
        v.cfg.distance = kind;
        out.push_back(run_variant(to_string(kind), model, verifier, v));
    }
    return out;
}

std::vector<VariantResult> resolution(nn::Model& model, nn::Model* verifier,
                                      const ProtocolSpec& spec) {
    check_spec(spec);
    std::vector<VariantResult> out;
    for (long side : {24L, 32L})
        for (long t : {8L, 16L}) {
            ProtocolSpec v = spec;
            for (auto& s : v.stimuli) s = resample_video(s, t, side, side);
            char name[32];
            std::snprintf(name, sizeof(name), "%ldx%ldx%ld", side, side, t);
            out.push_back(run_variant(name, model, verifier, v));
        }
    return out;
}

std::vector<VariantResult> priming_layers(nn::Model& model, nn::Model* verifier,
                                          const ProtocolSpec& spec) {
    std::vector<VariantResult> out;
    for (double frac : {0.2, 0.6, 1.0}) {
        ProtocolSpec v = spec;
        v.sched.subset_fraction = frac;
        char name[32];
        std::snprintf(name, sizeof(name), "%.0f%%", frac * 100.0);
        out.push_back(run_variant(name, model, verifier, v));
    }
    return out;
}

std::vector<VariantResult> multi_stimuli(nn::Model& model, nn::Model* verifier,
                                         const ProtocolSpec& spec) {
    check_spec(spec);
    if (spec.stimuli.size() < 4)
        throw Error(ErrorCode::empty_stimuli, "multi_stimuli: need >= 4 stimuli");
    std::vector<VariantResult> out;
    for (long k : {1L, 2L, 4L}) {
        VariantResult res;
        char name[32];
        std::snprintf(name, sizeof(name), "%ld_stimuli", k);
        res.name = name;
        std::vector<VideoTensor> finals;
        std::vector<long> labels;
        for (std::uint64_t seed : spec.seeds) {
            std::vector<VideoTensor> stim(spec.stimuli.begin(), spec.stimuli.begin() + k);
            const auto& s0 = stim[0];
            auto rec = synthesis::synthesize(
                model, verifier, stim, spec.classes[0], spec.cfg, spec.sched,
                Rng(seed).derive(1), {s0.channels(), s0.frames(), s0.height(), s0.width()},
                s0.range);
            finals.push_back(rec.final_video);
            labels.push_back(spec.classes[0]);
        }
        res.num_runs = static_cast<long>(finals.size());
        res.top1_model = metrics::top1(finals, labels, model);
        if (verifier) {
            res.top1_verifier = metrics::top1(finals, labels, *verifier);
            const long splits = std::min<long>(5, static_cast<long>(finals.size()));
            std::tie(res.is_mean, res.is_std) =
                metrics::inception_score(finals, *verifier, splits);
        }
        out.push_back(res);
    }
    return out;
}

std::string to_csv(const std::vector<VariantResult>& rows) {
    std::string out = "variant,top1_model,top1_verifier,is_mean,is_std,num_runs\n";
    char buf[160];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%s,%.6g,%.6g,%.6g,%.6g,%ld\n", r.name.c_str(),
                      r.top1_model, r.top1_verifier, r.is_mean, r.is_std, r.num_runs);
        out += buf;
    }
    return out;
}

}  // namespace leaps::ablate
