#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "leaps/config.hpp"
#include "leaps/nn.hpp"
#include "leaps/video.hpp"

namespace leaps::ablate {

// One run per (stimulus, class) pair per seed; tables aggregate the finals.
struct ProtocolSpec {
    ObjectiveConfig cfg;
    PrimingSchedule sched;
    std::vector<VideoTensor> stimuli;
    std::vector<long> classes;  // same length as stimuli
    std::vector<std::uint64_t> seeds;
};

struct VariantResult {
    std::string name;
    double top1_model = 0.0;
    double top1_verifier = 0.0;
    double is_mean = 1.0;
    double is_std = 0.0;
    long num_runs = 0;
};

// aggregate metrics of one configuration over all (pair, seed) runs
VariantResult run_variant(const std::string& name, nn::Model& model, nn::Model* verifier,
                          const ProtocolSpec& spec);

// Table 3 structure: prim, prim+coh, prim+feat, full
std::vector<VariantResult> objective_terms(nn::Model& model, nn::Model* verifier,
                                           const ProtocolSpec& spec);
// Table 4 structure: jvs, l2, l1, cosine
std::vector<VariantResult> distance_functions(nn::Model& model, nn::Model* verifier,
                                              const ProtocolSpec& spec);
// Table 5 structure: {24, 32} x {8, 16}; stimuli are resampled per variant
std::vector<VariantResult> resolution(nn::Model& model, nn::Model* verifier,
                                      const ProtocolSpec& spec);
// Supp. Table 2 structure: priming-layer fractions {0.2, 0.6, 1.0}
std::vector<VariantResult> priming_layers(nn::Model& model, nn::Model* verifier,
                                          const ProtocolSpec& spec);
// Supp. multi-stimuli: 1, 2, 4 stimuli per run (spec.stimuli must hold >= 4
// clips of spec.classes[0]'s class)
std::vector<VariantResult> multi_stimuli(nn::Model& model, nn::Model* verifier,
                                         const ProtocolSpec& spec);

// header: variant,top1_model,top1_verifier,is_mean,is_std,num_runs
std::string to_csv(const std::vector<VariantResult>& rows);

}  // namespace leaps::ablate
