#pragma once

#include <cstdint>
#include <vector>

#include "leaps/dataset.hpp"
#include "leaps/nn.hpp"

namespace leaps::train {

struct TrainConfig {
    long epochs = 8;
    long batch_size = 16;
    double lr = 3e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    // abort training if val accuracy never clears chance by this margin
    double min_val_accuracy_margin = 0.05;
};

struct EpochStats {
    long epoch = 0;
    double train_loss = 0.0;
    double train_accuracy = 0.0;
    double val_accuracy = 0.0;
};

struct TrainReport {
    std::vector<EpochStats> epochs;
    double final_val_accuracy = 0.0;
};

// deterministic Fisher-Yates order for one epoch; exposed so tests can
// replay batch composition
std::vector<long> epoch_order(long n, std::uint64_t seed, long epoch);

// stack clips[indices] into a {N,C,T,H,W} batch
Tensor make_batch(const std::vector<data::Clip>& clips, const std::vector<long>& indices,
                  std::vector<long>& labels_out);

long argmax_row(const double* row, long k);

double evaluate_accuracy(nn::Model& model, const std::vector<data::Clip>& clips,
                         long batch_size = 32);

// Adam on all parameters, mean CE, BN in train mode. Throws divergence_error
// if the final val accuracy fails to clear chance. Snaps params to f32.
TrainReport fit(nn::Model& model, const data::Dataset& ds, const TrainConfig& cfg,
                std::uint64_t seed);

}  // namespace leaps::train
