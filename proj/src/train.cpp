#include "leaps/train.hpp"

#include <cmath>
#include <numeric>

#include "leaps/rng.hpp"

namespace leaps::train {

namespace ag = leaps::ag;

std::vector<long> epoch_order(long n, std::uint64_t seed, long epoch) {
    std::vector<long> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng = Rng::for_stream(seed, 1000 + static_cast<std::uint64_t>(epoch));
    for (long i = n - 1; i > 0; --i)
        std::swap(order[i], order[rng.uniform_int(0, i)]);
    return order;
}

Tensor make_batch(const std::vector<data::Clip>& clips, const std::vector<long>& indices,
                  std::vector<long>& labels_out) {
    if (indices.empty()) throw Error(ErrorCode::empty_set, "make_batch: empty index set");
    const auto& first = clips[indices[0]].video;
    const long C = first.channels(), T = first.frames(), H = first.height(), W = first.width();
    const long per = C * T * H * W;
    Tensor batch({static_cast<long>(indices.size()), C, T, H, W});
    labels_out.clear();
    for (size_t k = 0; k < indices.size(); ++k) {
        const auto& clip = clips[indices[k]];
        if (clip.video.data.numel() != per)
            throw Error(ErrorCode::shape_error, "make_batch: inconsistent clip shapes");
        std::copy(clip.video.data.data(), clip.video.data.data() + per,
                  batch.data() + static_cast<long>(k) * per);
        labels_out.push_back(clip.label);
    }
    return batch;
}

long argmax_row(const double* row, long k) {
    long best = 0;
    for (long i = 1; i < k; ++i)
        if (row[i] > row[best]) best = i;
    return best;
}

double evaluate_accuracy(nn::Model& model, const std::vector<data::Clip>& clips,
                         long batch_size) {
    if (clips.empty()) throw Error(ErrorCode::empty_set, "evaluate_accuracy: no clips");
    const long K = model.num_classes();
    long correct = 0;
    for (size_t start = 0; start < clips.size(); start += batch_size) {
        std::vector<long> idx;
        for (size_t i = start; i < std::min(clips.size(), start + batch_size); ++i)
            idx.push_back(static_cast<long>(i));
        std::vector<long> labels;
        Tensor batch = make_batch(clips, idx, labels);
        nn::ForwardOptions opt;
        auto res = model.forward(ag::constant(std::move(batch)), opt);
        const Tensor& logits = res.logits->value;
        for (size_t k = 0; k < idx.size(); ++k)
            if (argmax_row(logits.data() + static_cast<long>(k) * K, K) == labels[k])
                ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(clips.size());
}

TrainReport fit(nn::Model& model, const data::Dataset& ds, const TrainConfig& cfg,
                std::uint64_t seed) {
    if (cfg.epochs < 1 || cfg.batch_size < 1 || cfg.lr <= 0.0)
        throw Error(ErrorCode::config_error, "fit: bad training config");
    if (ds.train.empty() || ds.val.empty())
        throw Error(ErrorCode::empty_set, "fit: dataset has an empty split");

    const long K = model.num_classes();
    auto params = model.parameters();
    std::vector<Tensor> m_state, v_state;
    for (auto& [name, p] : params) {
        m_state.emplace_back(p->shape());
        v_state.emplace_back(p->shape());
    }

    TrainReport report;
    long step_count = 0;
    const long n = static_cast<long>(ds.train.size());

    for (long epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto order = epoch_order(n, seed, epoch);
        double loss_sum = 0.0;
        long loss_batches = 0, correct = 0;

        for (long start = 0; start < n; start += cfg.batch_size) {
            std::vector<long> idx(order.begin() + start,
                                  order.begin() + std::min(n, start + cfg.batch_size));
            std::vector<long> labels;
            Tensor batch = make_batch(ds.train, idx, labels);

            nn::ForwardOptions opt;
            opt.train = true;
            opt.param_grad = true;
            auto res = model.forward(ag::constant(std::move(batch)), opt);
            ag::Var loss = ag::cross_entropy_logits(res.logits, labels);

            const double loss_val = loss->value[0];
            if (!std::isfinite(loss_val))
                throw Error(ErrorCode::divergence_error, "fit: non-finite training loss");
            loss_sum += loss_val;
            ++loss_batches;
            const Tensor& logits = res.logits->value;
            for (size_t k = 0; k < idx.size(); ++k)
                if (argmax_row(logits.data() + static_cast<long>(k) * K, K) == labels[k])
                    ++correct;

            ag::backward(loss);
            ++step_count;
            const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step_count));
            const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step_count));
            for (size_t pi = 0; pi < params.size(); ++pi) {
                Tensor* p = params[pi].second;
                const Tensor& g = res.param_leaves[pi]->grad;
                for (long i = 0; i < p->numel(); ++i) {
                    double& m = m_state[pi][i];
                    double& v = v_state[pi][i];
                    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g[i];
                    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g[i] * g[i];
                    (*p)[i] -= cfg.lr * (m / bc1) / (std::sqrt(v / bc2) + cfg.epsilon);
                }
            }
        }

        EpochStats st;
        st.epoch = epoch;
        st.train_loss = loss_sum / loss_batches;
        st.train_accuracy = static_cast<double>(correct) / static_cast<double>(n);
        st.val_accuracy = evaluate_accuracy(model, ds.val);
        report.epochs.push_back(st);
    }

    model.snap_to_f32();
    report.final_val_accuracy = evaluate_accuracy(model, ds.val);
    const double chance = 1.0 / static_cast<double>(model.num_classes());
    if (report.final_val_accuracy < chance + cfg.min_val_accuracy_margin)
        throw Error(ErrorCode::divergence_error, "fit: model failed to clear chance accuracy");
    return report;
}

}  // namespace leaps::train
