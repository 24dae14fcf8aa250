#include "leaps/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"

#include "leaps/autograd.hpp"
#include "leaps/train.hpp"

namespace leaps::metrics {

namespace {

// softmax rows for a batch of videos, batched forward in eval mode
std::vector<std::vector<double>> predict_probs(const std::vector<VideoTensor>& videos,
                                               nn::Model& model, long batch_size = 16) {
    const long K = model.num_classes();
    std::vector<std::vector<double>> probs;
    probs.reserve(videos.size());
    for (size_t start = 0; start < videos.size(); start += batch_size) {
        const long n = static_cast<long>(std::min(videos.size() - start,
                                                  static_cast<size_t>(batch_size)));
        const auto& v0 = videos[start];
        Tensor batch({n, v0.channels(), v0.frames(), v0.height(), v0.width()});
        const long per = v0.data.numel();
        for (long k = 0; k < n; ++k) {
            const auto& v = videos[start + k];
            if (v.data.numel() != per)
                throw Error(ErrorCode::shape_error, "predict_probs: inconsistent video shapes");
            std::copy(v.data.data(), v.data.data() + per, batch.data() + k * per);
        }
        nn::ForwardOptions opt;
        auto res = model.forward(ag::constant(std::move(batch)), opt);
        for (long k = 0; k < n; ++k)
            probs.push_back(ag::softmax_row(res.logits->value.data() + k * K, K));
    }
    return probs;
}

}  // namespace

double top1(const std::vector<VideoTensor>& videos, const std::vector<long>& labels,
            nn::Model& model) {
    if (videos.empty()) throw Error(ErrorCode::empty_set, "top1: empty video set");
    if (videos.size() != labels.size())
        throw Error(ErrorCode::length_mismatch, "top1: videos/labels size mismatch");
    const long K = model.num_classes();
    auto probs = predict_probs(videos, model);
    long correct = 0;
    for (size_t i = 0; i < probs.size(); ++i)
        if (train::argmax_row(probs[i].data(), K) == labels[i]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(videos.size());
}

std::pair<double, double> inception_score(const std::vector<VideoTensor>& videos,
                                          nn::Model& classifier, long n_splits) {
    if (videos.empty()) throw Error(ErrorCode::empty_set, "inception_score: empty video set");
    if (n_splits < 1 || static_cast<size_t>(n_splits) > videos.size())
        throw Error(ErrorCode::split_error, "inception_score: need >= n_splits videos");
    const long K = classifier.num_classes();
    auto probs = predict_probs(videos, classifier);
    const long n = static_cast<long>(probs.size());

    std::vector<double> split_scores;
    for (long s = 0; s < n_splits; ++s) {
        const long lo = s * n / n_splits;
        const long hi = (s + 1) * n / n_splits;
        std::vector<double> marginal(K, 0.0);
        for (long i = lo; i < hi; ++i)
            for (long k = 0; k < K; ++k) marginal[k] += probs[i][k];
        for (long k = 0; k < K; ++k) marginal[k] /= static_cast<double>(hi - lo);
        double kl_sum = 0.0;
        for (long i = lo; i < hi; ++i)
            for (long k = 0; k < K; ++k)
                if (probs[i][k] > 1e-300)
                    kl_sum += probs[i][k] *
                              (std::log(probs[i][k]) - std::log(std::max(marginal[k], 1e-300)));
        split_scores.push_back(std::exp(kl_sum / static_cast<double>(hi - lo)));
    }

    double mean = 0.0;
    for (double s : split_scores) mean += s;
    mean /= split_scores.size();
    double var = 0.0;
    for (double s : split_scores) var += (s - mean) * (s - mean);
    var /= split_scores.size();
    return {mean, std::sqrt(var)};
}

double psnr_pair(const Tensor& f1, const Tensor& f2) {
    if (!f1.same_shape(f2)) throw Error(ErrorCode::shape_error, "psnr_pair: shape mismatch");
    double mse = 0.0;
    for (long i = 0; i < f1.numel(); ++i) {
        const double d = f1[i] - f2[i];
        mse += d * d;
    }
    mse /= static_cast<double>(f1.numel());
    if (mse < 1e-10) return 100.0;
    return 10.0 * std::log10(1.0 / mse);
}

double ssim_pair(const Tensor& f1, const Tensor& f2) {
    if (!f1.same_shape(f2)) throw Error(ErrorCode::shape_error, "ssim_pair: shape mismatch");
    if (f1.rank() != 3) throw Error(ErrorCode::shape_error, "ssim_pair: frames must be {C,H,W}");
    const long C = f1.dim(0), H = f1.dim(1), W = f1.dim(2);
    constexpr long win = 7;
    constexpr double C1 = 0.01 * 0.01, C2 = 0.03 * 0.03;
    if (H < win || W < win)
        throw Error(ErrorCode::shape_error, "ssim_pair: frame smaller than 7x7 window");

    double total = 0.0;
    long count = 0;
    const double n = static_cast<double>(win * win);
    for (long c = 0; c < C; ++c) {
        const double* a = f1.data() + c * H * W;
        const double* b = f2.data() + c * H * W;
        for (long y = 0; y + win <= H; ++y)
            for (long x = 0; x + win <= W; ++x) {
                double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
                for (long dy = 0; dy < win; ++dy)
                    for (long dx = 0; dx < win; ++dx) {
                        const double va = a[(y + dy) * W + x + dx];
                        const double vb = b[(y + dy) * W + x + dx];
                        sa += va;
                        sb += vb;
                        saa += va * va;
                        sbb += vb * vb;
                        sab += va * vb;
                    }
                const double mu_a = sa / n, mu_b = sb / n;
                const double var_a = saa / n - mu_a * mu_a;
                const double var_b = sbb / n - mu_b * mu_b;
                const double cov = sab / n - mu_a * mu_b;
                total += ((2.0 * mu_a * mu_b + C1) * (2.0 * cov + C2)) /
                         ((mu_a * mu_a + mu_b * mu_b + C1) * (var_a + var_b + C2));
                ++count;
            }
    }
    return total / static_cast<double>(count);
}

namespace {

Tensor frame_of(const VideoTensor& v, long t) {
    Tensor f({v.channels(), v.height(), v.width()});
    long i = 0;
    for (long c = 0; c < v.channels(); ++c)
        for (long h = 0; h < v.height(); ++h)
            for (long w = 0; w < v.width(); ++w) f[i++] = v.at(c, t, h, w);
    return f;
}

}  // namespace

std::vector<double> psnr_trace(const VideoTensor& video01) {
    if (video01.frames() < 2)
        throw Error(ErrorCode::too_few_frames, "psnr_trace: need >= 2 frames");
    std::vector<double> out;
    for (long t = 0; t + 1 < video01.frames(); ++t)
        out.push_back(psnr_pair(frame_of(video01, t), frame_of(video01, t + 1)));
    return out;
}

std::vector<double> ssim_trace(const VideoTensor& video01) {
    if (video01.frames() < 2)
        throw Error(ErrorCode::too_few_frames, "ssim_trace: need >= 2 frames");
    std::vector<double> out;
    for (long t = 0; t + 1 < video01.frames(); ++t)
        out.push_back(ssim_pair(frame_of(video01, t), frame_of(video01, t + 1)));
    return out;
}

std::vector<std::vector<double>> pca_project(const std::vector<std::vector<double>>& embeddings,
                                             int k, std::vector<double>* eigenvalues,
                                             std::vector<std::vector<double>>* axes) {
    const long N = static_cast<long>(embeddings.size());
    if (N < 3) throw Error(ErrorCode::empty_set, "pca_project: need >= 3 embeddings");
    const long D = static_cast<long>(embeddings[0].size());
    for (const auto& e : embeddings)
        if (static_cast<long>(e.size()) != D)
            throw Error(ErrorCode::length_mismatch, "pca_project: ragged embeddings");
    if (k < 1 || k > D) throw Error(ErrorCode::config_error, "pca_project: bad k");

    std::vector<double> mean(D, 0.0);
    for (const auto& e : embeddings)
        for (long d = 0; d < D; ++d) mean[d] += e[d];
    for (long d = 0; d < D; ++d) mean[d] /= static_cast<double>(N);

    std::vector<std::vector<double>> X(N, std::vector<double>(D));
    double spread = 0.0;
    for (long i = 0; i < N; ++i)
        for (long d = 0; d < D; ++d) {
            X[i][d] = embeddings[i][d] - mean[d];
            spread = std::max(spread, std::fabs(X[i][d]));
        }
    if (spread < 1e-12)
        throw Error(ErrorCode::degenerate_rank, "pca_project: all embeddings identical");

    // scatter matrix S = X^T X, eigendecomposed by cyclic Jacobi
    std::vector<std::vector<double>> S(D, std::vector<double>(D, 0.0));
    for (long i = 0; i < N; ++i)
        for (long p = 0; p < D; ++p)
            for (long q = p; q < D; ++q) S[p][q] += X[i][p] * X[i][q];
    for (long p = 0; p < D; ++p)
        for (long q = 0; q < p; ++q) S[p][q] = S[q][p];

    std::vector<std::vector<double>> V(D, std::vector<double>(D, 0.0));
    for (long d = 0; d < D; ++d) V[d][d] = 1.0;
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (long p = 0; p < D; ++p)
            for (long q = p + 1; q < D; ++q) off += S[p][q] * S[p][q];
        if (off < 1e-24) break;
        for (long p = 0; p < D; ++p)
            for (long q = p + 1; q < D; ++q) {
                if (std::fabs(S[p][q]) < 1e-300) continue;
                const double theta = 0.5 * std::atan2(2.0 * S[p][q], S[q][q] - S[p][p]);
                const double c = std::cos(theta), s = std::sin(theta);
                for (long d = 0; d < D; ++d) {
                    const double sp = S[d][p], sq = S[d][q];
                    S[d][p] = c * sp - s * sq;
                    S[d][q] = s * sp + c * sq;
                }
                for (long d = 0; d < D; ++d) {
                    const double sp = S[p][d], sq = S[q][d];
                    S[p][d] = c * sp - s * sq;
                    S[q][d] = s * sp + c * sq;
                }
                for (long d = 0; d < D; ++d) {
                    const double vp = V[d][p], vq = V[d][q];
                    V[d][p] = c * vp - s * vq;
                    V[d][q] = s * vp + c * vq;
                }
            }
    }

    std::vector<long> order(D);
    for (long d = 0; d < D; ++d) order[d] = d;
    std::sort(order.begin(), order.end(), [&](long a, long b) { return S[a][a] > S[b][b]; });

    if (eigenvalues) {
        eigenvalues->clear();
        for (long d = 0; d < D; ++d) eigenvalues->push_back(std::max(S[order[d]][order[d]], 0.0));
    }

    std::vector<std::vector<double>> comps(k, std::vector<double>(D));
    for (int j = 0; j < k; ++j) {
        const long col = order[j];
        long big = 0;
        for (long d = 1; d < D; ++d)
            if (std::fabs(V[d][col]) > std::fabs(V[big][col])) big = d;
        const double sign = V[big][col] >= 0.0 ? 1.0 : -1.0;
        for (long d = 0; d < D; ++d) comps[j][d] = sign * V[d][col];
    }
    if (axes) *axes = comps;

    std::vector<std::vector<double>> points(N, std::vector<double>(k, 0.0));
    for (long i = 0; i < N; ++i)
        for (int j = 0; j < k; ++j) {
            double dot = 0.0;
            for (long d = 0; d < D; ++d) dot += X[i][d] * comps[j][d];
            points[i][j] = dot;
        }
    return points;
}

EvalReport evaluate(const std::vector<VideoTensor>& videos, const std::vector<long>& labels,
                    nn::Model& model, nn::Model* verifier, const VideoTensor& display01,
                    long n_splits) {
    EvalReport rep;
    rep.top1_model = top1(videos, labels, model);
    if (verifier) {
        rep.top1_verifier = top1(videos, labels, *verifier);
        const long splits = std::min<long>(n_splits, static_cast<long>(videos.size()));
        std::tie(rep.is_mean, rep.is_std) = inception_score(videos, *verifier, splits);
    }
    if (display01.frames() >= 2) {
        rep.psnr_trace = psnr_trace(display01);
        rep.ssim_trace = ssim_trace(display01);
    }
    return rep;
}

std::string EvalReport::to_json() const {
    nlohmann::json j;
    j["top1_model"] = top1_model;
    j["top1_verifier"] = top1_verifier;
    j["is_mean"] = is_mean;
    j["is_std"] = is_std;
    j["psnr"] = psnr_trace;
    j["ssim"] = ssim_trace;
    j["embedding"] = nlohmann::json::array();
    for (const auto& p : embedding)
        j["embedding"].push_back({{"x", p.x}, {"y", p.y}, {"tag", p.tag}});
    return j.dump(2) + "\n";
}

EvalReport EvalReport::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    EvalReport rep;
    rep.top1_model = j.at("top1_model").get<double>();
    rep.top1_verifier = j.at("top1_verifier").get<double>();
    rep.is_mean = j.at("is_mean").get<double>();
    rep.is_std = j.at("is_std").get<double>();
    rep.psnr_trace = j.at("psnr").get<std::vector<double>>();
    rep.ssim_trace = j.at("ssim").get<std::vector<double>>();
    for (const auto& p : j.at("embedding")) {
        EmbeddingPoint pt;
        pt.x = p.at("x").get<double>();
        pt.y = p.at("y").get<double>();
        pt.tag = p.at("tag").get<std::string>();
        rep.embedding.push_back(pt);
    }
    return rep;
}

}  // namespace leaps::metrics
