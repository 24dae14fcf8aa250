#pragma once

#include <string>
#include <utility>
#include <vector>

#include "leaps/nn.hpp"
#include "leaps/video.hpp"

namespace leaps::metrics {

struct EmbeddingPoint {
    double x = 0.0;
    double y = 0.0;
    std::string tag;  // "real" | "synth" | caller-defined
};

struct EvalReport {
    double top1_model = 0.0;
    double top1_verifier = 0.0;
    double is_mean = 1.0;
    double is_std = 0.0;
    std::vector<double> psnr_trace;  // length T-1
    std::vector<double> ssim_trace;  // length T-1
    std::vector<EmbeddingPoint> embedding;

    std::string to_json() const;
    static EvalReport from_json(const std::string& text);
};

double top1(const std::vector<VideoTensor>& videos, const std::vector<long>& labels,
            nn::Model& model);

// Salimans et al.: per split exp(mean_x KL(p(y|x) || marginal)); the
// classifier is the verifier. Returns (mean, std) over splits.
std::pair<double, double> inception_score(const std::vector<VideoTensor>& videos,
                                          nn::Model& classifier, long n_splits = 5);

// frames {C,H,W} with values in [0,1]
double psnr_pair(const Tensor& f1, const Tensor& f2);
double ssim_pair(const Tensor& f1, const Tensor& f2);

// consecutive-frame traces over a [0,1] video, length T-1
std::vector<double> psnr_trace(const VideoTensor& video01);
std::vector<double> ssim_trace(const VideoTensor& video01);

// Mean-centered projection onto the top-k principal axes. Sign convention:
// each axis's largest-magnitude coordinate is positive. Optional outputs
// expose the scatter-matrix eigenvalues and axes for analysis.
std::vector<std::vector<double>> pca_project(const std::vector<std::vector<double>>& embeddings,
                                             int k = 2,
                                             std::vector<double>* eigenvalues = nullptr,
                                             std::vector<std::vector<double>>* axes = nullptr);

// Run-level report. videos are standardized model inputs; display01 is the
// de-normalized [0,1] video whose frame-pair traces are reported.
EvalReport evaluate(const std::vector<VideoTensor>& videos, const std::vector<long>& labels,
                    nn::Model& model, nn::Model* verifier, const VideoTensor& display01,
                    long n_splits = 5);

}  // namespace leaps::metrics
