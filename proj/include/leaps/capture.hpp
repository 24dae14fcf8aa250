#pragma once

#include <map>
#include <string>
#include <vector>

#include "leaps/nn.hpp"
#include "leaps/video.hpp"

namespace leaps::capture {

enum class RecordKind { conv_volume, patch_tokens };

// One captured layer. `tensor` stays connected to the session input, so
// losses built on records backpropagate into the video being optimized.
struct ActivationRecord {
    std::string layer_id;
    RecordKind kind = RecordKind::conv_volume;
    ag::Var tensor;        // conv: {C',T',H',W'}; tokens: {token_dim, num_tokens}
    ag::Var channel_mean;  // {C'} (tokens: {token_dim})
    ag::Var channel_var;   // population variance, same length
    // token geometry (patch_tokens only)
    long pt = 1, ph = 1, pw = 1;
    long vt = 0, vh = 0, vw = 0;  // pre-tokenization T', H', W'
};

struct CaptureSession {
    ag::Var input;  // the {1,C,T,H,W} leaf fed to the model
    std::vector<std::string> layer_ids;
    std::map<std::string, ActivationRecord> records;
    ag::Var logits;
};

// Runs the frozen model on v, recording the requested layers with channel
// statistics. Gradients flow from every record back to session.input when
// input_grad is set.
CaptureSession capture(nn::Model& model, const VideoTensor& v,
                       const std::vector<std::string>& layer_ids, bool input_grad = true);

// Same, but reuses an existing input leaf (one graph per optimization step).
CaptureSession capture_from_leaf(nn::Model& model, const ag::Var& input,
                                 const std::vector<std::string>& layer_ids);

// Paper-style reshape of patch tokens to a C' x T' x H'W' x 1 volume.
ActivationRecord tokens_to_volume(const ActivationRecord& rec);

// Inverse mapping (volume {C',T',H',W'} -> tokens {token_dim, num_tokens}).
Tensor volume_to_tokens(const Tensor& vol, long pt, long ph, long pw);

std::map<std::string, std::pair<std::vector<double>, std::vector<double>>>
read_bn_stats(nn::Model& model, const std::vector<std::string>& layer_ids);

// channel stats of a raw {C,...} tensor with axis 0 as channels (oracle-facing helper)
void channel_stats(const Tensor& t, std::vector<double>* mean, std::vector<double>* var);

}  // namespace leaps::capture
