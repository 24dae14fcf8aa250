#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "leaps/autograd.hpp"
#include "leaps/tensor.hpp"
#include "leaps/video.hpp"

namespace leaps::nn {

// A captured intermediate value. For token taps the pre-tokenization volume
// geometry and patch resolution are recorded so downstream code can reshape.
struct TapValue {
    ag::Var var;             // conv taps: {N,C,T,H,W}; token taps: {N, n_tokens, dim}
    bool tokens = false;
    long pt = 1, ph = 1, pw = 1;   // patch resolution per axis
    long vt = 0, vh = 0, vw = 0;   // pre-tokenization T', H', W'
};

using TapMap = std::map<std::string, TapValue>;

struct ForwardOptions {
    bool train = false;
    bool input_grad = false;
    bool param_grad = false;
    // taps to capture; empty = none. "*" captures every known tap.
    std::vector<std::string> taps;
};

struct ForwardResult {
    ag::Var logits;
    TapMap taps;
    std::vector<ag::Var> param_leaves;  // in parameters() order when param_grad
};

class Model {
public:
    virtual ~Model() = default;

    virtual std::string kind() const = 0;
    virtual std::string arch_json() const = 0;
    virtual long num_classes() const = 0;

    // declaration order is the checkpoint order
    virtual std::vector<std::pair<std::string, Tensor*>> parameters() = 0;
    virtual std::vector<std::pair<std::string, Tensor*>> buffers() = 0;

    // input {N,C,T,H,W}
    virtual ForwardResult forward(const ag::Var& input, const ForwardOptions& opt) = 0;

    virtual std::vector<std::string> tap_ids() const = 0;
    virtual std::vector<std::string> priming_layers() const = 0;
    virtual std::string coherence_layer() const = 0;
    // batch-norm layer ids ("block1.bn", ...) and the taps holding each
    // layer's input activation ("block1.pre_bn", ...)
    virtual std::vector<std::string> bn_layers() const = 0;
    virtual std::string bn_input_tap(const std::string& bn_layer) const = 0;
    virtual struct BatchNormLayer* find_bn(const std::string&) { return nullptr; }

    void init_params(std::uint64_t seed);

    // round all parameters/buffers to f32-representable values so checkpoint
    // round-trips are bit-exact
    void snap_to_f32();
};

struct Conv3dLayer {
    Tensor weight;  // {Co,Ci,Kt,Kh,Kw}
    Tensor bias;    // {Co}
    ag::Conv3dGeom geom;
};

struct BatchNormLayer {
    Tensor gamma, beta;           // params
    Tensor running_mean, running_var;  // buffers
    double momentum = 0.1;
    double eps = 1e-5;
};

struct LinearLayer {
    Tensor weight;  // {D,K}
    Tensor bias;    // {K}
};

struct ConvSpec {
    std::vector<long> widths = {16, 32, 64, 64};
    // per-block (st, sh, sw)
    std::vector<std::array<long, 3>> strides = {{1, 2, 2}, {1, 2, 2}, {2, 2, 2}, {1, 1, 1}};
    long num_classes = 6;
    long in_channels = 3;
};

class ToyConv3d : public Model {
public:
    explicit ToyConv3d(ConvSpec spec);

    std::string kind() const override { return "conv3d"; }
    std::string arch_json() const override;
    long num_classes() const override { return spec_.num_classes; }
    std::vector<std::pair<std::string, Tensor*>> parameters() override;
    std::vector<std::pair<std::string, Tensor*>> buffers() override;
    ForwardResult forward(const ag::Var& input, const ForwardOptions& opt) override;
    std::vector<std::string> tap_ids() const override;
    std::vector<std::string> priming_layers() const override;
    std::string coherence_layer() const override;
    std::vector<std::string> bn_layers() const override;
    std::string bn_input_tap(const std::string& bn_layer) const override;

    const ConvSpec& spec() const { return spec_; }
    BatchNormLayer& bn(std::size_t i) { return bns_[i]; }
    BatchNormLayer* find_bn(const std::string& id) override;

private:
    ConvSpec spec_;
    std::vector<Conv3dLayer> convs_;
    std::vector<BatchNormLayer> bns_;
    LinearLayer head_;
};

struct TransformerSpec {
    long patch_t = 2, patch_h = 4, patch_w = 4;
    long dim = 64;
    long depth = 2;
    long heads = 4;
    long mlp_hidden = 128;
    long num_classes = 6;
    long in_channels = 3;
};

class ToyVideoTransformer : public Model {
public:
    explicit ToyVideoTransformer(TransformerSpec spec);

    std::string kind() const override { return "video_transformer"; }
    std::string arch_json() const override;
    long num_classes() const override { return spec_.num_classes; }
    std::vector<std::pair<std::string, Tensor*>> parameters() override;
    std::vector<std::pair<std::string, Tensor*>> buffers() override;
    ForwardResult forward(const ag::Var& input, const ForwardOptions& opt) override;
    std::vector<std::string> tap_ids() const override;
    std::vector<std::string> priming_layers() const override;
    std::string coherence_layer() const override;
    std::vector<std::string> bn_layers() const override { return {}; }
    std::string bn_input_tap(const std::string&) const override;

    const TransformerSpec& spec() const { return spec_; }

private:
    struct Block {
        Tensor ln1_g, ln1_b, ln2_g, ln2_b;
        LinearLayer qkv;   // D -> 3D
        LinearLayer proj;  // D -> D
        LinearLayer fc1;   // D -> hidden
        LinearLayer fc2;   // hidden -> D
    };
    TransformerSpec spec_;
    Conv3dLayer embed_;  // kernel = stride = patch
    std::vector<Block> blocks_;
    Tensor ln_f_g, ln_f_b;
    LinearLayer head_;
};

std::uint64_t param_checksum(Model& m);

void save_model(Model& m, const std::string& path);
std::unique_ptr<Model> load_model(const std::string& path);
std::unique_ptr<Model> model_from_arch_json(const std::string& json_text);

}  // namespace leaps::nn
