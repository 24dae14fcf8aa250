#include <cmath>

#include "json.hpp"
#include "leaps/nn.hpp"

namespace leaps::nn {

using nlohmann::json;
namespace ag = leaps::ag;

namespace {

bool wants(const std::vector<std::string>& taps, const std::string& id) {
    for (const auto& t : taps)
        if (t == "*" || t == id) return true;
    return false;
}

ag::Var as_leaf(const Tensor& t, bool grad) { return ag::leaf(t, grad); }

}  // namespace

// ---------------- ToyConv3d ----------------

ToyConv3d::ToyConv3d(ConvSpec spec) : spec_(std::move(spec)) {
    if (spec_.widths.size() != spec_.strides.size() || spec_.widths.empty())
        throw Error(ErrorCode::config_error, "conv spec: widths/strides mismatch");
    long cin = spec_.in_channels;
    for (std::size_t i = 0; i < spec_.widths.size(); ++i) {
        const long co = spec_.widths[i];
        Conv3dLayer c;
        c.weight = Tensor({co, cin, 3, 3, 3});
        c.bias = Tensor({co});
        c.geom = {spec_.strides[i][0], spec_.strides[i][1], spec_.strides[i][2], 1, 1, 1};
        convs_.push_back(std::move(c));
        BatchNormLayer bn;
        bn.gamma = Tensor({co});
        bn.beta = Tensor({co});
        bn.running_mean = Tensor({co});
        bn.running_var = Tensor({co});
        bns_.push_back(std::move(bn));
        cin = co;
    }
    head_.weight = Tensor({spec_.widths.back(), spec_.num_classes});
    head_.bias = Tensor({spec_.num_classes});
}

std::string ToyConv3d::arch_json() const {
    json j;
    j["kind"] = "conv3d";
    j["widths"] = spec_.widths;
    json strides = json::array();
    for (const auto& s : spec_.strides) strides.push_back({s[0], s[1], s[2]});
    j["strides"] = strides;
    j["num_classes"] = spec_.num_classes;
    j["in_channels"] = spec_.in_channels;
    return j.dump();
}

std::vector<std::pair<std::string, Tensor*>> ToyConv3d::parameters() {
    std::vector<std::pair<std::string, Tensor*>> out;
    for (std::size_t i = 0; i < convs_.size(); ++i) {
        const std::string p = "block" + std::to_string(i + 1);
        out.push_back({p + ".conv.weight", &convs_[i].weight});
        out.push_back({p + ".conv.bias", &convs_[i].bias});
        out.push_back({p + ".bn.gamma", &bns_[i].gamma});
        out.push_back({p + ".bn.beta", &bns_[i].beta});
    }
    out.push_back({"head.weight", &head_.weight});
    out.push_back({"head.bias", &head_.bias});
    return out;
}

std::vector<std::pair<std::string, Tensor*>> ToyConv3d::buffers() {
    std::vector<std::pair<std::string, Tensor*>> out;
    for (std::size_t i = 0; i < bns_.size(); ++i) {
        const std::string p = "block" + std::to_string(i + 1);
        out.push_back({p + ".bn.running_mean", &bns_[i].running_mean});
        out.push_back({p + ".bn.running_var", &bns_[i].running_var});
    }
    return out;
}

ForwardResult ToyConv3d::forward(const ag::Var& input, const ForwardOptions& opt) {
    ForwardResult res;
    ag::Var x = input;
    auto param_leaf = [&](Tensor& t) {
        ag::Var v = as_leaf(t, opt.param_grad);
        if (opt.param_grad) res.param_leaves.push_back(v);
        return v;
    };
    for (std::size_t i = 0; i < convs_.size(); ++i) {
        const std::string p = "block" + std::to_string(i + 1);
        ag::Var w = param_leaf(convs_[i].weight);
        ag::Var b = param_leaf(convs_[i].bias);
        ag::Var g = param_leaf(bns_[i].gamma);
        ag::Var bt = param_leaf(bns_[i].beta);
        ag::Var c = ag::conv3d(x, w, b, convs_[i].geom);
        if (wants(opt.taps, p + ".pre_bn")) res.taps[p + ".pre_bn"] = {c};
        ag::Var y = opt.train
                        ? ag::batchnorm_train(c, g, bt, bns_[i].running_mean,
                                              bns_[i].running_var, bns_[i].momentum, bns_[i].eps)
                        : ag::batchnorm_eval(c, g, bt, bns_[i].running_mean,
                                             bns_[i].running_var, bns_[i].eps);
        x = ag::relu(y);
        if (wants(opt.taps, p + ".out")) res.taps[p + ".out"] = {x};
    }
    ag::Var pooled = ag::reduce_mean(x, {2, 3, 4});  // {N, C}
    if (wants(opt.taps, "pool")) res.taps["pool"] = {pooled};
    ag::Var hw = param_leaf(head_.weight);
    ag::Var hb = param_leaf(head_.bias);
    res.logits = ag::linear(pooled, hw, hb);
    if (wants(opt.taps, "logits")) res.taps["logits"] = {res.logits};
    return res;
}

std::vector<std::string> ToyConv3d::tap_ids() const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < convs_.size(); ++i) {
        const std::string p = "block" + std::to_string(i + 1);
        out.push_back(p + ".pre_bn");
        out.push_back(p + ".out");
    }
    out.push_back("pool");
    out.push_back("logits");
    return out;
}

std::vector<std::string> ToyConv3d::priming_layers() const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < convs_.size(); ++i)
        out.push_back("block" + std::to_string(i + 1) + ".out");
    out.push_back("pool");
    return out;
}

std::string ToyConv3d::coherence_layer() const {
    return "block" + std::to_string(convs_.size()) + ".out";
}

std::vector<std::string> ToyConv3d::bn_layers() const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < bns_.size(); ++i)
        out.push_back("block" + std::to_string(i + 1) + ".bn");
    return out;
}

BatchNormLayer* ToyConv3d::find_bn(const std::string& id) {
    for (std::size_t i = 0; i < bns_.size(); ++i)
        if (id == "block" + std::to_string(i + 1) + ".bn") return &bns_[i];
    return nullptr;
}

std::string ToyConv3d::bn_input_tap(const std::string& bn_layer) const {
    const auto pos = bn_layer.rfind(".bn");
    if (pos == std::string::npos)
        throw Error(ErrorCode::unknown_layer, "not a bn layer: " + bn_layer);
    return bn_layer.substr(0, pos) + ".pre_bn";
}

// ---------------- ToyVideoTransformer ----------------

ToyVideoTransformer::ToyVideoTransformer(TransformerSpec spec) : spec_(std::move(spec)) {
    const long pvol = spec_.patch_t * spec_.patch_h * spec_.patch_w;
    if (spec_.dim % pvol != 0)
        throw Error(ErrorCode::config_error, "transformer dim must be divisible by patch volume");
    if (spec_.dim % spec_.heads != 0)
        throw Error(ErrorCode::config_error, "transformer dim must be divisible by heads");
    embed_.weight = Tensor({spec_.dim, spec_.in_channels, spec_.patch_t, spec_.patch_h, spec_.patch_w});
    embed_.bias = Tensor({spec_.dim});
    embed_.geom = {spec_.patch_t, spec_.patch_h, spec_.patch_w, 0, 0, 0};
    for (long i = 0; i < spec_.depth; ++i) {
        Block b;
        b.ln1_g = Tensor({spec_.dim});
        b.ln1_b = Tensor({spec_.dim});
        b.ln2_g = Tensor({spec_.dim});
        b.ln2_b = Tensor({spec_.dim});
        b.qkv.weight = Tensor({spec_.dim, 3 * spec_.dim});
        b.qkv.bias = Tensor({3 * spec_.dim});
        b.proj.weight = Tensor({spec_.dim, spec_.dim});
        b.proj.bias = Tensor({spec_.dim});
        b.fc1.weight = Tensor({spec_.dim, spec_.mlp_hidden});
        b.fc1.bias = Tensor({spec_.mlp_hidden});
        b.fc2.weight = Tensor({spec_.mlp_hidden, spec_.dim});
        b.fc2.bias = Tensor({spec_.dim});
        blocks_.push_back(std::move(b));
    }
    ln_f_g = Tensor({spec_.dim});
    ln_f_b = Tensor({spec_.dim});
    head_.weight = Tensor({spec_.dim, spec_.num_classes});
    head_.bias = Tensor({spec_.num_classes});
}

std::string ToyVideoTransformer::arch_json() const {
    json j;
    j["kind"] = "video_transformer";
    j["patch_t"] = spec_.patch_t;
    j["patch_h"] = spec_.patch_h;
    j["patch_w"] = spec_.patch_w;
    j["dim"] = spec_.dim;
    j["depth"] = spec_.depth;
    j["heads"] = spec_.heads;
    j["mlp_hidden"] = spec_.mlp_hidden;
    j["num_classes"] = spec_.num_classes;
    j["in_channels"] = spec_.in_channels;
    return j.dump();
}

std::vector<std::pair<std::string, Tensor*>> ToyVideoTransformer::parameters() {
    std::vector<std::pair<std::string, Tensor*>> out;
    out.push_back({"embed.weight", &embed_.weight});
    out.push_back({"embed.bias", &embed_.bias});
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        const std::string p = "attn" + std::to_string(i + 1);
        Block& b = blocks_[i];
        out.push_back({p + ".ln1_g", &b.ln1_g});
        out.push_back({p + ".ln1_b", &b.ln1_b});
        out.push_back({p + ".qkv.weight", &b.qkv.weight});
        out.push_back({p + ".qkv.bias", &b.qkv.bias});
        out.push_back({p + ".proj.weight", &b.proj.weight});
        out.push_back({p + ".proj.bias", &b.proj.bias});
        out.push_back({p + ".ln2_g", &b.ln2_g});
        out.push_back({p + ".ln2_b", &b.ln2_b});
        out.push_back({p + ".fc1.weight", &b.fc1.weight});
        out.push_back({p + ".fc1.bias", &b.fc1.bias});
        out.push_back({p + ".fc2.weight", &b.fc2.weight});
        out.push_back({p + ".fc2.bias", &b.fc2.bias});
    }
    out.push_back({"ln_f_g", &ln_f_g});
    out.push_back({"ln_f_b", &ln_f_b});
    out.push_back({"head.weight", &head_.weight});
    out.push_back({"head.bias", &head_.bias});
    return out;
}

std::vector<std::pair<std::string, Tensor*>> ToyVideoTransformer::buffers() { return {}; }

ForwardResult ToyVideoTransformer::forward(const ag::Var& input, const ForwardOptions& opt) {
    const auto& xs = input->value.shape();
    if (xs.size() != 5) throw Error(ErrorCode::shape_error, "transformer input must be 5-d");
    const long N = xs[0], T = xs[2], H = xs[3], W = xs[4];
    if (T % spec_.patch_t || H % spec_.patch_h || W % spec_.patch_w)
        throw Error(ErrorCode::shape_error, "input not divisible by patch size");
    const long gt = T / spec_.patch_t, gh = H / spec_.patch_h, gw = W / spec_.patch_w;
    const long Nt = gt * gh * gw;
    const long D = spec_.dim, heads = spec_.heads, dh = D / heads;

    ForwardResult res;
    auto param_leaf = [&](Tensor& t) {
        ag::Var v = as_leaf(t, opt.param_grad);
        if (opt.param_grad) res.param_leaves.push_back(v);
        return v;
    };
    auto tok_tap = [&](const std::string& id, const ag::Var& v) {
        if (!wants(opt.taps, id)) return;
        TapValue tv;
        tv.var = v;
        tv.tokens = true;
        tv.pt = spec_.patch_t;
        tv.ph = spec_.patch_h;
        tv.pw = spec_.patch_w;
        tv.vt = T;
        tv.vh = H;
        tv.vw = W;
        res.taps[id] = tv;
    };

    ag::Var ew = param_leaf(embed_.weight);
    ag::Var eb = param_leaf(embed_.bias);
    ag::Var emb = ag::conv3d(input, ew, eb, embed_.geom);   // {N,D,gt,gh,gw}
    ag::Var tok = ag::permute(emb, {0, 2, 3, 4, 1});         // {N,gt,gh,gw,D}
    tok = ag::reshape(tok, {N, Nt, D});

    // fixed sinusoidal positional encoding over the t-major token order
    Tensor pos({N, Nt, D});
    for (long i = 0; i < Nt; ++i)
        for (long d = 0; d < D; ++d) {
            const double angle =
                static_cast<double>(i) /
                std::pow(10000.0, 2.0 * static_cast<double>(d / 2) / static_cast<double>(D));
            const double v = (d % 2 == 0) ? std::sin(angle) : std::cos(angle);
            for (long n = 0; n < N; ++n) pos[(n * Nt + i) * D + d] = v;
        }
    tok = ag::add(tok, ag::constant(std::move(pos)));
    tok_tap("patch_tokens", tok);

    for (std::size_t bi = 0; bi < blocks_.size(); ++bi) {
        Block& b = blocks_[bi];
        ag::Var ln1g = param_leaf(b.ln1_g), ln1b = param_leaf(b.ln1_b);
        ag::Var qkvw = param_leaf(b.qkv.weight), qkvb = param_leaf(b.qkv.bias);
        ag::Var projw = param_leaf(b.proj.weight), projb = param_leaf(b.proj.bias);
        ag::Var ln2g = param_leaf(b.ln2_g), ln2b = param_leaf(b.ln2_b);
        ag::Var fc1w = param_leaf(b.fc1.weight), fc1b = param_leaf(b.fc1.bias);
        ag::Var fc2w = param_leaf(b.fc2.weight), fc2b = param_leaf(b.fc2.bias);

        ag::Var xn = ag::layernorm(tok, ln1g, ln1b, 1e-5);
        ag::Var rows = ag::reshape(xn, {N * Nt, D});
        ag::Var qkv = ag::linear(rows, qkvw, qkvb);            // {N*Nt, 3D}
        ag::Var qkv5 = ag::reshape(qkv, {N, Nt, 3, heads, dh});
        ag::Var qkv_p = ag::permute(qkv5, {2, 0, 3, 1, 4});     // {3, N, heads, Nt, dh}
        auto head_mat = [&](long which) {
            ag::Var s = ag::slice_axis0(qkv_p, which, which + 1);
            return ag::reshape(s, {N * heads, Nt, dh});
        };
        ag::Var q = head_mat(0), k = head_mat(1), v = head_mat(2);
        ag::Var kt = ag::permute(k, {0, 2, 1});                 // {N*heads, dh, Nt}
        ag::Var scores = ag::scale(ag::bmm(q, kt), 1.0 / std::sqrt(static_cast<double>(dh)));
        ag::Var attn = ag::softmax_lastaxis(scores);
        ag::Var ctx = ag::bmm(attn, v);                          // {N*heads, Nt, dh}
        ctx = ag::reshape(ctx, {N, heads, Nt, dh});
        ctx = ag::permute(ctx, {0, 2, 1, 3});                    // {N, Nt, heads, dh}
        ctx = ag::reshape(ctx, {N * Nt, D});
        ag::Var proj = ag::linear(ctx, projw, projb);
        tok = ag::add(tok, ag::reshape(proj, {N, Nt, D}));

        ag::Var yn = ag::layernorm(tok, ln2g, ln2b, 1e-5);
        ag::Var h1 = ag::gelu(ag::linear(ag::reshape(yn, {N * Nt, D}), fc1w, fc1b));
        ag::Var h2 = ag::linear(h1, fc2w, fc2b);
        tok = ag::add(tok, ag::reshape(h2, {N, Nt, D}));
        tok_tap("attn" + std::to_string(bi + 1) + ".out", tok);
    }

    ag::Var lfg = param_leaf(ln_f_g), lfb = param_leaf(ln_f_b);
    ag::Var fin = ag::layernorm(tok, lfg, lfb, 1e-5);
    tok_tap("final_tokens", fin);

    ag::Var pooled = ag::reduce_mean(fin, {1});  // {N, D}
    ag::Var hw = param_leaf(head_.weight), hb = param_leaf(head_.bias);
    res.logits = ag::linear(pooled, hw, hb);
    if (wants(opt.taps, "logits")) res.taps["logits"] = {res.logits};
    return res;
}

std::vector<std::string> ToyVideoTransformer::tap_ids() const {
    std::vector<std::string> out = {"patch_tokens"};
    for (std::size_t i = 0; i < blocks_.size(); ++i)
        out.push_back("attn" + std::to_string(i + 1) + ".out");
    out.push_back("final_tokens");
    out.push_back("logits");
    return out;
}

std::vector<std::string> ToyVideoTransformer::priming_layers() const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < blocks_.size(); ++i)
        out.push_back("attn" + std::to_string(i + 1) + ".out");
    out.push_back("final_tokens");
    return out;
}

std::string ToyVideoTransformer::coherence_layer() const { return "final_tokens"; }

std::string ToyVideoTransformer::bn_input_tap(const std::string& layer) const {
    throw Error(ErrorCode::not_bn, "transformer has no batch-norm layers: " + layer);
}

}  // namespace leaps::nn
