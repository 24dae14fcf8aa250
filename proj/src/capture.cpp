#include "leaps/capture.hpp"

#include <algorithm>

namespace leaps::capture {

namespace ag = leaps::ag;

namespace {

// mean and population variance over all non-leading axes, as graph nodes
void attach_stats(ActivationRecord& rec) {
    std::vector<int> axes;
    for (int i = 1; i < rec.tensor->value.rank(); ++i) axes.push_back(i);
    if (axes.empty()) {
        rec.channel_mean = rec.tensor;
        rec.channel_var = ag::constant(Tensor(rec.tensor->value.shape()));
        return;
    }
    ag::Var m = ag::reduce_mean(rec.tensor, axes);
    ag::Var msq = ag::reduce_mean(ag::square(rec.tensor), axes);
    rec.channel_mean = m;
    rec.channel_var = ag::sub(msq, ag::square(m));
}

ActivationRecord record_from_tap(const std::string& id, const nn::TapValue& tap) {
    ActivationRecord rec;
    rec.layer_id = id;
    const auto& shape = tap.var->value.shape();
    if (tap.tokens) {
        // {1, Nt, D} -> {token_dim, num_tokens}
        const long Nt = shape[1], D = shape[2];
        rec.kind = RecordKind::patch_tokens;
        rec.tensor = ag::permute(ag::reshape(tap.var, {Nt, D}), {1, 0});
        rec.pt = tap.pt;
        rec.ph = tap.ph;
        rec.pw = tap.pw;
        rec.vt = tap.vt;
        rec.vh = tap.vh;
        rec.vw = tap.vw;
    } else if (shape.size() == 5) {
        rec.kind = RecordKind::conv_volume;
        rec.tensor = ag::reshape(tap.var, {shape[1], shape[2], shape[3], shape[4]});
    } else if (shape.size() == 2) {
        // pooled / logits vectors as degenerate volumes
        rec.kind = RecordKind::conv_volume;
        rec.tensor = ag::reshape(tap.var, {shape[1], 1, 1, 1});
    } else {
        throw Error(ErrorCode::shape_error, "unsupported tap shape for " + id);
    }
    attach_stats(rec);
    return rec;
}

}  // namespace

CaptureSession capture_from_leaf(nn::Model& model, const ag::Var& input,
                                 const std::vector<std::string>& layer_ids) {
    const auto known = model.tap_ids();
    for (const auto& id : layer_ids)
        if (std::find(known.begin(), known.end(), id) == known.end())
            throw Error(ErrorCode::unknown_layer, "unknown layer: " + id);

    nn::ForwardOptions opt;
    opt.taps = layer_ids;
    nn::ForwardResult fr = model.forward(input, opt);

    CaptureSession s;
    s.input = input;
    s.layer_ids = layer_ids;
    s.logits = fr.logits;
    for (const auto& id : layer_ids) s.records[id] = record_from_tap(id, fr.taps.at(id));
    return s;
}

CaptureSession capture(nn::Model& model, const VideoTensor& v,
                       const std::vector<std::string>& layer_ids, bool input_grad) {
    const long C = v.channels(), T = v.frames(), H = v.height(), W = v.width();
    ag::Var input = ag::leaf(v.data.reshaped({1, C, T, H, W}), input_grad);
    return capture_from_leaf(model, input, layer_ids);
}

ActivationRecord tokens_to_volume(const ActivationRecord& rec) {
    if (rec.kind != RecordKind::patch_tokens)
        throw Error(ErrorCode::shape_error, "tokens_to_volume needs a patch_tokens record");
    const long D = rec.tensor->value.dim(0);
    const long Nt = rec.tensor->value.dim(1);
    const long pvol = rec.pt * rec.ph * rec.pw;
    if (D % pvol != 0)
        throw Error(ErrorCode::shape_error, "token_dim not divisible by patch volume");
    const long C = D / pvol;
    const long T = rec.vt, H = rec.vh, W = rec.vw;
    if (Nt * pvol != T * H * W)
        throw Error(ErrorCode::shape_error, "num_tokens inconsistent with volume dims");
    const long gh = H / rec.ph, gw = W / rec.pw;

    // out[c, t, h*W + w] = tokens[d, token] with d channel-major within the
    // patch and tokens ordered t-major, then h, then w
    std::vector<long> idx(C * T * H * W);
    long o = 0;
    for (long c = 0; c < C; ++c)
        for (long t = 0; t < T; ++t) {
            const long bt = t / rec.pt, dt = t % rec.pt;
            for (long h = 0; h < H; ++h) {
                const long bh = h / rec.ph, dh = h % rec.ph;
                for (long w = 0; w < W; ++w) {
                    const long bw = w / rec.pw, dw = w % rec.pw;
                    const long token = (bt * gh + bh) * gw + bw;
                    const long d = ((c * rec.pt + dt) * rec.ph + dh) * rec.pw + dw;
                    idx[o++] = d * Nt + token;
                }
            }
        }

    ActivationRecord out;
    out.layer_id = rec.layer_id;
    out.kind = RecordKind::conv_volume;
    out.tensor = ag::take(rec.tensor, std::move(idx), {C, T, H * W, 1});
    attach_stats(out);
    return out;
}

Tensor volume_to_tokens(const Tensor& vol, long pt, long ph, long pw) {
    const long C = vol.dim(0), T = vol.dim(1), H = vol.dim(2), W = vol.dim(3);
    if (T % pt || H % ph || W % pw)
        throw Error(ErrorCode::shape_error, "volume not divisible by patch size");
    const long gt = T / pt, gh = H / ph, gw = W / pw;
    const long Nt = gt * gh * gw;
    const long D = C * pt * ph * pw;
    Tensor tok({D, Nt});
    for (long c = 0; c < C; ++c)
        for (long t = 0; t < T; ++t)
            for (long h = 0; h < H; ++h)
                for (long w = 0; w < W; ++w) {
                    const long token = ((t / pt) * gh + h / ph) * gw + w / pw;
                    const long d = ((c * pt + t % pt) * ph + h % ph) * pw + w % pw;
                    tok[d * Nt + token] = vol[((c * T + t) * H + h) * W + w];
                }
    return tok;
}

std::map<std::string, std::pair<std::vector<double>, std::vector<double>>>
read_bn_stats(nn::Model& model, const std::vector<std::string>& layer_ids) {
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> out;
    const auto known = model.bn_layers();
    for (const auto& id : layer_ids) {
        nn::BatchNormLayer* bn = model.find_bn(id);
        if (!bn) {
            const auto taps = model.tap_ids();
            const bool exists =
                std::find(known.begin(), known.end(), id) != known.end() ||
                std::find(taps.begin(), taps.end(), id) != taps.end();
            throw Error(exists ? ErrorCode::not_bn : ErrorCode::unknown_layer,
                        "no running statistics for layer: " + id);
        }
        out[id] = {bn->running_mean.vec(), bn->running_var.vec()};
    }
    return out;
}

void channel_stats(const Tensor& t, std::vector<double>* mean, std::vector<double>* var) {
    const long C = t.dim(0);
    const long S = t.numel() / C;
    mean->assign(C, 0.0);
    var->assign(C, 0.0);
    for (long c = 0; c < C; ++c) {
        const double* p = t.data() + c * S;
        double m = 0.0;
        for (long i = 0; i < S; ++i) m += p[i];
        m /= S;
        double v = 0.0;
        for (long i = 0; i < S; ++i) v += (p[i] - m) * (p[i] - m);
        (*mean)[c] = m;
        (*var)[c] = v / S;
    }
}

}  // namespace leaps::capture
