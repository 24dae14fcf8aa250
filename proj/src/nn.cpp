#include "leaps/nn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "leaps/rng.hpp"

namespace leaps::nn {

using nlohmann::json;

void Model::init_params(std::uint64_t seed) {
    Rng rng(seed);
    for (auto& [name, t] : parameters()) {
        if (name.ends_with(".gamma") || name.ends_with("_g")) {
            t->fill(1.0);
        } else if (name.ends_with(".bias") || name.ends_with(".beta") || name.ends_with("_b")) {
            t->fill(0.0);
        } else {
            // He init; fan-in from layout (conv {Co,Ci,Kt,Kh,Kw}, linear {D,K})
            long fan_in;
            if (t->rank() == 5) fan_in = t->numel() / t->dim(0);
            else fan_in = t->dim(0);
            const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
            for (long i = 0; i < t->numel(); ++i) (*t)[i] = std * rng.gaussian();
        }
    }
    for (auto& [name, t] : buffers()) {
        if (name.ends_with("running_var")) t->fill(1.0);
        else t->fill(0.0);
    }
    snap_to_f32();
}

void Model::snap_to_f32() {
    auto snap = [](Tensor* t) {
        for (long i = 0; i < t->numel(); ++i)
            (*t)[i] = static_cast<double>(static_cast<float>((*t)[i]));
    };
    for (auto& [name, t] : parameters()) snap(t);
    for (auto& [name, t] : buffers()) snap(t);
}

std::uint64_t param_checksum(Model& m) {
    // FNV-1a over the f32 images of all parameters and buffers
    std::uint64_t h = 1469598103934665603ull;
    auto feed = [&h](const Tensor* t) {
        for (long i = 0; i < t->numel(); ++i) {
            const float f = static_cast<float>((*t)[i]);
            std::uint32_t bits;
            std::memcpy(&bits, &f, 4);
            for (int b = 0; b < 4; ++b) {
                h ^= (bits >> (8 * b)) & 0xff;
                h *= 1099511628211ull;
            }
        }
    };
    for (auto& [name, t] : m.parameters()) feed(t);
    for (auto& [name, t] : m.buffers()) feed(t);
    return h;
}

namespace {

constexpr char kMagic[8] = {'L', 'E', 'A', 'P', 'S', 'M', 'D', 'L'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw Error(ErrorCode::format_error, "truncated model file");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void save_model(Model& m, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error(ErrorCode::format_error, "cannot open for write: " + path);
    os.write(kMagic, 8);
    write_u32(os, kVersion);
    const std::string desc = m.arch_json();
    write_u32(os, static_cast<std::uint32_t>(desc.size()));
    os.write(desc.data(), static_cast<std::streamsize>(desc.size()));
    auto dump = [&os](const Tensor* t) {
        for (long i = 0; i < t->numel(); ++i) {
            const float f = static_cast<float>((*t)[i]);
            std::uint32_t bits;
            std::memcpy(&bits, &f, 4);
            write_u32(os, bits);
        }
    };
    for (auto& [name, t] : m.parameters()) dump(t);
    for (auto& [name, t] : m.buffers()) dump(t);
}

std::unique_ptr<Model> model_from_arch_json(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception&) {
        throw Error(ErrorCode::format_error, "invalid model descriptor");
    }
    const std::string kind = j.value("kind", "");
    if (kind == "conv3d") {
        ConvSpec s;
        s.widths = j.at("widths").get<std::vector<long>>();
        s.strides.clear();
        for (const auto& st : j.at("strides"))
            s.strides.push_back({st.at(0).get<long>(), st.at(1).get<long>(), st.at(2).get<long>()});
        s.num_classes = j.at("num_classes").get<long>();
        s.in_channels = j.at("in_channels").get<long>();
        return std::make_unique<ToyConv3d>(s);
    }
    if (kind == "video_transformer") {
        TransformerSpec s;
        s.patch_t = j.at("patch_t").get<long>();
        s.patch_h = j.at("patch_h").get<long>();
        s.patch_w = j.at("patch_w").get<long>();
        s.dim = j.at("dim").get<long>();
        s.depth = j.at("depth").get<long>();
        s.heads = j.at("heads").get<long>();
        s.mlp_hidden = j.at("mlp_hidden").get<long>();
        s.num_classes = j.at("num_classes").get<long>();
        s.in_channels = j.at("in_channels").get<long>();
        return std::make_unique<ToyVideoTransformer>(s);
    }
    throw Error(ErrorCode::format_error, "unknown model kind: " + kind);
}

std::unique_ptr<Model> load_model(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error(ErrorCode::format_error, "cannot open: " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0)
        throw Error(ErrorCode::format_error, "bad model magic");
    const std::uint32_t version = read_u32(is);
    if (version != kVersion)
        throw Error(ErrorCode::version_error,
                    "unsupported model version " + std::to_string(version));
    const std::uint32_t len = read_u32(is);
    std::string desc(len, '\0');
    is.read(desc.data(), len);
    if (!is) throw Error(ErrorCode::format_error, "truncated model descriptor");
    auto m = model_from_arch_json(desc);
    auto fill = [&is](Tensor* t) {
        for (long i = 0; i < t->numel(); ++i) {
            const std::uint32_t bits = read_u32(is);
            float f;
            std::memcpy(&f, &bits, 4);
            (*t)[i] = f;
        }
    };
    for (auto& [name, t] : m->parameters()) fill(t);
    for (auto& [name, t] : m->buffers()) fill(t);
    char extra;
    if (is.read(&extra, 1))
        throw Error(ErrorCode::format_error, "trailing bytes in model file");
    return m;
}

}  // namespace leaps::nn
