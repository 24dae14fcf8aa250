#include "leaps/video.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace leaps {

void validate_video(const VideoTensor& v) {
    if (v.data.rank() != 4)
        throw Error(ErrorCode::dimension_error, "video must be rank-4 (CxTxHxW)");
    for (int i = 0; i < 4; ++i)
        if (v.data.dim(i) < 1)
            throw Error(ErrorCode::dimension_error,
                        "video dimension " + std::to_string(i) + " < 1");
    for (long i = 0; i < v.data.numel(); ++i) {
        const double x = v.data[i];
        if (!std::isfinite(x))
            throw Error(ErrorCode::nonfinite_error, "video contains NaN/Inf");
        if (x < v.range.lo || x > v.range.hi)
            throw Error(ErrorCode::range_error,
                        "value " + std::to_string(x) + " outside declared range");
    }
}

VideoTensor resample_video(const VideoTensor& v, long t_out, long h_out, long w_out) {
    if (t_out < 1 || h_out < 1 || w_out < 1)
        throw Error(ErrorCode::dimension_error, "resample targets must be >= 1");
    const long C = v.channels(), T = v.frames(), H = v.height(), W = v.width();
    if (t_out == T && h_out == H && w_out == W) return v;

    // corner-aligned sample coordinate for output index i over n_out points
    auto coord = [](long i, long n_out, long n_in) {
        if (n_out == 1) return 0.0;
        return static_cast<double>(i) * (n_in - 1) / static_cast<double>(n_out - 1);
    };

    VideoTensor out(Tensor({C, t_out, h_out, w_out}), v.range);
    for (long c = 0; c < C; ++c)
        for (long t = 0; t < t_out; ++t) {
            const double ft = coord(t, t_out, T);
            const long t0 = static_cast<long>(ft);
            const long t1 = std::min(t0 + 1, T - 1);
            const double wt = ft - t0;
            for (long h = 0; h < h_out; ++h) {
                const double fh = coord(h, h_out, H);
                const long h0 = static_cast<long>(fh);
                const long h1 = std::min(h0 + 1, H - 1);
                const double wh = fh - h0;
                for (long w = 0; w < w_out; ++w) {
                    const double fw = coord(w, w_out, W);
                    const long w0 = static_cast<long>(fw);
                    const long w1 = std::min(w0 + 1, W - 1);
                    const double ww = fw - w0;
                    double acc = 0.0;
                    for (int dt = 0; dt < 2; ++dt)
                        for (int dh = 0; dh < 2; ++dh)
                            for (int dw = 0; dw < 2; ++dw) {
                                const double wgt = (dt ? wt : 1.0 - wt) *
                                                   (dh ? wh : 1.0 - wh) *
                                                   (dw ? ww : 1.0 - ww);
                                if (wgt == 0.0) continue;
                                acc += wgt * v.at(c, dt ? t1 : t0, dh ? h1 : h0, dw ? w1 : w0);
                            }
                    out.at(c, t, h, w) = acc;
                }
            }
        }
    return out;
}

namespace {

constexpr char kMagic[8] = {'L', 'E', 'A', 'P', 'S', 'V', 'I', 'D'};
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
    if (!is) throw Error(ErrorCode::format_error, "truncated leapsvid file");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void save_leapsvid(const VideoTensor& v, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error(ErrorCode::format_error, "cannot open for write: " + path);
    os.write(kMagic, 8);
    write_u32(os, kVersion);
    write_u32(os, static_cast<std::uint32_t>(v.channels()));
    write_u32(os, static_cast<std::uint32_t>(v.frames()));
    write_u32(os, static_cast<std::uint32_t>(v.height()));
    write_u32(os, static_cast<std::uint32_t>(v.width()));
    for (long i = 0; i < v.data.numel(); ++i) {
        const float f = static_cast<float>(v.data[i]);
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        write_u32(os, bits);
    }
}

VideoTensor load_leapsvid(const std::string& path, ValueRange range) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error(ErrorCode::format_error, "cannot open: " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0)
        throw Error(ErrorCode::format_error, "bad leapsvid magic");
    const std::uint32_t version = read_u32(is);
    if (version != kVersion)
        throw Error(ErrorCode::version_error,
                    "unsupported leapsvid version " + std::to_string(version));
    const long C = read_u32(is), T = read_u32(is), H = read_u32(is), W = read_u32(is);
    Tensor data({C, T, H, W});
    for (long i = 0; i < data.numel(); ++i) {
        const std::uint32_t bits = read_u32(is);
        float f;
        std::memcpy(&f, &bits, 4);
        data[i] = f;
    }
    return VideoTensor(std::move(data), range);
}

}  // namespace leaps
