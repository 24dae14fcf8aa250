#include "leaps/imageio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

#include <zlib.h>

namespace leaps::imageio {

namespace {

void put_u32_be(std::vector<unsigned char>& out, std::uint32_t v) {
    out.push_back(static_cast<unsigned char>(v >> 24));
    out.push_back(static_cast<unsigned char>(v >> 16));
    out.push_back(static_cast<unsigned char>(v >> 8));
    out.push_back(static_cast<unsigned char>(v));
}

void png_chunk(std::ofstream& f, const char* type, const std::vector<unsigned char>& data) {
    std::vector<unsigned char> len;
    put_u32_be(len, static_cast<std::uint32_t>(data.size()));
    f.write(reinterpret_cast<const char*>(len.data()), 4);
    f.write(type, 4);
    if (!data.empty()) f.write(reinterpret_cast<const char*>(data.data()), data.size());
    uLong crc = crc32(0L, reinterpret_cast<const Bytef*>(type), 4);
    if (!data.empty()) crc = crc32(crc, data.data(), static_cast<uInt>(data.size()));
    std::vector<unsigned char> tail;
    put_u32_be(tail, static_cast<std::uint32_t>(crc));
    f.write(reinterpret_cast<const char*>(tail.data()), 4);
}

}  // namespace

void write_png(const Image& img, const std::string& path) {
    if (img.width < 1 || img.height < 1)
        throw Error(ErrorCode::dimension_error, "write_png: empty image");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorCode::format_error, "cannot open for write: " + path);
    static const unsigned char sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    f.write(reinterpret_cast<const char*>(sig), 8);

    std::vector<unsigned char> ihdr;
    put_u32_be(ihdr, static_cast<std::uint32_t>(img.width));
    put_u32_be(ihdr, static_cast<std::uint32_t>(img.height));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(2);  // truecolor
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    png_chunk(f, "IHDR", ihdr);

    // filter byte 0 per scanline
    std::vector<unsigned char> raw;
    raw.reserve(static_cast<size_t>(img.height) * (img.width * 3 + 1));
    for (long y = 0; y < img.height; ++y) {
        raw.push_back(0);
        raw.insert(raw.end(), img.rgb.begin() + y * img.width * 3,
                   img.rgb.begin() + (y + 1) * img.width * 3);
    }
    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<unsigned char> idat(bound);
    if (compress2(idat.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw Error(ErrorCode::format_error, "write_png: deflate failed");
    idat.resize(bound);
    png_chunk(f, "IDAT", idat);
    png_chunk(f, "IEND", {});
    if (!f) throw Error(ErrorCode::format_error, "write failed: " + path);
}

namespace {

// 6x7x6 color cube palette, 252 entries
unsigned char quantize(unsigned char r, unsigned char g, unsigned char b) {
    const int qr = (r * 6) / 256, qg = (g * 7) / 256, qb = (b * 6) / 256;
    return static_cast<unsigned char>((qr * 7 + qg) * 6 + qb);
}

void fill_palette(std::vector<unsigned char>& pal) {
    pal.assign(256 * 3, 0);
    for (int qr = 0; qr < 6; ++qr)
        for (int qg = 0; qg < 7; ++qg)
            for (int qb = 0; qb < 6; ++qb) {
                const int i = (qr * 7 + qg) * 6 + qb;
                pal[i * 3 + 0] = static_cast<unsigned char>(qr * 255 / 5);
                pal[i * 3 + 1] = static_cast<unsigned char>(qg * 255 / 6);
                pal[i * 3 + 2] = static_cast<unsigned char>(qb * 255 / 5);
            }
}

// standard GIF LZW with 8-bit codes
class LzwEncoder {
public:
    explicit LzwEncoder(std::vector<unsigned char>& out) : out_(out) {}

    void encode(const std::vector<unsigned char>& pixels) {
        out_.push_back(8);  // minimum code size
        reset_table();
        emit(clear_);
        int prefix = -1;
        for (unsigned char p : pixels) {
            if (prefix < 0) {
                prefix = p;
                continue;
            }
            const std::uint32_t key = (static_cast<std::uint32_t>(prefix) << 8) | p;
            auto it = table_.find(key);
            if (it != table_.end()) {
                prefix = it->second;
            } else {
                emit(prefix);
                if (next_ < 4096) {
                    table_[key] = next_++;
                    if (next_ - 1 == (1 << width_) && width_ < 12) ++width_;
                } else {
                    emit(clear_);
                    reset_table();
                }
                prefix = p;
            }
        }
        if (prefix >= 0) emit(prefix);
        emit(eoi_);
        flush_bits();
        flush_block();
        out_.push_back(0);  // block terminator
    }

private:
    void reset_table() {
        table_.clear();
        next_ = eoi_ + 1;
        width_ = 9;
    }

    void emit(int code) {
        bits_ |= static_cast<std::uint32_t>(code) << nbits_;
        nbits_ += width_;
        while (nbits_ >= 8) {
            block_.push_back(static_cast<unsigned char>(bits_ & 0xff));
            bits_ >>= 8;
            nbits_ -= 8;
            if (block_.size() == 255) flush_block();
        }
    }

    void flush_bits() {
        if (nbits_ > 0) {
            block_.push_back(static_cast<unsigned char>(bits_ & 0xff));
            bits_ = 0;
            nbits_ = 0;
            if (block_.size() == 255) flush_block();
        }
    }

    void flush_block() {
        if (block_.empty()) return;
        out_.push_back(static_cast<unsigned char>(block_.size()));
        out_.insert(out_.end(), block_.begin(), block_.end());
        block_.clear();
    }

    std::vector<unsigned char>& out_;
    std::map<std::uint32_t, int> table_;
    const int clear_ = 256, eoi_ = 257;
    int next_ = 258;
    int width_ = 9;
    std::uint32_t bits_ = 0;
    int nbits_ = 0;
    std::vector<unsigned char> block_;
};

void put_u16_le(std::vector<unsigned char>& out, int v) {
    out.push_back(static_cast<unsigned char>(v & 0xff));
    out.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
}

}  // namespace

void write_gif(const std::vector<Image>& frames, const std::string& path, int delay_cs) {
    if (frames.empty()) throw Error(ErrorCode::empty_set, "write_gif: no frames");
    const long W = frames[0].width, H = frames[0].height;
    for (const auto& f : frames)
        if (f.width != W || f.height != H)
            throw Error(ErrorCode::shape_error, "write_gif: frame size mismatch");

    std::vector<unsigned char> out;
    out.insert(out.end(), {'G', 'I', 'F', '8', '9', 'a'});
    put_u16_le(out, static_cast<int>(W));
    put_u16_le(out, static_cast<int>(H));
    out.push_back(0xf7);  // global color table, 256 entries, 8-bit color
    out.push_back(0);     // background
    out.push_back(0);     // aspect
    std::vector<unsigned char> pal;
    fill_palette(pal);
    out.insert(out.end(), pal.begin(), pal.end());

    // netscape loop extension
    out.insert(out.end(), {0x21, 0xff, 0x0b});
    const char* ns = "NETSCAPE2.0";
    out.insert(out.end(), ns, ns + 11);
    out.insert(out.end(), {0x03, 0x01, 0x00, 0x00, 0x00});

    for (const auto& img : frames) {
        out.insert(out.end(), {0x21, 0xf9, 0x04, 0x04});
        put_u16_le(out, delay_cs);
        out.push_back(0);  // transparent index
        out.push_back(0);  // terminator
        out.push_back(0x2c);
        put_u16_le(out, 0);
        put_u16_le(out, 0);
        put_u16_le(out, static_cast<int>(W));
        put_u16_le(out, static_cast<int>(H));
        out.push_back(0);  // no local color table

        std::vector<unsigned char> pixels(static_cast<size_t>(W * H));
        for (long i = 0; i < W * H; ++i)
            pixels[i] = quantize(img.rgb[i * 3], img.rgb[i * 3 + 1], img.rgb[i * 3 + 2]);
        LzwEncoder enc(out);
        enc.encode(pixels);
    }
    out.push_back(0x3b);  // trailer

    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorCode::format_error, "cannot open for write: " + path);
    f.write(reinterpret_cast<const char*>(out.data()), out.size());
    if (!f) throw Error(ErrorCode::format_error, "write failed: " + path);
}

Image frame_to_image(const VideoTensor& video01, long t, long upscale) {
    if (t < 0 || t >= video01.frames())
        throw Error(ErrorCode::range_error, "frame_to_image: frame index out of range");
    if (upscale < 1) throw Error(ErrorCode::config_error, "frame_to_image: bad upscale");
    const long C = video01.channels(), H = video01.height(), W = video01.width();
    Image img(W * upscale, H * upscale);
    for (long y = 0; y < H * upscale; ++y)
        for (long x = 0; x < W * upscale; ++x) {
            const long h = y / upscale, w = x / upscale;
            unsigned char px[3];
            for (int c = 0; c < 3; ++c) {
                const long src = C == 3 ? c : 0;
                const double v = std::clamp(video01.at(src, t, h, w), 0.0, 1.0);
                px[c] = static_cast<unsigned char>(std::lround(v * 255.0));
            }
            img.set(x, y, px[0], px[1], px[2]);
        }
    return img;
}

namespace {

void draw_line(Image& img, double x0, double y0, double x1, double y1, unsigned char r,
               unsigned char g, unsigned char b) {
    const double dx = x1 - x0, dy = y1 - y0;
    const long steps = std::max(2L, static_cast<long>(std::ceil(std::max(std::fabs(dx),
                                                                         std::fabs(dy)))) + 1);
    for (long i = 0; i < steps; ++i) {
        const double a = static_cast<double>(i) / (steps - 1);
        img.set(static_cast<long>(std::lround(x0 + a * dx)),
                static_cast<long>(std::lround(y0 + a * dy)), r, g, b);
    }
}

}  // namespace

Image line_plot(const std::vector<Series>& series, long width, long height) {
    if (series.empty()) throw Error(ErrorCode::empty_set, "line_plot: no series");
    Image img(width, height);
    const long m = 24;  // margin
    // frame
    draw_line(img, m, m, width - m, m, 0, 0, 0);
    draw_line(img, m, height - m, width - m, height - m, 0, 0, 0);
    draw_line(img, m, m, m, height - m, 0, 0, 0);
    draw_line(img, width - m, m, width - m, height - m, 0, 0, 0);

    double lo = 1e300, hi = -1e300;
    size_t longest = 0;
    for (const auto& s : series) {
        longest = std::max(longest, s.y.size());
        for (double v : s.y)
            if (std::isfinite(v)) {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
    }
    if (longest < 1 || lo > hi) return img;
    if (hi - lo < 1e-12) {
        hi += 1.0;
        lo -= 1.0;
    }

    for (const auto& s : series) {
        const long n = static_cast<long>(s.y.size());
        for (long i = 0; i + 1 < n; ++i) {
            if (!std::isfinite(s.y[i]) || !std::isfinite(s.y[i + 1])) continue;
            const double denom = static_cast<double>(std::max<size_t>(longest - 1, 1));
            const double x0 = m + (width - 2.0 * m) * i / denom;
            const double x1 = m + (width - 2.0 * m) * (i + 1) / denom;
            const double y0 = height - m - (height - 2.0 * m) * (s.y[i] - lo) / (hi - lo);
            const double y1 = height - m - (height - 2.0 * m) * (s.y[i + 1] - lo) / (hi - lo);
            draw_line(img, x0, y0, x1, y1, s.r, s.g, s.b);
        }
    }
    return img;
}

Image scatter_plot(const std::vector<ScatterPoint>& points, long width, long height) {
    if (points.empty()) throw Error(ErrorCode::empty_set, "scatter_plot: no points");
    Image img(width, height);
    const long m = 24;
    draw_line(img, m, m, width - m, m, 0, 0, 0);
    draw_line(img, m, height - m, width - m, height - m, 0, 0, 0);
    draw_line(img, m, m, m, height - m, 0, 0, 0);
    draw_line(img, width - m, m, width - m, height - m, 0, 0, 0);

    double xlo = 1e300, xhi = -1e300, ylo = 1e300, yhi = -1e300;
    for (const auto& p : points) {
        xlo = std::min(xlo, p.x);
        xhi = std::max(xhi, p.x);
        ylo = std::min(ylo, p.y);
        yhi = std::max(yhi, p.y);
    }
    if (xhi - xlo < 1e-12) {
        xhi += 1.0;
        xlo -= 1.0;
    }
    if (yhi - ylo < 1e-12) {
        yhi += 1.0;
        ylo -= 1.0;
    }
    for (const auto& p : points) {
        const long px = m + static_cast<long>((width - 2.0 * m) * (p.x - xlo) / (xhi - xlo));
        const long py = height - m -
                        static_cast<long>((height - 2.0 * m) * (p.y - ylo) / (yhi - ylo));
        for (long dy = -2; dy <= 2; ++dy)
            for (long dx = -2; dx <= 2; ++dx) img.set(px + dx, py + dy, p.r, p.g, p.b);
    }
    return img;
}

}  // namespace leaps::imageio
