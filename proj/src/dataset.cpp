#include "leaps/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "leaps/rng.hpp"

namespace leaps::data {

const char* const kClassNames[6] = {
    "square_right", "square_left", "circle_up",
    "circle_down",  "square_growing", "square_rotating",
};

namespace {

struct ShapeFrame {
    double cx, cy;     // center, pixel coords
    double half;       // half-size (square) or radius (circle)
    double theta;      // rotation, radians
    bool circle;
};

// soft-edged coverage in [0,1] at pixel center (px, py)
double coverage(const ShapeFrame& s, long px, long py) {
    const double dx = px + 0.5 - s.cx;
    const double dy = py + 0.5 - s.cy;
    double dist;
    if (s.circle) {
        dist = std::sqrt(dx * dx + dy * dy);
    } else {
        const double c = std::cos(s.theta), sn = std::sin(s.theta);
        const double u = c * dx + sn * dy;
        const double v = -sn * dx + c * dy;
        dist = std::max(std::fabs(u), std::fabs(v));
    }
    return std::clamp(s.half + 0.5 - dist, 0.0, 1.0);
}

// accelerating cumulative displacement: per-frame step grows linearly
std::vector<double> displacement_profile(long T, double base_speed) {
    std::vector<double> d(T, 0.0);
    for (long t = 1; t < T; ++t) {
        const double frac = T > 2 ? static_cast<double>(t - 1) / (T - 2) : 0.0;
        d[t] = d[t - 1] + base_speed * (0.5 + frac);
    }
    return d;
}

void render_frames(const SyntheticVideoSpec& spec, const std::vector<ShapeFrame>& frames,
                   const double bg[3], const double fg[3], Rng& rng, VideoTensor& out) {
    for (long t = 0; t < spec.frames; ++t) {
        for (long h = 0; h < spec.height; ++h) {
            for (long w = 0; w < spec.width; ++w) {
                const double a = coverage(frames[t], w, h);
                for (long c = 0; c < spec.channels; ++c) {
                    double v = bg[c] * (1.0 - a) + fg[c] * a;
                    v += spec.noise_sigma * rng.gaussian();
                    out.at(c, t, h, w) = std::clamp(v, 0.0, 1.0);
                }
            }
        }
    }
}

}  // namespace

VideoTensor render_clip(const SyntheticVideoSpec& spec, long label, std::uint64_t clip_seed) {
    if (label < 0 || label >= spec.num_classes)
        throw Error(ErrorCode::range_error, "render_clip: label out of range");
    Rng rng = Rng::for_stream(clip_seed, static_cast<std::uint64_t>(label) + 1);
    const long T = spec.frames, H = spec.height, W = spec.width;

    double bg[3], fg[3];
    for (int c = 0; c < 3; ++c) bg[c] = rng.uniform(0.0, 0.25);
    for (int c = 0; c < 3; ++c) fg[c] = rng.uniform(0.55, 1.0);

    const double half = rng.uniform(4.0, 7.0);
    const auto disp = displacement_profile(T, spec.motion_speed);
    const double total = disp.back();

    std::vector<ShapeFrame> frames(T);
    const bool reversed = (label == kSquareLeft || label == kCircleDown);
    const long motion_label = reversed ? label - 1 : label;

    switch (motion_label) {
        case kSquareRight: {
            const double cy = rng.uniform(half + 1.0, H - half - 1.0);
            const double x0 = rng.uniform(half + 1.0, W - half - 1.0 - total);
            for (long t = 0; t < T; ++t)
                frames[t] = {x0 + disp[t], cy, half, 0.0, false};
            break;
        }
        case kCircleUp: {
            const double cx = rng.uniform(half + 1.0, W - half - 1.0);
            const double y0 = rng.uniform(half + 1.0 + total, H - half - 1.0);
            for (long t = 0; t < T; ++t)
                frames[t] = {cx, y0 - disp[t], half, 0.0, true};
            break;
        }
        case kSquareGrowing: {
            const double cx = rng.uniform(0.35 * W, 0.65 * W);
            const double cy = rng.uniform(0.35 * H, 0.65 * H);
            const double h0 = rng.uniform(2.5, 4.0);
            const double rate = rng.uniform(0.9, 1.3);
            for (long t = 0; t < T; ++t)
                frames[t] = {cx, cy, h0 + rate * t, 0.0, false};
            break;
        }
        case kSquareRotating: {
            const double cx = rng.uniform(0.35 * W, 0.65 * W);
            const double cy = rng.uniform(0.35 * H, 0.65 * H);
            const double omega = rng.uniform(0.26, 0.52) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
            for (long t = 0; t < T; ++t)
                frames[t] = {cx, cy, half, omega * t, false};
            break;
        }
        default:
            throw Error(ErrorCode::range_error, "render_clip: unhandled class");
    }
    if (reversed) std::reverse(frames.begin(), frames.end());

    Tensor data({spec.channels, T, H, W});
    VideoTensor clip(std::move(data), {0.0, 1.0});
    render_frames(spec, frames, bg, fg, rng, clip);
    return clip;
}

long label_clip(const VideoTensor& raw) {
    const long T = raw.frames(), H = raw.height(), W = raw.width(), C = raw.channels();
    if (T < 2) throw Error(ErrorCode::too_few_frames, "label_clip: need at least 2 frames");

    // foreground = pixels brighter than the frame's mid-luminance; the shape is
    // always rendered brighter than the background
    std::vector<double> cx(T), cy(T), mass(T);
    for (long t = 0; t < T; ++t) {
        double lmin = 1e9, lmax = -1e9;
        Tensor lum({H, W});
        for (long h = 0; h < H; ++h)
            for (long w = 0; w < W; ++w) {
                double l = 0.0;
                for (long c = 0; c < C; ++c) l += raw.at(c, t, h, w);
                l /= C;
                lum[h * W + w] = l;
                lmin = std::min(lmin, l);
                lmax = std::max(lmax, l);
            }
        const double thresh = 0.5 * (lmin + lmax);
        double sx = 0, sy = 0, sm = 0;
        for (long h = 0; h < H; ++h)
            for (long w = 0; w < W; ++w)
                if (lum[h * W + w] > thresh) {
                    sx += w + 0.5;
                    sy += h + 0.5;
                    sm += 1.0;
                }
        if (sm < 1.0) sm = 1.0;
        cx[t] = sx / sm;
        cy[t] = sy / sm;
        mass[t] = sm;
    }

    const double dx = cx[T - 1] - cx[0];
    const double dy = cy[T - 1] - cy[0];
    const double growth = mass[T - 1] / std::max(mass[0], 1.0);

    if (growth > 2.0) return kSquareGrowing;
    if (std::fabs(dx) >= 4.0 && std::fabs(dx) >= std::fabs(dy))
        return dx > 0 ? kSquareRight : kSquareLeft;
    if (std::fabs(dy) >= 4.0)
        return dy < 0 ? kCircleUp : kCircleDown;
    return kSquareRotating;
}

VideoTensor Dataset::destandardize(const VideoTensor& v) const {
    Tensor out = v.data;
    const long per = v.frames() * v.height() * v.width();
    for (long c = 0; c < v.channels(); ++c)
        for (long i = 0; i < per; ++i) {
            double& x = out[c * per + i];
            x = std::clamp(x * channel_std[c] + channel_mean[c], 0.0, 1.0);
        }
    return VideoTensor(std::move(out), {0.0, 1.0});
}

Dataset generate_dataset(const SyntheticVideoSpec& spec, std::uint64_t seed,
                         long n_train, long n_val) {
    if (n_train < 1 || n_val < 1)
        throw Error(ErrorCode::config_error, "generate_dataset: need train and val clips");
    Dataset ds;
    ds.spec = spec;

    // balanced class counts, order shuffled per seed
    Rng pick = Rng::for_stream(seed, 0);
    std::vector<long> labels(n_train + n_val);
    for (long i = 0; i < n_train + n_val; ++i) labels[i] = i % spec.num_classes;
    for (long i = n_train + n_val - 1; i > 0; --i)
        std::swap(labels[i], labels[pick.uniform_int(0, i)]);

    std::vector<VideoTensor> raw_train, raw_val;
    std::vector<long> lab_train, lab_val;
    for (long i = 0; i < n_train + n_val; ++i) {
        const long label = labels[i];
        const std::uint64_t clip_seed = Rng(seed).derive(static_cast<std::uint64_t>(i) + 17);
        VideoTensor clip = render_clip(spec, label, clip_seed);
        if (i < n_train) {
            raw_train.push_back(std::move(clip));
            lab_train.push_back(label);
        } else {
            raw_val.push_back(std::move(clip));
            lab_val.push_back(label);
        }
    }

    // per-channel standardization stats from the training split only
    const long per = spec.frames * spec.height * spec.width;
    for (long c = 0; c < spec.channels; ++c) {
        double s = 0.0, s2 = 0.0;
        long n = 0;
        for (const auto& clip : raw_train)
            for (long i = 0; i < per; ++i) {
                const double x = clip.data[c * per + i];
                s += x;
                s2 += x * x;
                ++n;
            }
        const double mean = s / n;
        const double var = std::max(s2 / n - mean * mean, 1e-12);
        ds.channel_mean[c] = mean;
        ds.channel_std[c] = std::sqrt(var);
    }

    auto standardize = [&](const VideoTensor& raw) {
        Tensor out = raw.data;
        for (long c = 0; c < spec.channels; ++c)
            for (long i = 0; i < per; ++i) {
                double& x = out[c * per + i];
                x = std::clamp((x - ds.channel_mean[c]) / ds.channel_std[c], -3.0, 3.0);
            }
        return VideoTensor(std::move(out), {-3.0, 3.0});
    };

    for (size_t i = 0; i < raw_train.size(); ++i)
        ds.train.push_back({standardize(raw_train[i]), lab_train[i]});
    for (size_t i = 0; i < raw_val.size(); ++i)
        ds.val.push_back({standardize(raw_val[i]), lab_val[i]});
    return ds;
}

namespace {

void write_u32(std::ofstream& f, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    f.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::ifstream& f) {
    unsigned char b[4];
    f.read(reinterpret_cast<char*>(b), 4);
    if (!f) throw Error(ErrorCode::format_error, "dataset file truncated");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f64(std::ofstream& f, double v) {
    f.write(reinterpret_cast<const char*>(&v), 8);
}

double read_f64(std::ifstream& f) {
    double v;
    f.read(reinterpret_cast<char*>(&v), 8);
    if (!f) throw Error(ErrorCode::format_error, "dataset file truncated");
    return v;
}

void write_clips(std::ofstream& f, const std::vector<Clip>& clips) {
    write_u32(f, static_cast<std::uint32_t>(clips.size()));
    for (const auto& c : clips) {
        write_u32(f, static_cast<std::uint32_t>(c.label));
        for (long i = 0; i < c.video.data.numel(); ++i) {
            const float x = static_cast<float>(c.video.data[i]);
            f.write(reinterpret_cast<const char*>(&x), 4);
        }
    }
}

std::vector<Clip> read_clips(std::ifstream& f, const SyntheticVideoSpec& spec) {
    const long n = read_u32(f);
    std::vector<Clip> clips;
    clips.reserve(n);
    for (long k = 0; k < n; ++k) {
        Clip c;
        c.label = read_u32(f);
        Tensor data({spec.channels, spec.frames, spec.height, spec.width});
        for (long i = 0; i < data.numel(); ++i) {
            float x;
            f.read(reinterpret_cast<char*>(&x), 4);
            if (!f) throw Error(ErrorCode::format_error, "dataset file truncated");
            data[i] = x;
        }
        c.video = VideoTensor(std::move(data), {-3.0, 3.0});
        clips.push_back(std::move(c));
    }
    return clips;
}

}  // namespace

void save_dataset(const Dataset& ds, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorCode::format_error, "cannot open for write: " + path);
    f.write("LEAPSDST", 8);
    write_u32(f, 1);
    write_u32(f, static_cast<std::uint32_t>(ds.spec.num_classes));
    write_u32(f, static_cast<std::uint32_t>(ds.spec.channels));
    write_u32(f, static_cast<std::uint32_t>(ds.spec.frames));
    write_u32(f, static_cast<std::uint32_t>(ds.spec.height));
    write_u32(f, static_cast<std::uint32_t>(ds.spec.width));
    write_f64(f, ds.spec.motion_speed);
    write_f64(f, ds.spec.noise_sigma);
    for (int c = 0; c < 3; ++c) write_f64(f, ds.channel_mean[c]);
    for (int c = 0; c < 3; ++c) write_f64(f, ds.channel_std[c]);
    write_clips(f, ds.train);
    write_clips(f, ds.val);
    if (!f) throw Error(ErrorCode::format_error, "write failed: " + path);
}

Dataset load_dataset(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorCode::format_error, "cannot open: " + path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, "LEAPSDST", 8) != 0)
        throw Error(ErrorCode::format_error, "bad dataset magic");
    if (read_u32(f) != 1) throw Error(ErrorCode::version_error, "unsupported dataset version");
    Dataset ds;
    ds.spec.num_classes = read_u32(f);
    ds.spec.channels = read_u32(f);
    ds.spec.frames = read_u32(f);
    ds.spec.height = read_u32(f);
    ds.spec.width = read_u32(f);
    ds.spec.motion_speed = read_f64(f);
    ds.spec.noise_sigma = read_f64(f);
    for (int c = 0; c < 3; ++c) ds.channel_mean[c] = read_f64(f);
    for (int c = 0; c < 3; ++c) ds.channel_std[c] = read_f64(f);
    ds.train = read_clips(f, ds.spec);
    ds.val = read_clips(f, ds.spec);
    return ds;
}

}  // namespace leaps::data
