#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "leaps/tensor.hpp"

namespace leaps {

enum class ErrorCode {
    dimension_error,
    nonfinite_error,
    range_error,
    unknown_layer,
    not_bn,
    shape_error,
    length_mismatch,
    zero_norm,
    layer_mismatch,
    empty_stimuli,
    too_few_frames,
    empty_set,
    split_error,
    degenerate_rank,
    format_error,
    version_error,
    divergence_error,
    config_error,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

struct ValueRange {
    double lo = -3.0;
    double hi = 3.0;
};

// C x T x H x W video with declared value range.
struct VideoTensor {
    Tensor data;  // shape {C, T, H, W}
    ValueRange range;

    VideoTensor() = default;
    VideoTensor(Tensor d, ValueRange r) : data(std::move(d)), range(r) {}

    long channels() const { return data.dim(0); }
    long frames() const { return data.dim(1); }
    long height() const { return data.dim(2); }
    long width() const { return data.dim(3); }

    double& at(long c, long t, long h, long w) {
        return data[((c * frames() + t) * height() + h) * width() + w];
    }
    double at(long c, long t, long h, long w) const {
        return data[((c * frames() + t) * height() + h) * width() + w];
    }
};

struct ClassLabel {
    long index = 0;
    std::string name;
};

// throws Error on violation
void validate_video(const VideoTensor& v);

// trilinear, corner-aligned; identity when target sizes match
VideoTensor resample_video(const VideoTensor& v, long t_out, long h_out, long w_out);

// "LEAPSVID" container, little-endian f32 payload
void save_leapsvid(const VideoTensor& v, const std::string& path);
VideoTensor load_leapsvid(const std::string& path, ValueRange range = {});

}  // namespace leaps
