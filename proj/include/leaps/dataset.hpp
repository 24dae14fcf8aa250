#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "leaps/video.hpp"

namespace leaps::data {

// Moving-shapes classes. Left/down movers are constructed as time reversals
// of right/up movers, so no single frame separates the members of a pair.
enum ClassId : long {
    kSquareRight = 0,
    kSquareLeft = 1,
    kCircleUp = 2,
    kCircleDown = 3,
    kSquareGrowing = 4,
    kSquareRotating = 5,
};

extern const char* const kClassNames[6];

struct SyntheticVideoSpec {
    long num_classes = 6;
    long channels = 3;
    long frames = 8;
    long height = 32;
    long width = 32;
    double motion_speed = 2.0;  // pixels/frame, base of the accelerating profile
    double noise_sigma = 0.02;
};

struct Clip {
    VideoTensor video;  // standardized
    long label = 0;
};

struct Dataset {
    SyntheticVideoSpec spec;
    std::vector<Clip> train;
    std::vector<Clip> val;
    std::array<double, 3> channel_mean{};  // standardization stats from train
    std::array<double, 3> channel_std{};
    ValueRange range{-3.0, 3.0};

    VideoTensor destandardize(const VideoTensor& v) const;  // back to [0,1]
};

// raw clip in [0,1], before standardization
VideoTensor render_clip(const SyntheticVideoSpec& spec, long label, std::uint64_t clip_seed);

// the generator's own labeler, on a raw [0,1] clip
long label_clip(const VideoTensor& raw);

Dataset generate_dataset(const SyntheticVideoSpec& spec, std::uint64_t seed,
                         long n_train, long n_val);

void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace leaps::data
