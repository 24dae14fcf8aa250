#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "leaps/video.hpp"

namespace leaps::imageio {

struct Image {
    long width = 0;
    long height = 0;
    std::vector<unsigned char> rgb;  // row-major, 3 bytes per pixel

    Image() = default;
    Image(long w, long h) : width(w), height(h), rgb(static_cast<size_t>(w * h * 3), 255) {}

    void set(long x, long y, unsigned char r, unsigned char g, unsigned char b) {
        if (x < 0 || y < 0 || x >= width || y >= height) return;
        auto* p = rgb.data() + (y * width + x) * 3;
        p[0] = r;
        p[1] = g;
        p[2] = b;
    }
};

void write_png(const Image& img, const std::string& path);

// animated GIF89a, infinite loop; delay in centiseconds
void write_gif(const std::vector<Image>& frames, const std::string& path, int delay_cs = 20);

// one frame of a [0,1] video as an 8-bit image (1 channel replicated, 3 as RGB)
Image frame_to_image(const VideoTensor& video01, long t, long upscale = 1);

struct Series {
    std::string name;
    std::vector<double> y;  // x is the index
    unsigned char r = 0, g = 0, b = 0;
};

Image line_plot(const std::vector<Series>& series, long width = 640, long height = 400);

struct ScatterPoint {
    double x = 0.0, y = 0.0;
    unsigned char r = 0, g = 0, b = 0;
};

Image scatter_plot(const std::vector<ScatterPoint>& points, long width = 480, long height = 480);

}  // namespace leaps::imageio
