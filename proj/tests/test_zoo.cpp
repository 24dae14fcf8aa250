#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "leaps/capture.hpp"
#include "leaps/dataset.hpp"
#include "leaps/nn.hpp"
#include "leaps/train.hpp"
#include "test_util.hpp"

using namespace leaps;
using testutil::fixture;
using testutil::fixture_dataset;

namespace {

VideoTensor reverse_frames(const VideoTensor& v) {
    VideoTensor out = v;
    const long C = v.channels(), T = v.frames(), H = v.height(), W = v.width();
    for (long c = 0; c < C; ++c)
        for (long t = 0; t < T; ++t)
            for (long h = 0; h < H; ++h)
                for (long w = 0; w < W; ++w)
                    out.at(c, t, h, w) = v.at(c, T - 1 - t, h, w);
    return out;
}

VideoTensor permute_frames(const VideoTensor& v, const std::vector<long>& order) {
    VideoTensor out = v;
    for (long c = 0; c < v.channels(); ++c)
        for (long t = 0; t < v.frames(); ++t)
            for (long h = 0; h < v.height(); ++h)
                for (long w = 0; w < v.width(); ++w)
                    out.at(c, t, h, w) = v.at(c, order[t], h, w);
    return out;
}

}  // namespace

TEST_CASE("generator and labeler agree on every class") {
    data::SyntheticVideoSpec spec;
    for (long cls = 0; cls < spec.num_classes; ++cls)
        for (std::uint64_t s = 0; s < 5; ++s) {
            auto raw = render_clip(spec, cls, 1000 * cls + s);
            CHECK(data::label_clip(raw) == cls);
        }
}

TEST_CASE("labeler flips direction under time reversal") {
    data::SyntheticVideoSpec spec;
    const std::array<std::pair<long, long>, 2> pairs = {{
        {data::kSquareRight, data::kSquareLeft},
        {data::kCircleUp, data::kCircleDown},
    }};
    for (auto [fwd, bwd] : pairs)
        for (std::uint64_t s = 0; s < 3; ++s) {
            auto raw = render_clip(spec, fwd, 77 + s);
            CHECK(data::label_clip(reverse_frames(raw)) == bwd);
            auto raw2 = render_clip(spec, bwd, 177 + s);
            CHECK(data::label_clip(reverse_frames(raw2)) == fwd);
        }
}

TEST_CASE("dataset generation is deterministic") {
    data::SyntheticVideoSpec spec;
    auto a = data::generate_dataset(spec, 99, 24, 12);
    auto b = data::generate_dataset(spec, 99, 24, 12);
    REQUIRE(a.train.size() == b.train.size());
    for (std::size_t i = 0; i < a.train.size(); ++i) {
        CHECK(a.train[i].label == b.train[i].label);
        CHECK(a.train[i].video.data.vec() == b.train[i].video.data.vec());
    }
    auto c = data::generate_dataset(spec, 100, 24, 12);
    bool any_diff = false;
    for (std::size_t i = 0; i < a.train.size() && !any_diff; ++i)
        any_diff = a.train[i].video.data.vec() != c.train[i].video.data.vec();
    CHECK(any_diff);
}

TEST_CASE("train split label histogram is balanced within 20 percent") {
    const auto& ds = fixture_dataset();
    REQUIRE(ds.train.size() == 600);
    std::array<long, 6> hist{};
    for (const auto& clip : ds.train) {
        REQUIRE(clip.label >= 0);
        REQUIRE(clip.label < 6);
        ++hist[clip.label];
    }
    for (long k = 0; k < 6; ++k) {
        CHECK(hist[k] >= 80);
        CHECK(hist[k] <= 120);
    }
}

TEST_CASE("train split is standardized per channel") {
    const auto& ds = fixture_dataset();
    const long per = ds.train[0].video.data.numel() / 3;
    for (long c = 0; c < 3; ++c) {
        double sum = 0, sum2 = 0;
        long n = 0;
        for (const auto& clip : ds.train) {
            const double* p = clip.video.data.data() + c * per;
            for (long i = 0; i < per; ++i) {
                sum += p[i];
                sum2 += p[i] * p[i];
            }
            n += per;
        }
        const double mean = sum / n;
        const double var = sum2 / n - mean * mean;
        CHECK(std::fabs(mean) < 0.05);
        CHECK(std::fabs(std::sqrt(var) - 1.0) < 0.05);
    }
    for (const auto& clip : ds.train)
        for (long i = 0; i < clip.video.data.numel(); ++i) {
            CHECK(clip.video.data[i] >= -3.0);
            CHECK(clip.video.data[i] <= 3.0);
        }
}

TEST_CASE("destandardize returns to the unit range") {
    const auto& ds = fixture_dataset();
    auto raw = ds.destandardize(ds.val[0].video);
    for (long i = 0; i < raw.data.numel(); ++i) {
        CHECK(raw.data[i] >= 0.0);
        CHECK(raw.data[i] <= 1.0);
    }
}

TEST_CASE("dataset container round-trips") {
    data::SyntheticVideoSpec spec;
    auto ds = data::generate_dataset(spec, 5, 12, 6);
    data::save_dataset(ds, "rt.leapsdst");
    auto back = data::load_dataset("rt.leapsdst");
    REQUIRE(back.train.size() == ds.train.size());
    REQUIRE(back.val.size() == ds.val.size());
    for (std::size_t i = 0; i < ds.train.size(); ++i) {
        CHECK(back.train[i].label == ds.train[i].label);
        for (long j = 0; j < ds.train[i].video.data.numel(); ++j)
            CHECK(back.train[i].video.data[j] ==
                  static_cast<double>(static_cast<float>(ds.train[i].video.data[j])));
    }
    // clip payloads are f32, the standardization stats stay f64
    for (long c = 0; c < 3; ++c) {
        CHECK(back.channel_mean[c] == ds.channel_mean[c]);
        CHECK(back.channel_std[c] == ds.channel_std[c]);
    }
    std::remove("rt.leapsdst");
}

TEST_CASE("fresh model scores near chance and zero-epoch fit is rejected") {
    const auto& ds = fixture_dataset();
    nn::ToyConv3d model{nn::ConvSpec{}};
    model.init_params(3);
    const double acc = train::evaluate_accuracy(model, ds.val);
    CHECK(acc < 0.5);

    train::TrainConfig cfg;
    cfg.epochs = 0;
    nn::ToyConv3d fresh{nn::ConvSpec{}};
    fresh.init_params(3);
    try {
        train::fit(fresh, ds, cfg, 1);
        FAIL("expected config_error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::config_error);
    }
}

TEST_CASE("trained fixture classifies the validation split") {
    auto model = nn::load_model(fixture("conv_a.leapsmdl"));
    const auto& ds = fixture_dataset();
    CHECK(train::evaluate_accuracy(*model, ds.val) >= 0.95);
}

TEST_CASE("frame shuffling destroys direction classes only") {
    auto model = nn::load_model(fixture("conv_a.leapsmdl"));
    const auto& ds = fixture_dataset();
    std::vector<data::Clip> directional;
    for (const auto& clip : ds.val)
        if (clip.label == data::kSquareRight || clip.label == data::kSquareLeft)
            directional.push_back(clip);
    REQUIRE(directional.size() >= 20);
    CHECK(train::evaluate_accuracy(*model, directional) >= 0.95);

    Rng rng(404);
    std::vector<data::Clip> shuffled = directional;
    for (auto& clip : shuffled) {
        const long T = clip.video.frames();
        std::vector<long> order(T);
        std::iota(order.begin(), order.end(), 0);
        for (long t = T - 1; t > 0; --t)
            std::swap(order[t], order[rng.uniform_int(0, t)]);
        clip.video = permute_frames(clip.video, order);
    }
    CHECK(train::evaluate_accuracy(*model, shuffled) <= 0.6);
}

TEST_CASE("checkpoint round-trip preserves parameters and logits") {
    auto model = nn::load_model(fixture("conv_a.leapsmdl"));
    nn::save_model(*model, "rt.leapsmdl");
    auto back = nn::load_model("rt.leapsmdl");
    CHECK(nn::param_checksum(*model) == nn::param_checksum(*back));

    const auto& clip = fixture_dataset().val[3].video;
    auto a = capture::capture(*model, clip, {}, false);
    auto b = capture::capture(*back, clip, {}, false);
    CHECK(a.logits->value.vec() == b.logits->value.vec());
    std::remove("rt.leapsmdl");
}

TEST_CASE("checkpoint loader rejects truncation and future versions") {
    nn::ToyConv3d model{nn::ConvSpec{}};
    model.init_params(1);
    nn::save_model(model, "bad.leapsmdl");
    const auto size = std::filesystem::file_size("bad.leapsmdl");
    std::filesystem::resize_file("bad.leapsmdl", size - 5);
    try {
        nn::load_model("bad.leapsmdl");
        FAIL("expected format_error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::format_error);
    }

    nn::save_model(model, "bad.leapsmdl");
    std::fstream f("bad.leapsmdl", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(8);
    const unsigned char v9[4] = {9, 0, 0, 0};
    f.write(reinterpret_cast<const char*>(v9), 4);
    f.close();
    try {
        nn::load_model("bad.leapsmdl");
        FAIL("expected version_error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::version_error);
    }
    std::remove("bad.leapsmdl");
}

TEST_CASE("transformer fixture loads and clears chance comfortably") {
    auto model = nn::load_model(fixture("vit.leapsmdl"));
    CHECK(model->kind() == "video_transformer");
    const auto& ds = fixture_dataset();
    CHECK(train::evaluate_accuracy(*model, ds.val) >= 0.8);
}
