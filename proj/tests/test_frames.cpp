#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <random>
#include <tuple>

#include "evseq/error.hpp"
#include "evseq/frames.hpp"

using namespace evseq;

namespace {

EventStream random_stream(std::uint64_t seed, std::size_t n, std::int64_t span_us, int w = 32,
                          int h = 32) {
    std::mt19937_64 rng(seed);
    std::vector<std::int64_t> times(n);
    for (auto& t : times) t = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(span_us));
    std::sort(times.begin(), times.end());
    std::vector<Event> events;
    for (auto t : times) {
        events.push_back(Event{t + 123, static_cast<std::int32_t>(rng() % w),
                               static_cast<std::int32_t>(rng() % h),
                               static_cast<std::int8_t>(rng() % 2 ? 1 : -1)});
    }
    return EventStream(w, h, std::move(events));
}

Image random_image(std::uint64_t seed, int w, int h) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-3.0, 5.0);
    Image img(w, h);
    for (double& p : img.pixels) p = u(rng);
    return img;
}

// Independent block-mean oracle.
Image block_mean_oracle(const Image& in, int ow, int oh) {
    Image out(ow, oh);
    const int bw = in.width / ow, bh = in.height / oh;
    for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
            double s = 0;
            int n = 0;
            for (int dy = 0; dy < bh; ++dy)
                for (int dx = 0; dx < bw; ++dx) {
                    s += in.at(ox * bw + dx, oy * bh + dy);
                    ++n;
                }
            out.at(ox, oy) = s / n;
        }
    return out;
}

}  // namespace

TEST_CASE("half-open windows anchored at the first event") {
    const EventStream s(8, 8, {Event{0, 1, 1, 1}, Event{3000, 2, 2, 1}, Event{9999, 3, 3, -1}});
    auto seq = accumulate_frames(s, 10'000);
    REQUIRE(seq.size() == 1);
    CHECK(seq.frames[0].at(1, 1) == 1.0);
    CHECK(seq.frames[0].at(3, 3) == -1.0);
    CHECK(seq.window_start(0) == 0);
    CHECK(seq.window_end(0) == 10'000);

    const EventStream s2(8, 8, {Event{0, 1, 1, 1}, Event{3000, 2, 2, 1}, Event{9999, 3, 3, -1},
                                Event{10'000, 4, 4, 1}});
    seq = accumulate_frames(s2, 10'000);
    REQUIRE(seq.size() == 2);
    CHECK(seq.frames[1].at(4, 4) == 1.0);

    const EventStream shifted(8, 8, {Event{500, 0, 0, 1}, Event{10'499, 0, 0, 1}, Event{10'500, 0, 0, 1}});
    seq = accumulate_frames(shifted, 10'000);
    CHECK(seq.size() == 2);
    CHECK(seq.origin_us == 500);
    CHECK(seq.frames[0].at(0, 0) == 2.0);
}

TEST_CASE("one second at 10 ms windows gives 100 frames") {
    const auto s = random_stream(3, 20'000, 999'000);
    std::vector<Event> ev = s.events();
    ev.front().t = 0;
    ev.push_back(Event{999'999, 0, 0, 1});
    const auto seq = accumulate_frames(EventStream(32, 32, ev), 10'000);
    CHECK(seq.size() == 100);
}

TEST_CASE("opposite polarities cancel") {
    const EventStream s(4, 4, {Event{10, 2, 2, 1}, Event{20, 2, 2, -1}});
    CHECK(accumulate_frames(s, 1000).frames[0].at(2, 2) == 0.0);
    AccumulateOptions abs;
    abs.absolute = true;
    CHECK(accumulate_frames(s, 1000, abs).frames[0].at(2, 2) == 2.0);
}

TEST_CASE("clip bounds accumulated values") {
    std::vector<Event> ev;
    for (int i = 0; i < 5; ++i) ev.push_back(Event{i, 0, 0, 1});
    AccumulateOptions o;
    o.clip = 2.0;
    CHECK(accumulate_frames(EventStream(2, 2, ev), 100, o).frames[0].at(0, 0) == 2.0);
}

TEST_CASE("empty stream is rejected") {
    CHECK_THROWS_AS(accumulate_frames(EventStream(8, 8, {}), 10'000), EmptyStreamError);
    CHECK_THROWS_AS(accumulate_frames(EventStream(8, 8, {Event{0, 0, 0, 1}}), 0), ShapeError);
}

TEST_CASE("conservation and partition over random streams") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const auto s = random_stream(seed, 5000, 250'000);
        const auto seq = accumulate_frames(s, 7'000);
        double total = 0.0;
        for (const auto& f : seq.frames)
            for (double p : f.pixels) total += p;
        CHECK(total == static_cast<double>(s.signed_polarity_sum()));

        // Re-collect by the half-open rule and compare per-(window, pixel) signed sums.
        std::map<std::tuple<std::size_t, int, int>, int> expected;
        for (const auto& e : s.events()) {
            const auto k = static_cast<std::size_t>((e.t - s.events().front().t) / 7'000);
            expected[{k, e.x, e.y}] += e.polarity;
        }
        std::size_t nonzero = 0;
        for (std::size_t k = 0; k < seq.size(); ++k)
            for (int y = 0; y < 32; ++y)
                for (int x = 0; x < 32; ++x) {
                    const double v = seq.frames[k].at(x, y);
                    auto it = expected.find({k, x, y});
                    CHECK(v == (it == expected.end() ? 0 : it->second));
                    nonzero += v != 0.0;
                }
        CHECK(nonzero > 0);
    }
}

TEST_CASE("accumulation is identical for any thread count") {
    const auto s = random_stream(11, 20'000, 500'000);
    AccumulateOptions one, many;
    many.threads = 4;
    CHECK(accumulate_frames(s, 3'000, one).frames == accumulate_frames(s, 3'000, many).frames);
}

TEST_CASE("downsample block means") {
    Image constant(128, 128, 2.5);
    const Image d = downsample(constant, 16, 16);
    CHECK(d.width == 16);
    for (double p : d.pixels) CHECK(p == 2.5);

    Image block(128, 128, 0.0);
    for (int y = 16; y < 24; ++y)
        for (int x = 40; x < 48; ++x) block.at(x, y) = 1.0;
    const Image b = downsample(block, 16, 16);
    int ones = 0;
    for (double p : b.pixels) {
        if (p == 1.0) ++ones;
        else CHECK(p == 0.0);
    }
    CHECK(ones == 1);
    CHECK(b.at(5, 2) == 1.0);

    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const Image r = random_image(seed, 16, 16);
        const Image got = downsample(r, 4, 4);
        const Image want = block_mean_oracle(r, 4, 4);
        for (std::size_t i = 0; i < got.size(); ++i) CHECK(got.pixels[i] == doctest::Approx(want.pixels[i]).epsilon(1e-12));
        double in_sum = 0, out_sum = 0;
        for (double p : r.pixels) in_sum += p;
        for (double p : got.pixels) out_sum += p;
        CHECK(std::abs(out_sum * 16 - in_sum) < 1e-9);
    }
    CHECK_THROWS_AS(downsample(Image(10, 10), 3, 5), ShapeError);
}

TEST_CASE("patch normalization values") {
    Image two(2, 2);
    two.pixels = {1, 1, 1, 3};
    const Image n = patch_normalize(two, 2);
    // mean 1.5, population std sqrt(0.75)
    const double sd = std::sqrt(0.75);
    CHECK(n.pixels[0] == doctest::Approx(-0.5 / sd));
    CHECK(n.pixels[0] == doctest::Approx(-0.5774).epsilon(1e-4));
    CHECK(n.pixels[3] == doctest::Approx(1.7321).epsilon(1e-4));

    const Image flat = patch_normalize(Image(8, 8, 4.0), 4);
    for (double p : flat.pixels) CHECK(p == 0.0);
    CHECK_THROWS_AS(patch_normalize(Image(10, 8), 4), ShapeError);
}

TEST_CASE("patch normalization statistics and idempotence") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const Image r = random_image(seed, 32, 24);
        const Image n = patch_normalize(r, 8);
        for (int py = 0; py < 24; py += 8)
            for (int px = 0; px < 32; px += 8) {
                double s = 0, ss = 0;
                for (int y = py; y < py + 8; ++y)
                    for (int x = px; x < px + 8; ++x) s += n.at(x, y);
                const double mean = s / 64;
                for (int y = py; y < py + 8; ++y)
                    for (int x = px; x < px + 8; ++x) ss += (n.at(x, y) - mean) * (n.at(x, y) - mean);
                CHECK(std::abs(mean) < 1e-9);
                CHECK(std::abs(std::sqrt(ss / 64) - 1.0) < 1e-6);
            }
        const Image twice = patch_normalize(n, 8);
        for (std::size_t i = 0; i < n.size(); ++i) CHECK(std::abs(twice.pixels[i] - n.pixels[i]) < 1e-6);
    }
}

TEST_CASE("frame file round trip and header layout") {
    const auto path = (std::filesystem::temp_directory_path() / "evseq_test_frames.evfr").string();
    FrameSequence seq;
    seq.frame_period_us = 10'000;
    for (int k = 0; k < 3; ++k) {
        Image img(4, 2);
        for (std::size_t i = 0; i < img.size(); ++i) img.pixels[i] = 0.25 * (k + 1) * static_cast<double>(i) - 1.0;
        seq.frames.push_back(img);
    }
    write_frame_file(seq, path);

    std::FILE* f = std::fopen(path.c_str(), "rb");
    REQUIRE(f);
    unsigned char head[20];
    REQUIRE(std::fread(head, 1, 20, f) == 20);
    std::fclose(f);
    CHECK(std::string(reinterpret_cast<char*>(head), 4) == "EVFR");
    CHECK(head[4] == 3);
    CHECK(head[8] == 4);
    CHECK(head[12] == 2);
    CHECK((head[16] | head[17] << 8) == 10'000);
    CHECK(std::filesystem::file_size(path) == 20 + 3 * 8 * 4);

    const FrameSequence back = read_frame_file(path);
    CHECK(back.frame_period_us == 10'000);
    CHECK(back.frames == seq.frames);  // values chosen to be exact in float32
    std::filesystem::remove(path);
    CHECK_THROWS_AS(read_frame_file(path), IoError);
}

TEST_CASE("build_frames runs the whole preparation") {
    const auto s = random_stream(5, 30'000, 100'000, 128, 128);
    FrameParams p;
    const auto seq = build_frames(s, p);
    CHECK(seq.width() == 16);
    CHECK(seq.height() == 16);
    CHECK(seq.size() == 10);
    AccumulateOptions threaded;
    threaded.threads = 3;
    CHECK(build_frames(s, p, threaded).frames == seq.frames);
}
