#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "evseq/error.hpp"
#include "evseq/synth.hpp"

using namespace evseq;

namespace {

// Counts texture transitions seen by each pixel by walking integer texture
// positions, independently of the generator's per-cell edge enumeration.
std::size_t crossing_count_oracle(std::uint64_t seed, double total_offset, const TextureParams& tp) {
    std::size_t count = 0;
    const auto span = static_cast<std::int64_t>(std::floor(total_offset));
    auto on = [&](std::int64_t X, int y) {
        const std::int64_t cx = X >= 0 ? X / tp.cell_size : -((-X + tp.cell_size - 1) / tp.cell_size);
        return texture_on(seed, cx, y / tp.cell_size, tp.density);
    };
    for (int y = 0; y < tp.sensor_height; ++y)
        for (int x = 0; x < tp.sensor_width; ++x)
            for (std::int64_t X = x + 1; X <= x + span; ++X)
                if (on(X - 1, y) != on(X, y)) ++count;
    return count;
}

}  // namespace

TEST_CASE("zero speed produces no events") {
    const auto s = synth_event_stream(1, 500'000, SpeedProfile::constant(0.0, 500));
    CHECK(s.empty());
}

TEST_CASE("event count follows crossing geometry") {
    TextureParams tp;
    tp.cell_size = 4;
    const auto slow = synth_event_stream(3, 1'000'000, SpeedProfile::constant(1000.0, 1000), tp);
    const auto fast = synth_event_stream(3, 1'000'000, SpeedProfile::constant(2000.0, 1000), tp);
    const double ratio = static_cast<double>(fast.size()) / static_cast<double>(slow.size());
    CHECK(ratio == doctest::Approx(2.0).epsilon(0.05));

    // Integral offsets keep the oracle's integer walk exact; the crossing at
    // exactly the final offset lands at t == duration and is excluded.
    TextureParams small = tp;
    small.sensor_width = 32;
    small.sensor_height = 16;
    const auto s = synth_event_stream(5, 100'000, SpeedProfile::constant(500.0, 101), small);
    const std::size_t with_last = crossing_count_oracle(5, 50.0, small);
    const std::size_t without_last = crossing_count_oracle(5, 49.0, small);
    CHECK(s.size() <= with_last);
    CHECK(s.size() >= without_last);
    const auto longer = synth_event_stream(5, 100'001, SpeedProfile::constant(500.0, 101), small);
    CHECK(longer.size() == with_last);
}

TEST_CASE("events are valid, sorted, deterministic") {
    SpeedProfile p;
    for (int m = 0; m < 300; ++m) p.px_per_s.push_back(m < 100 ? 400.0 : (m < 150 ? 0.0 : 250.0));
    const auto a = synth_event_stream(9, 300'000, p);
    const auto b = synth_event_stream(9, 300'000, p);
    CHECK(a == b);
    CHECK(a.size() > 0);
    CHECK_NOTHROW(EventStream(a.sensor_width(), a.sensor_height(), a.events()));
    for (const auto& e : a.events()) {
        CHECK(e.t < 300'000);
        CHECK_FALSE((e.t >= 100'000 && e.t < 150'000));  // camera stopped
    }
    CHECK_FALSE(synth_event_stream(10, 300'000, p) == a);
}

TEST_CASE("first crossing timestamps follow the analytic offset") {
    TextureParams tp;
    tp.sensor_width = 1;
    tp.sensor_height = 1;
    tp.cell_size = 1;
    const auto s = synth_event_stream(2, 1'000'000, SpeedProfile::constant(100.0, 1000), tp);
    // at 100 px/s, edge k px away crosses at k * 10 ms
    for (const auto& e : s.events()) CHECK(e.t % 10'000 == 0);
}

TEST_CASE("generator rejects bad input") {
    CHECK_THROWS_AS(synth_event_stream(1, 10'000, SpeedProfile::constant(10.0, 5)), RangeError);
    TextureParams tp;
    tp.density = 1.0;
    CHECK_THROWS_AS(synth_event_stream(1, 1000, SpeedProfile::constant(10.0, 1), tp), RangeError);
    SpeedProfile neg{{-1.0}};
    CHECK_THROWS_AS(synth_event_stream(1, 1000, neg), RangeError);
}

TEST_CASE("speed profile offsets and frame timing") {
    SpeedProfile p{{1000.0, 0.0, 2000.0}};
    CHECK(p.offset_at(0) == 0.0);
    CHECK(p.offset_at(500) == doctest::Approx(0.5));
    CHECK(p.offset_at(1500) == doctest::Approx(1.0));
    CHECK(p.offset_at(2500) == doctest::Approx(2.0));
    CHECK(p.total_offset() == doctest::Approx(3.0));
    CHECK(p.offset_at(10'000) == doctest::Approx(3.0));

    FrameTiming t{0, 1000, 3};
    const auto speeds = frame_speeds(p, t);
    CHECK(speeds[0] == doctest::Approx(1000.0));
    CHECK(speeds[1] == doctest::Approx(0.0));
    CHECK(speeds[2] == doctest::Approx(2000.0));
    const auto offs = frame_offsets(p, t);
    CHECK(offs[2] == doctest::Approx(2.0));

    const auto path = (std::filesystem::temp_directory_path() / "evseq_speed.csv").string();
    write_speed_profile(p, path);
    CHECK(read_speed_profile(path).px_per_s == p.px_per_s);
    std::filesystem::remove(path);
}

TEST_CASE("ground truth by nearest offset") {
    const std::vector<double> ref{0, 3, 6, 9, 12};
    const std::vector<double> query{0.4, 2.0, 4.4, 4.6, 11.9, 13.4, 14.0, -2.0};
    const auto t = truth_from_offsets(ref, query, 5);
    CHECK(t.ref == std::vector<std::int64_t>{0, 1, 1, 2, 4, 4, -1, -1});
    CHECK(t.tolerance == 5);
}

TEST_CASE("image traverses") {
    const auto same = synth_image_traverse(4, 10, 32, 24, 0.0, 0.0);
    CHECK(same.train.frames == same.test.frames);
    CHECK(same.truth.ref.size() == 10);
    CHECK(same.truth.ref[7] == 7);

    const auto big = synth_image_traverse(4, 555);
    CHECK(big.train.size() == 555);
    CHECK(big.train.width() == 32);
    CHECK(big.train.height() == 24);

    const auto a = synth_image_traverse(6, 20, 32, 24, 0.2, 0.1);
    const auto b = synth_image_traverse(6, 20, 32, 24, 0.2, 0.1);
    CHECK(a.train.frames == b.train.frames);
    CHECK(a.test.frames == b.test.frames);
    CHECK_FALSE(a.test.frames == a.train.frames);
    // training images do not depend on the perturbation
    CHECK(synth_image_traverse(6, 20, 32, 24, 0.0, 0.0).train.frames == a.train.frames);
    CHECK_THROWS_AS(synth_image_traverse(1, 1), RangeError);
}
