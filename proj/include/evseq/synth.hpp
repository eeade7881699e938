#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "evseq/eval.hpp"
#include "evseq/event.hpp"
#include "evseq/frames.hpp"

namespace evseq {

/// Horizontal camera speed in pixels per second, one entry per millisecond.
struct SpeedProfile {
    std::vector<double> px_per_s;

    static SpeedProfile constant(double speed, std::int64_t duration_ms);

    /// Texture displacement in pixels at time t_us (piecewise-linear integral).
    double offset_at(double t_us) const;
    double total_offset() const;
};

struct TextureParams {
    double density = 0.3;  // fraction of texture cells that are on
    int cell_size = 4;     // texture cell edge in pixels
    int sensor_width = 128;
    int sensor_height = 128;
};

/// Deterministic binary texture over an unbounded horizontal strip.
bool texture_on(std::uint64_t seed, std::int64_t cell_x, std::int64_t cell_y, double density);

/// Scrolls a seeded dot texture across the sensor. A pixel emits +1 when an
/// off->on texture edge reaches it and -1 for on->off, at the analytic
/// crossing time (rounded to the nearest microsecond).
EventStream synth_event_stream(std::uint64_t seed, std::int64_t duration_us,
                               const SpeedProfile& profile, const TextureParams& texture = {});

/// Window layout of an accumulated sequence.
struct FrameTiming {
    std::int64_t origin_us = 0;
    std::uint32_t period_us = 0;
    std::size_t count = 0;

    static FrameTiming of(const FrameSequence& frames) {
        return {frames.origin_us, frames.frame_period_us, frames.size()};
    }
    /// Layout accumulate_frames would produce for this stream.
    static FrameTiming of(const EventStream& stream, std::uint32_t window_us);
};

/// Texture offset at the center of each frame window.
std::vector<double> frame_offsets(const SpeedProfile& profile, const FrameTiming& timing);

/// Mean speed over each frame window.
std::vector<double> frame_speeds(const SpeedProfile& profile, const FrameTiming& timing);

/// Nearest reference frame by texture offset; -1 when the query lies
/// outside the reference coverage.
GroundTruth truth_from_offsets(std::span<const double> ref_offsets,
                               std::span<const double> query_offsets, int tolerance);

struct ImageTraverse {
    FrameSequence train;
    FrameSequence test;
    GroundTruth truth;
};

/// Smoothed-noise place images and a perturbed revisit. Images are returned
/// before patch normalization. `brightness_shift` is a fraction of each
/// image's mean intensity added to the revisit.
ImageTraverse synth_image_traverse(std::uint64_t seed, int n_places, int width = 32,
                                   int height = 24, double noise_sigma = 0.0,
                                   double brightness_shift = 0.0);

// CSV: ms,px_per_s
void write_speed_profile(const SpeedProfile& profile, const std::string& path);
SpeedProfile read_speed_profile(const std::string& path);

}  // namespace evseq
