#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "evseq/event.hpp"

namespace evseq {

/// Row-major real raster.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<double> pixels;

    Image() = default;
    Image(int w, int h, double fill = 0.0)
        : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

    double& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
    double at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
    std::size_t size() const { return pixels.size(); }

    friend bool operator==(const Image&, const Image&) = default;
};

/// Ordered, equally-shaped rasters sampled at a fixed period. Window k of an
/// accumulated sequence covers [origin_us + k*period, origin_us + (k+1)*period).
struct FrameSequence {
    std::vector<Image> frames;
    std::uint32_t frame_period_us = 0;
    std::int64_t origin_us = 0;

    std::size_t size() const { return frames.size(); }
    bool empty() const { return frames.empty(); }
    int width() const { return frames.empty() ? 0 : frames.front().width; }
    int height() const { return frames.empty() ? 0 : frames.front().height; }

    std::int64_t window_start(std::size_t k) const {
        return origin_us + static_cast<std::int64_t>(k) * frame_period_us;
    }
    std::int64_t window_end(std::size_t k) const { return window_start(k + 1); }

    // Throws ShapeError unless every frame shares the first frame's shape.
    void check_uniform() const;
};

struct AccumulateOptions {
    bool absolute = false;  // accumulate |polarity| instead of polarity
    double clip = 0.0;      // clamp to [-clip, clip] when > 0
    int threads = 1;
};

struct FrameParams {
    std::uint32_t window_us = 10'000;
    int out_width = 16;
    int out_height = 16;
    int patch_size = 8;
    bool normalize = true;
};

FrameSequence accumulate_frames(const EventStream& stream, std::uint32_t window_us,
                                const AccumulateOptions& options = {});

Image downsample(const Image& frame, int out_width, int out_height);

/// Zero mean, unit population std inside each non-overlapping patch. Patches
/// with std below 1e-12 become zeros.
Image patch_normalize(const Image& frame, int patch_size);

/// Downsample and (optionally) patch-normalize every frame.
FrameSequence prepare_frames(const FrameSequence& frames, const FrameParams& params,
                             int threads = 1);

/// Events -> accumulated, downsampled, normalized snapshots.
FrameSequence build_frames(const EventStream& stream, const FrameParams& params,
                           const AccumulateOptions& options = {});

// "EVFR" container: u32 {count, width, height, period_us} then float32 rasters,
// all little-endian.
void write_frame_file(const FrameSequence& frames, const std::string& path);
FrameSequence read_frame_file(const std::string& path);

}  // namespace evseq
