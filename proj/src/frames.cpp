#include "evseq/frames.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "binary_io.hpp"
#include "evseq/error.hpp"
#include "evseq/parallel.hpp"

namespace evseq {

void FrameSequence::check_uniform() const {
    for (const auto& f : frames) {
        if (f.width != width() || f.height != height() ||
            f.pixels.size() != static_cast<std::size_t>(f.width) * f.height) {
            throw ShapeError("frames in a sequence must share one shape");
        }
    }
}

FrameSequence accumulate_frames(const EventStream& stream, std::uint32_t window_us,
                                const AccumulateOptions& options) {
    if (window_us == 0) throw ShapeError("window_us must be positive");
    if (stream.empty()) throw EmptyStreamError("cannot accumulate an empty event stream");

    const auto& events = stream.events();
    const std::int64_t origin = events.front().t;
    const auto n_frames =
        static_cast<std::size_t>((events.back().t - origin) / window_us) + 1;

    FrameSequence seq;
    seq.frame_period_us = window_us;
    seq.origin_us = origin;
    seq.frames.assign(n_frames, Image(stream.sensor_width(), stream.sensor_height()));

    parallel_for(n_frames, options.threads, [&](std::size_t k) {
        const std::int64_t lo = origin + static_cast<std::int64_t>(k) * window_us;
        const std::int64_t hi = lo + window_us;
        auto first = std::lower_bound(events.begin(), events.end(), lo,
                                      [](const Event& e, std::int64_t t) { return e.t < t; });
        Image& img = seq.frames[k];
        for (auto it = first; it != events.end() && it->t < hi; ++it) {
            img.at(it->x, it->y) += options.absolute ? 1.0 : static_cast<double>(it->polarity);
        }
        if (options.clip > 0.0) {
            for (double& p : img.pixels) p = std::clamp(p, -options.clip, options.clip);
        }
    });
    return seq;
}

Image downsample(const Image& frame, int out_width, int out_height) {
    if (out_width <= 0 || out_height <= 0 || frame.width % out_width != 0 ||
        frame.height % out_height != 0) {
        throw ShapeError("cannot downsample " + std::to_string(frame.width) + "x" +
                         std::to_string(frame.height) + " to " + std::to_string(out_width) +
                         "x" + std::to_string(out_height));
    }
    const int bw = frame.width / out_width;
    const int bh = frame.height / out_height;
    const double area = static_cast<double>(bw) * bh;
    Image out(out_width, out_height);
    for (int oy = 0; oy < out_height; ++oy) {
        for (int ox = 0; ox < out_width; ++ox) {
            double sum = 0.0;
            for (int y = oy * bh; y < (oy + 1) * bh; ++y) {
                for (int x = ox * bw; x < (ox + 1) * bw; ++x) sum += frame.at(x, y);
            }
            out.at(ox, oy) = sum / area;
        }
    }
    return out;
}

Image patch_normalize(const Image& frame, int patch_size) {
    if (patch_size <= 0 || frame.width % patch_size != 0 || frame.height % patch_size != 0) {
        throw ShapeError("image " + std::to_string(frame.width) + "x" +
                         std::to_string(frame.height) + " not divisible into " +
                         std::to_string(patch_size) + "-pixel patches");
    }
    const double count = static_cast<double>(patch_size) * patch_size;
    Image out(frame.width, frame.height);
    for (int py = 0; py < frame.height; py += patch_size) {
        for (int px = 0; px < frame.width; px += patch_size) {
            double sum = 0.0;
            for (int y = py; y < py + patch_size; ++y)
                for (int x = px; x < px + patch_size; ++x) sum += frame.at(x, y);
            const double mean = sum / count;
            double ss = 0.0;
            for (int y = py; y < py + patch_size; ++y) {
                for (int x = px; x < px + patch_size; ++x) {
                    const double d = frame.at(x, y) - mean;
                    ss += d * d;
                }
            }
            const double sd = std::sqrt(ss / count);
            for (int y = py; y < py + patch_size; ++y) {
                for (int x = px; x < px + patch_size; ++x) {
                    out.at(x, y) = sd < 1e-12 ? 0.0 : (frame.at(x, y) - mean) / sd;
                }
            }
        }
    }
    return out;
}

FrameSequence prepare_frames(const FrameSequence& frames, const FrameParams& params,
                             int threads) {
    frames.check_uniform();
    FrameSequence out;
    out.frame_period_us = frames.frame_period_us;
    out.origin_us = frames.origin_us;
    out.frames.resize(frames.size());
    parallel_for(frames.size(), threads, [&](std::size_t k) {
        Image img = downsample(frames.frames[k], params.out_width, params.out_height);
        out.frames[k] = params.normalize ? patch_normalize(img, params.patch_size) : std::move(img);
    });
    return out;
}

FrameSequence build_frames(const EventStream& stream, const FrameParams& params,
                           const AccumulateOptions& options) {
    if (stream.sensor_width() % params.out_width != 0 ||
        stream.sensor_height() % params.out_height != 0) {
        throw ShapeError("sensor dimensions not divisible by output size");
    }
    return prepare_frames(accumulate_frames(stream, params.window_us, options), params,
                          options.threads);
}

void write_frame_file(const FrameSequence& frames, const std::string& path) {
    frames.check_uniform();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out.write("EVFR", 4);
    detail::put_u32(out, static_cast<std::uint32_t>(frames.size()));
    detail::put_u32(out, static_cast<std::uint32_t>(frames.width()));
    detail::put_u32(out, static_cast<std::uint32_t>(frames.height()));
    detail::put_u32(out, frames.frame_period_us);
    for (const auto& f : frames.frames) {
        for (double p : f.pixels) detail::put_f32(out, static_cast<float>(p));
    }
    if (!out) throw IoError("write failure on " + path);
}

FrameSequence read_frame_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    detail::expect_magic(in, "EVFR", path);
    const auto count = detail::get_u32(in, "frame count");
    const auto width = detail::get_u32(in, "width");
    const auto height = detail::get_u32(in, "height");
    FrameSequence seq;
    seq.frame_period_us = detail::get_u32(in, "frame period");
    if (width > 1u << 16 || height > 1u << 16) throw IoError(path + ": implausible frame size");
    seq.frames.reserve(std::min<std::uint32_t>(count, 1u << 16));
    for (std::uint32_t k = 0; k < count; ++k) {
        Image img(static_cast<int>(width), static_cast<int>(height));
        for (double& p : img.pixels) p = detail::get_f32(in, "frame data");
        seq.frames.push_back(std::move(img));
    }
    return seq;
}

}  // namespace evseq
