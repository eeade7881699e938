#include "evseq/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>

#include "evseq/error.hpp"

namespace evseq {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

double unit_uniform(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double standard_normal(std::mt19937_64& rng) {
    const double u1 = 1.0 - unit_uniform(rng);  // (0, 1]
    const double u2 = unit_uniform(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

// cum[m] = displacement in pixels at the start of millisecond m.
std::vector<double> cumulative_offsets(const SpeedProfile& profile) {
    std::vector<double> cum(profile.px_per_s.size() + 1, 0.0);
    for (std::size_t m = 0; m < profile.px_per_s.size(); ++m) {
        cum[m + 1] = cum[m] + profile.px_per_s[m] / 1000.0;
    }
    return cum;
}

double offset_from(const std::vector<double>& cum, const std::vector<double>& speed, double t_us) {
    if (t_us <= 0.0) return 0.0;
    const double ms = t_us / 1000.0;
    const auto m = static_cast<std::size_t>(std::floor(ms));
    if (m >= speed.size()) return cum.back();
    return cum[m] + speed[m] * (t_us - static_cast<double>(m) * 1000.0) / 1e6;
}

}  // namespace

SpeedProfile SpeedProfile::constant(double speed, std::int64_t duration_ms) {
    return SpeedProfile{std::vector<double>(static_cast<std::size_t>(std::max<std::int64_t>(duration_ms, 0)), speed)};
}

double SpeedProfile::offset_at(double t_us) const {
    return offset_from(cumulative_offsets(*this), px_per_s, t_us);
}

double SpeedProfile::total_offset() const { return cumulative_offsets(*this).back(); }

bool texture_on(std::uint64_t seed, std::int64_t cell_x, std::int64_t cell_y, double density) {
    const std::uint64_t key = splitmix64(static_cast<std::uint64_t>(cell_x) * 0xD1B54A32D192ED03ull ^
                                         static_cast<std::uint64_t>(cell_y) * 0xABC98388FB8FAC03ull);
    const std::uint64_t h = splitmix64(seed ^ key);
    return static_cast<double>(h >> 11) * 0x1.0p-53 < density;
}

EventStream synth_event_stream(std::uint64_t seed, std::int64_t duration_us,
                               const SpeedProfile& profile, const TextureParams& texture) {
    if (!(texture.density > 0.0 && texture.density < 1.0)) {
        throw RangeError("texture density must be in (0, 1)");
    }
    if (texture.cell_size < 1) throw RangeError("texture cell size must be >= 1");
    if (duration_us < 0) throw RangeError("duration must be >= 0");
    const auto needed_ms = static_cast<std::size_t>((duration_us + 999) / 1000);
    if (profile.px_per_s.size() < needed_ms) {
        throw RangeError("speed profile covers " + std::to_string(profile.px_per_s.size()) +
                         " ms, need " + std::to_string(needed_ms));
    }
    for (double s : profile.px_per_s) {
        if (!(s >= 0.0) || !std::isfinite(s)) throw RangeError("speeds must be finite and >= 0");
    }

    const auto& speed = profile.px_per_s;
    const std::vector<double> cum = cumulative_offsets(profile);
    const double total = offset_from(cum, speed, static_cast<double>(duration_us));
    const int c = texture.cell_size;
    const int width = texture.sensor_width;
    const int height = texture.sensor_height;

    // Time at which the displacement first reaches u (> 0, <= total).
    auto crossing_time = [&](double u) {
        const auto it = std::lower_bound(cum.begin() + 1, cum.end(), u);
        const auto m = static_cast<std::size_t>(it - cum.begin()) - 1;
        const double t = static_cast<double>(m) * 1000.0 + (u - cum[m]) * 1e6 / speed[m];
        return std::min(t, static_cast<double>(m + 1) * 1000.0);
    };

    const auto max_cell = static_cast<std::int64_t>(std::floor((width + total) / c)) + 1;
    std::vector<Event> events;
    std::vector<char> row_cells(static_cast<std::size_t>(max_cell) + 1);
    for (int cy = 0; cy * c < height; ++cy) {
        for (std::int64_t m = 0; m <= max_cell; ++m) {
            row_cells[static_cast<std::size_t>(m)] = texture_on(seed, m - 1, cy, texture.density);
        }
        // row_cells[m] holds cell m-1, so cell m is row_cells[m + 1].
        for (int y = cy * c; y < std::min(height, (cy + 1) * c); ++y) {
            for (int x = 0; x < width; ++x) {
                const std::int64_t m_lo = x / c + 1;
                const auto m_hi = static_cast<std::int64_t>(std::floor((x + total) / c));
                for (std::int64_t m = m_lo; m <= m_hi; ++m) {
                    const bool before = row_cells[static_cast<std::size_t>(m)];
                    const bool after = row_cells[static_cast<std::size_t>(m + 1)];
                    if (before == after) continue;
                    const double u = static_cast<double>(m * c - x);
                    if (u <= 0.0 || u > total) continue;
                    const auto t = static_cast<std::int64_t>(std::llround(crossing_time(u)));
                    if (t >= duration_us) continue;
                    events.push_back(Event{t, x, y, static_cast<std::int8_t>(after ? 1 : -1)});
                }
            }
        }
    }
    std::sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
        if (a.t != b.t) return a.t < b.t;
        if (a.y != b.y) return a.y < b.y;
        if (a.x != b.x) return a.x < b.x;
        return a.polarity < b.polarity;
    });
    return EventStream(width, height, std::move(events));
}

FrameTiming FrameTiming::of(const EventStream& stream, std::uint32_t window_us) {
    if (window_us == 0) throw ShapeError("window_us must be positive");
    if (stream.empty()) throw EmptyStreamError("empty event stream has no frames");
    const auto& ev = stream.events();
    return {ev.front().t, window_us,
            static_cast<std::size_t>((ev.back().t - ev.front().t) / window_us) + 1};
}

namespace {

double window_start(const FrameTiming& timing, std::size_t k) {
    return static_cast<double>(timing.origin_us) +
           static_cast<double>(k) * static_cast<double>(timing.period_us);
}

}  // namespace

std::vector<double> frame_offsets(const SpeedProfile& profile, const FrameTiming& timing) {
    const std::vector<double> cum = cumulative_offsets(profile);
    std::vector<double> out(timing.count);
    for (std::size_t k = 0; k < timing.count; ++k) {
        const double center = window_start(timing, k) + 0.5 * static_cast<double>(timing.period_us);
        out[k] = offset_from(cum, profile.px_per_s, center);
    }
    return out;
}

std::vector<double> frame_speeds(const SpeedProfile& profile, const FrameTiming& timing) {
    const std::vector<double> cum = cumulative_offsets(profile);
    std::vector<double> out(timing.count);
    const double period_s = static_cast<double>(timing.period_us) / 1e6;
    for (std::size_t k = 0; k < timing.count; ++k) {
        const double a = offset_from(cum, profile.px_per_s, window_start(timing, k));
        const double b = offset_from(cum, profile.px_per_s, window_start(timing, k + 1));
        out[k] = (b - a) / period_s;
    }
    return out;
}

GroundTruth truth_from_offsets(std::span<const double> ref_offsets,
                               std::span<const double> query_offsets, int tolerance) {
    GroundTruth truth;
    truth.tolerance = tolerance;
    truth.ref.assign(query_offsets.size(), -1);
    if (ref_offsets.empty()) return truth;
    const double spacing =
        ref_offsets.size() > 1
            ? (ref_offsets.back() - ref_offsets.front()) / static_cast<double>(ref_offsets.size() - 1)
            : 0.0;
    const double lo = ref_offsets.front() - 0.5 * spacing;
    const double hi = ref_offsets.back() + 0.5 * spacing;
    for (std::size_t j = 0; j < query_offsets.size(); ++j) {
        const double q = query_offsets[j];
        if (q < lo || q > hi) continue;
        std::size_t best = 0;
        for (std::size_t i = 1; i < ref_offsets.size(); ++i) {
            if (std::abs(ref_offsets[i] - q) < std::abs(ref_offsets[best] - q)) best = i;
        }
        truth.ref[j] = static_cast<std::int64_t>(best);
    }
    return truth;
}

ImageTraverse synth_image_traverse(std::uint64_t seed, int n_places, int width, int height,
                                   double noise_sigma, double brightness_shift) {
    if (n_places < 2) throw RangeError("need at least 2 places");
    if (width < 1 || height < 1) throw ShapeError("image dimensions must be positive");
    std::mt19937_64 rng(seed);
    ImageTraverse out;
    out.train.frames.reserve(static_cast<std::size_t>(n_places));
    for (int i = 0; i < n_places; ++i) {
        Image noise(width, height);
        for (double& p : noise.pixels) p = unit_uniform(rng);
        Image blurred(width, height);
        for (int y = 0; y < height; ++y) {
            for (int x = 0; x < width; ++x) {
                double sum = 0.0;
                int n = 0;
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int xx = x + dx;
                        const int yy = y + dy;
                        if (xx < 0 || yy < 0 || xx >= width || yy >= height) continue;
                        sum += noise.at(xx, yy);
                        ++n;
                    }
                }
                blurred.at(x, y) = sum / n;
            }
        }
        out.train.frames.push_back(std::move(blurred));
    }

    out.test.frames.reserve(out.train.size());
    for (const auto& img : out.train.frames) {
        double sum = 0.0;
        for (double p : img.pixels) sum += p;
        const double mean = sum / static_cast<double>(img.size());
        double ss = 0.0;
        for (double p : img.pixels) ss += (p - mean) * (p - mean);
        const double sd = std::sqrt(ss / static_cast<double>(img.size()));
        Image test = img;
        for (double& p : test.pixels) {
            p += noise_sigma * sd * standard_normal(rng) + brightness_shift * mean;
        }
        out.test.frames.push_back(std::move(test));
    }

    out.truth.tolerance = 0;
    out.truth.ref.resize(static_cast<std::size_t>(n_places));
    for (int i = 0; i < n_places; ++i) out.truth.ref[static_cast<std::size_t>(i)] = i;
    return out;
}

void write_speed_profile(const SpeedProfile& profile, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << "ms,px_per_s\n";
    char buf[64];
    for (std::size_t m = 0; m < profile.px_per_s.size(); ++m) {
        std::snprintf(buf, sizeof buf, "%.17g", profile.px_per_s[m]);
        out << m << ',' << buf << '\n';
    }
    if (!out) throw IoError("write failure on " + path);
}

SpeedProfile read_speed_profile(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    SpeedProfile profile;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line_no == 1 && line.rfind("ms", 0) == 0) continue;
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw FormatError(line_no, "expected ms,px_per_s");
        try {
            std::size_t used = 0;
            const std::string ms = line.substr(0, comma);
            const std::string v = line.substr(comma + 1);
            const long long m = std::stoll(ms, &used);
            if (used != ms.size()) throw std::invalid_argument(ms);
            const double speed = std::stod(v, &used);
            if (used != v.size()) throw std::invalid_argument(v);
            if (m != static_cast<long long>(profile.px_per_s.size())) {
                throw FormatError(line_no, "ms must be consecutive from 0");
            }
            if (!(speed >= 0.0) || !std::isfinite(speed)) throw FormatError(line_no, "speed must be >= 0");
            profile.px_per_s.push_back(speed);
        } catch (const std::logic_error&) {
            throw FormatError(line_no, "malformed speed row");
        }
    }
    return profile;
}

}  // namespace evseq
