#include "evseq/event.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "evseq/error.hpp"

namespace evseq {

namespace {

void check_event(const Event& e, int width, int height, std::size_t line) {
    if (e.x < 0 || e.x >= width || e.y < 0 || e.y >= height) {
        throw BoundsError(line, "event (" + std::to_string(e.x) + "," + std::to_string(e.y) +
                                    ") outside " + std::to_string(width) + "x" +
                                    std::to_string(height) + " sensor");
    }
    if (e.polarity != 1 && e.polarity != -1) {
        throw FormatError(line, "polarity must be +1 or -1");
    }
    if (e.t < 0) {
        throw FormatError(line, "negative timestamp");
    }
}

template <typename Int>
bool parse_field(std::string_view field, Int& out) {
    if (field.empty()) return false;
    const char* first = field.data();
    const char* last = field.data() + field.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc{} && ptr == last;
}

Event parse_line(std::string_view line, std::size_t line_no) {
    std::string_view fields[4];
    std::size_t n = 0;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (n == 4) throw FormatError(line_no, "expected 4 fields");
        if (comma == std::string_view::npos) {
            fields[n++] = line.substr(start);
            break;
        }
        fields[n++] = line.substr(start, comma - start);
        start = comma + 1;
    }
    if (n != 4) throw FormatError(line_no, "expected 4 fields");

    Event e;
    int polarity = 0;
    if (!parse_field(fields[0], e.t)) throw FormatError(line_no, "bad timestamp");
    if (!parse_field(fields[1], e.x)) throw FormatError(line_no, "bad x");
    if (!parse_field(fields[2], e.y)) throw FormatError(line_no, "bad y");
    if (!parse_field(fields[3], polarity) || (polarity != 0 && polarity != 1)) {
        throw FormatError(line_no, "polarity must be 0 or 1");
    }
    if (e.t < 0) throw FormatError(line_no, "negative timestamp");
    e.polarity = polarity == 1 ? 1 : -1;
    return e;
}

}  // namespace

EventStream::EventStream(int sensor_width, int sensor_height, std::vector<Event> events)
    : width_(sensor_width), height_(sensor_height), events_(std::move(events)) {
    if (width_ <= 0 || height_ <= 0) throw ShapeError("sensor dimensions must be positive");
    for (std::size_t i = 0; i < events_.size(); ++i) {
        check_event(events_[i], width_, height_, i + 1);
        if (i > 0 && events_[i].t < events_[i - 1].t) {
            throw OrderError(i + 1, "timestamp decreases");
        }
    }
}

std::int64_t EventStream::signed_polarity_sum() const {
    std::int64_t sum = 0;
    for (const auto& e : events_) sum += e.polarity;
    return sum;
}

EventStream parse_events(std::istream& in, int sensor_width, int sensor_height,
                         ParseOptions options) {
    std::vector<Event> events;
    std::vector<std::size_t> line_of;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        Event e = parse_line(line, line_no);
        check_event(e, sensor_width, sensor_height, line_no);
        if (!options.sort && !events.empty() && e.t < events.back().t) {
            throw OrderError(line_no, "timestamp " + std::to_string(e.t) + " after " +
                                          std::to_string(events.back().t));
        }
        events.push_back(e);
    }
    if (in.bad()) throw IoError("read failure");
    if (options.sort) {
        std::stable_sort(events.begin(), events.end(),
                         [](const Event& a, const Event& b) { return a.t < b.t; });
    }
    return EventStream(sensor_width, sensor_height, std::move(events));
}

EventStream parse_events(std::string_view text, int sensor_width, int sensor_height,
                         ParseOptions options) {
    std::istringstream in{std::string(text)};
    return parse_events(in, sensor_width, sensor_height, options);
}

void write_events(const EventStream& stream, std::ostream& out) {
    for (const auto& e : stream.events()) {
        out << e.t << ',' << e.x << ',' << e.y << ',' << (e.polarity > 0 ? 1 : 0) << '\n';
    }
    if (!out) throw IoError("write failure");
}

EventStream read_event_file(const std::string& path, int sensor_width, int sensor_height,
                            ParseOptions options) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    return parse_events(in, sensor_width, sensor_height, options);
}

void write_event_file(const EventStream& stream, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    write_events(stream, out);
}

}  // namespace evseq
