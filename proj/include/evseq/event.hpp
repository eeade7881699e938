#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace evseq {

struct Event {
    std::int64_t t = 0;  // microseconds
    std::int32_t x = 0;
    std::int32_t y = 0;
    std::int8_t polarity = 1;  // +1 or -1

    friend bool operator==(const Event&, const Event&) = default;
};

/// Time-ordered events from a fixed-resolution sensor. Validated on
/// construction and immutable afterwards.
class EventStream {
public:
    static constexpr int kDefaultWidth = 128;
    static constexpr int kDefaultHeight = 128;

    EventStream() = default;

    /// Throws BoundsError / OrderError (line = 1-based event index) when an
    /// event violates the sensor geometry or time ordering.
    EventStream(int sensor_width, int sensor_height, std::vector<Event> events);

    int sensor_width() const { return width_; }
    int sensor_height() const { return height_; }
    const std::vector<Event>& events() const { return events_; }
    std::size_t size() const { return events_.size(); }
    bool empty() const { return events_.empty(); }

    /// Sum of polarities over the whole stream.
    std::int64_t signed_polarity_sum() const;

    friend bool operator==(const EventStream&, const EventStream&) = default;

private:
    int width_ = kDefaultWidth;
    int height_ = kDefaultHeight;
    std::vector<Event> events_;
};

struct ParseOptions {
    // Stable-sort by timestamp before the ordering check.
    bool sort = false;
};

/// Reads `t_us,x,y,p` lines (p in {0,1}, 0 meaning negative polarity).
EventStream parse_events(std::istream& in, int sensor_width = EventStream::kDefaultWidth,
                         int sensor_height = EventStream::kDefaultHeight,
                         ParseOptions options = {});
EventStream parse_events(std::string_view text, int sensor_width = EventStream::kDefaultWidth,
                         int sensor_height = EventStream::kDefaultHeight,
                         ParseOptions options = {});

void write_events(const EventStream& stream, std::ostream& out);

EventStream read_event_file(const std::string& path, int sensor_width, int sensor_height,
                            ParseOptions options = {});
void write_event_file(const EventStream& stream, const std::string& path);

}  // namespace evseq
