#include "eretinex/events.hpp"

#include <charconv>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include "byte_io.hpp"
#include "eretinex/error.hpp"

namespace eretinex {

namespace {

constexpr std::string_view kEventMagic = "EVT1";
constexpr std::size_t kRecordSize = 2 + 2 + 8 + 1;

}  // namespace

void validate_event(const Event& e, std::size_t width, std::size_t height, const Event* previous) {
    if (e.p != 1 && e.p != -1) {
        throw Error(ErrorCode::InvalidPolarity, "polarity " + std::to_string(e.p) + " is not +-1");
    }
    if (e.x >= width || e.y >= height) {
        throw Error(ErrorCode::EventOutOfBounds,
                    "event (" + std::to_string(e.x) + "," + std::to_string(e.y) + ") outside " +
                        std::to_string(width) + "x" + std::to_string(height));
    }
    if (!std::isfinite(e.t) || e.t < 0.0) {
        throw Error(ErrorCode::InvalidArgument, "timestamp must be finite and non-negative");
    }
    if (previous && e.t < previous->t) {
        throw Error(ErrorCode::UnsortedTimestamps, "timestamps decrease");
    }
}

EventStream::EventStream(std::size_t width, std::size_t height, std::vector<Event> events)
    : width_(width), height_(height), events_(std::move(events)) {
    for (std::size_t i = 0; i < events_.size(); ++i) {
        try {
            validate_event(events_[i], width_, height_, i ? &events_[i - 1] : nullptr);
        } catch (const Error& err) {
            throw Error(err.code(), std::string(err.what()) + " (event " + std::to_string(i) + ")");
        }
    }
}

std::vector<double> normalize_timestamps(const EventStream& stream, std::size_t bin_count) {
    VoxelOptions options;
    options.bin_count = bin_count;
    return normalize_timestamps(stream, options);
}

std::vector<double> normalize_timestamps(const EventStream& stream, const VoxelOptions& options) {
    if (stream.empty()) throw Error(ErrorCode::EmptyStream, "cannot normalize an empty stream");
    if (options.bin_count < 2) throw Error(ErrorCode::InvalidArgument, "bin_count must be >= 2");
    auto events = stream.events();
    double begin = options.window_begin.value_or(events.front().t);
    double end = options.window_end.value_or(events.back().t);
    std::vector<double> out(events.size(), 0.0);
    if (end == begin) return out;
    double scale = static_cast<double>(options.bin_count - 1) / (end - begin);
    for (std::size_t i = 0; i < events.size(); ++i) out[i] = (events[i].t - begin) * scale;
    return out;
}

std::vector<double> accumulate_voxels(const EventStream& stream, const VoxelOptions& options) {
    const std::size_t bins = options.bin_count;
    const std::size_t plane = stream.width() * stream.height();
    std::vector<double> full(bins * plane, 0.0);
    if (stream.empty()) return full;
    std::vector<double> tn = normalize_timestamps(stream, options);
    auto events = stream.events();
    // Only the two bins bracketing t* have non-zero weight.
    for (std::size_t i = 0; i < events.size(); ++i) {
        const Event& e = events[i];
        double ts = tn[i];
        double lower = std::floor(ts);
        double frac = ts - lower;
        std::size_t pix = static_cast<std::size_t>(e.y) * stream.width() + e.x;
        double p = e.p;
        if (lower >= 0.0 && lower < static_cast<double>(bins)) {
            full[static_cast<std::size_t>(lower) * plane + pix] += p * (1.0 - frac);
        }
        double upper = lower + 1.0;
        if (frac > 0.0 && upper >= 0.0 && upper < static_cast<double>(bins)) {
            full[static_cast<std::size_t>(upper) * plane + pix] += p * frac;
        }
    }
    return full;
}

VoxelGrid voxelize(const EventStream& stream, const VoxelOptions& options) {
    if (options.bin_count < 2) throw Error(ErrorCode::InvalidArgument, "bin_count must be >= 2");
    if (options.keep_count == 0 || options.keep_first + options.keep_count > options.bin_count) {
        throw Error(ErrorCode::InvalidArgument, "kept bin range exceeds bin_count");
    }
    const std::size_t plane = stream.width() * stream.height();
    VoxelGrid grid;
    grid.bin_count_full = options.bin_count;
    std::vector<float> kept(options.keep_count * plane, 0.0f);
    if (!stream.empty()) {
        std::vector<double> full = accumulate_voxels(stream, options);
        for (std::size_t i = 0; i < kept.size(); ++i) {
            kept[i] = static_cast<float>(full[options.keep_first * plane + i]);
        }
    }
    grid.data = Tensor({options.keep_count, stream.height(), stream.width()}, std::move(kept));
    return grid;
}

std::vector<std::uint8_t> encode_events(const EventStream& stream) {
    if (stream.width() > 0xFFFF || stream.height() > 0xFFFF) {
        throw Error(ErrorCode::InvalidArgument, "EVT1 dimensions exceed u16");
    }
    if (stream.size() > std::numeric_limits<std::uint32_t>::max()) {
        throw Error(ErrorCode::InvalidArgument, "EVT1 event count exceeds u32");
    }
    detail::ByteWriter w;
    w.data().reserve(12 + stream.size() * kRecordSize);
    w.bytes(kEventMagic);
    w.u16(static_cast<std::uint16_t>(stream.width()));
    w.u16(static_cast<std::uint16_t>(stream.height()));
    w.u32(static_cast<std::uint32_t>(stream.size()));
    for (const Event& e : stream.events()) {
        w.u16(e.x);
        w.u16(e.y);
        w.f64(e.t);
        w.i8(e.p);
    }
    return std::move(w.data());
}

EventStream decode_events(std::span<const std::uint8_t> bytes) {
    detail::ByteReader r(bytes.data(), bytes.size(), "EVT1");
    r.expect_magic(kEventMagic);
    std::size_t width = r.u16("width");
    std::size_t height = r.u16("height");
    std::uint32_t count = r.u32("count");
    // Fail on the first incomplete record before allocating for `count`.
    std::size_t complete = (bytes.size() - r.offset()) / kRecordSize;
    if (complete < count) {
        throw ParseError(ErrorCode::Truncated, r.offset() + complete * kRecordSize,
                         "EVT1: record " + std::to_string(complete) + " of " + std::to_string(count) + " is incomplete");
    }
    std::vector<Event> events(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        std::size_t record_offset = r.offset();
        Event& e = events[i];
        e.x = r.u16("x");
        e.y = r.u16("y");
        e.t = r.f64("t");
        e.p = r.i8("p");
        try {
            validate_event(e, width, height, i ? &events[i - 1] : nullptr);
        } catch (const Error& err) {
            throw ParseError(err.code(), record_offset, "EVT1 record " + std::to_string(i) + ": " + err.what());
        }
    }
    if (!r.at_end()) throw ParseError(ErrorCode::Truncated, r.offset(), "EVT1: trailing bytes");
    return EventStream(width, height, std::move(events));
}

void write_events(const EventStream& stream, const std::filesystem::path& path) {
    detail::write_file(path, encode_events(stream));
}

EventStream read_events(const std::filesystem::path& path) {
    return decode_events(detail::read_file(path));
}

EventStream parse_events_csv(std::string_view text, std::size_t width, std::size_t height) {
    struct Row {
        Event e;
        std::size_t offset;
    };
    std::vector<Row> rows;
    std::size_t pos = 0;
    bool first_line = true;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        std::string_view line = text.substr(pos, eol - pos);
        std::size_t line_offset = pos;
        pos = eol + 1;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.find_first_not_of(" \t") == std::string_view::npos) continue;

        double fields[4];
        std::size_t field = 0, start = 0;
        bool numeric = true;
        while (field < 4 && start <= line.size()) {
            std::size_t comma = line.find(',', start);
            std::string_view tok = line.substr(start, comma == std::string_view::npos ? line.npos : comma - start);
            while (!tok.empty() && (tok.front() == ' ' || tok.front() == '\t')) tok.remove_prefix(1);
            while (!tok.empty() && (tok.back() == ' ' || tok.back() == '\t')) tok.remove_suffix(1);
            auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), fields[field]);
            if (ec != std::errc() || ptr != tok.data() + tok.size()) {
                numeric = false;
                break;
            }
            ++field;
            if (comma == std::string_view::npos) break;
            start = comma + 1;
        }
        if (!numeric || field != 4) {
            if (first_line && !numeric) {
                first_line = false;
                continue;  // header
            }
            throw ParseError(ErrorCode::InvalidArgument, line_offset,
                             "CSV: expected \"t,x,y,p\", got \"" + std::string(line) + "\"");
        }
        first_line = false;
        auto coord = [&](double v, const char* name) {
            if (v < 0 || v > 65535 || v != std::floor(v)) {
                throw ParseError(ErrorCode::EventOutOfBounds, line_offset,
                                 std::string("CSV: invalid ") + name + " coordinate");
            }
            return static_cast<std::uint16_t>(v);
        };
        if (fields[3] != 1.0 && fields[3] != -1.0) {
            throw ParseError(ErrorCode::InvalidPolarity, line_offset, "CSV: polarity must be -1 or 1");
        }
        Event e{coord(fields[1], "x"), coord(fields[2], "y"), fields[0], static_cast<std::int8_t>(fields[3])};
        rows.push_back({e, line_offset});
    }
    std::size_t w = width, h = height;
    if (w == 0 || h == 0) {
        std::size_t max_x = 0, max_y = 0;
        for (const auto& r : rows) {
            max_x = std::max<std::size_t>(max_x, r.e.x + 1u);
            max_y = std::max<std::size_t>(max_y, r.e.y + 1u);
        }
        if (w == 0) w = max_x;
        if (h == 0) h = max_y;
    }
    std::vector<Event> events;
    events.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        try {
            validate_event(rows[i].e, w, h, i ? &rows[i - 1].e : nullptr);
        } catch (const Error& err) {
            throw ParseError(err.code(), rows[i].offset, std::string("CSV: ") + err.what());
        }
        events.push_back(rows[i].e);
    }
    return EventStream(w, h, std::move(events));
}

std::string format_events_csv(const EventStream& stream) {
    std::ostringstream os;
    os << "t,x,y,p\n" << std::setprecision(17);
    for (const Event& e : stream.events()) {
        os << e.t << ',' << e.x << ',' << e.y << ',' << static_cast<int>(e.p) << '\n';
    }
    return os.str();
}

EventStream load_events(const std::filesystem::path& path, std::size_t width, std::size_t height) {
    if (path.extension() == ".csv") {
        auto bytes = detail::read_file(path);
        return parse_events_csv(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()),
                                width, height);
    }
    return read_events(path);
}

}  // namespace eretinex
