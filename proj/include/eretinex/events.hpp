#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "eretinex/tensor.hpp"

namespace eretinex {

struct Event {
    std::uint16_t x = 0;
    std::uint16_t y = 0;
    double t = 0.0;  // seconds
    std::int8_t p = 1;

    friend bool operator==(const Event&, const Event&) = default;
};

/// An immutable, validated event stream: every event in bounds, polarity
/// +-1, timestamps finite, non-negative and non-decreasing.
class EventStream {
  public:
    EventStream() = default;
    EventStream(std::size_t width, std::size_t height, std::vector<Event> events);

    std::size_t width() const noexcept { return width_; }
    std::size_t height() const noexcept { return height_; }
    std::span<const Event> events() const noexcept { return events_; }
    std::size_t size() const noexcept { return events_.size(); }
    bool empty() const noexcept { return events_.empty(); }

    friend bool operator==(const EventStream&, const EventStream&) = default;

  private:
    std::size_t width_ = 0;
    std::size_t height_ = 0;
    std::vector<Event> events_;
};

// Throws the Error for the first stream invariant `e` breaks. `previous` is
// the preceding event, or null for the first one.
void validate_event(const Event& e, std::size_t width, std::size_t height, const Event* previous);

struct VoxelOptions {
    std::size_t bin_count = 7;
    // Bins [keep_first, keep_first + keep_count) of the full grid are returned.
    std::size_t keep_first = 1;
    std::size_t keep_count = 5;
    // Explicit normalization window. When unset the window spans the first
    // and last event timestamps.
    std::optional<double> window_begin;
    std::optional<double> window_end;
};

struct VoxelGrid {
    Tensor data;  // [keep_count, H, W]
    std::size_t bin_count_full = 7;
};

// t* = (t - t_first) / (t_last - t_first) * (bin_count - 1); all zeros for a
// zero-duration window.
std::vector<double> normalize_timestamps(const EventStream& stream, std::size_t bin_count);
std::vector<double> normalize_timestamps(const EventStream& stream, const VoxelOptions& options);

// Full [bin_count, H, W] grid, accumulated in double:
//   F[b, y, x] = sum over events at (x, y) of p * max(0, 1 - |b - t*|)
std::vector<double> accumulate_voxels(const EventStream& stream, const VoxelOptions& options);

// Middle-bin slice of the full grid, emitted as float.
VoxelGrid voxelize(const EventStream& stream, const VoxelOptions& options = {});

// EVT1: "EVT1" | u16 width | u16 height | u32 count | count x {u16 x, u16 y, f64 t, i8 p}
std::vector<std::uint8_t> encode_events(const EventStream& stream);
EventStream decode_events(std::span<const std::uint8_t> bytes);
void write_events(const EventStream& stream, const std::filesystem::path& path);
EventStream read_events(const std::filesystem::path& path);

// CSV rows "t,x,y,p" with an optional header line. A zero width or height
// is inferred as max coordinate + 1.
EventStream parse_events_csv(std::string_view text, std::size_t width = 0, std::size_t height = 0);
std::string format_events_csv(const EventStream& stream);

// Reads EVT1, or CSV when the extension is ".csv".
EventStream load_events(const std::filesystem::path& path, std::size_t width = 0,
                        std::size_t height = 0);

}  // namespace eretinex
