#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include "eretinex/error.hpp"
#include "eretinex/events.hpp"
#include "oracles.hpp"

using namespace eretinex;
using eretinex::testing::naive_voxels;
using eretinex::testing::random_stream;

TEST_CASE("normalize_timestamps examples") {
    auto make = [](std::vector<double> ts) {
        std::vector<Event> ev;
        for (double t : ts) ev.push_back({0, 0, t, 1});
        return EventStream(1, 1, ev);
    };
    CHECK(normalize_timestamps(make({0, 1}), 7) == std::vector<double>{0, 6});
    CHECK(normalize_timestamps(make({0, 0.5, 1}), 7) == std::vector<double>{0, 3, 6});
    CHECK(normalize_timestamps(make({2, 2}), 7) == std::vector<double>{0, 0});
    CHECK(normalize_timestamps(make({5}), 7) == std::vector<double>{0});
    CHECK_THROWS_AS(normalize_timestamps(EventStream(1, 1, {}), 7), Error);
    CHECK_THROWS_AS(normalize_timestamps(make({0, 1}), 1), Error);
    try {
        normalize_timestamps(EventStream(1, 1, {}), 7);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::EmptyStream);
    }
}

TEST_CASE("endpoint events land in dropped bins") {
    EventStream s(2, 2, {{0, 0, 0.0, 1}, {0, 0, 1.0, 1}});
    VoxelGrid g = voxelize(s);
    CHECK(g.data.dims() == Shape{5, 2, 2});
    for (float v : g.data.values()) CHECK(v == 0.0f);
    auto full = accumulate_voxels(s, {});
    CHECK(full[0] == 1.0);
    CHECK(full[6 * 4] == 1.0);
}

TEST_CASE("half-way event splits between neighbours") {
    // t* = 2.5 for the middle event with window [0, 6]
    EventStream s(3, 1, {{0, 0, 0.0, 1}, {2, 0, 2.5, 1}, {1, 0, 6.0, -1}});
    auto full = accumulate_voxels(s, {});
    CHECK(full[2 * 3 + 2] == 0.5);
    CHECK(full[3 * 3 + 2] == 0.5);
    VoxelGrid g = voxelize(s);
    CHECK(g.data.values()[1 * 3 + 2] == 0.5f);  // kept bin 2 is output channel 1
    CHECK(g.data.values()[2 * 3 + 2] == 0.5f);
}

TEST_CASE("empty stream gives a zero grid") {
    VoxelGrid g = voxelize(EventStream(4, 3, {}));
    CHECK(g.data.dims() == Shape{5, 3, 4});
    for (float v : g.data.values()) CHECK(v == 0.0f);
}

TEST_CASE("invalid events are rejected") {
    auto code_of = [](auto&& fn) {
        try {
            fn();
        } catch (const Error& e) {
            return e.code();
        }
        return ErrorCode::Io;
    };
    CHECK(code_of([] { EventStream(2, 2, {{2, 0, 0.0, 1}}); }) == ErrorCode::EventOutOfBounds);
    CHECK(code_of([] { EventStream(2, 2, {{0, 2, 0.0, 1}}); }) == ErrorCode::EventOutOfBounds);
    CHECK(code_of([] { EventStream(2, 2, {{0, 0, 0.0, 0}}); }) == ErrorCode::InvalidPolarity);
    CHECK(code_of([] { EventStream(2, 2, {{0, 0, 0.5, 1}, {0, 0, 0.4, 1}}); }) == ErrorCode::UnsortedTimestamps);
    CHECK(code_of([] { EventStream(2, 2, {{0, 0, -1.0, 1}}); }) == ErrorCode::InvalidArgument);
    CHECK(code_of([] { EventStream(2, 2, {{0, 0, std::nan(""), 1}}); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("voxelizer matches the naive oracle") {
    std::mt19937_64 rng(42);
    for (int trial = 0; trial < 100; ++trial) {
        EventStream s = random_stream(rng, 16, 16, 500);
        auto ref = naive_voxels(std::vector<Event>(s.events().begin(), s.events().end()), s.width(), s.height(), 7);
        auto full = accumulate_voxels(s, {});
        REQUIRE(full.size() == ref.size());
        double worst = 0;
        for (std::size_t i = 0; i < ref.size(); ++i) worst = std::max(worst, std::abs(full[i] - ref[i]));
        CHECK(worst < 1e-6);
        VoxelGrid g = voxelize(s);
        const std::size_t plane = s.width() * s.height();
        for (std::size_t i = 0; i < g.data.numel(); ++i) CHECK(std::abs(g.data.values()[i] - ref[plane + i]) < 1e-6);
    }
}

TEST_CASE("mass conservation") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        EventStream s = random_stream(rng, 16, 16, 500);
        if (s.empty()) continue;
        auto full = accumulate_voxels(s, {});
        double total = 0, expect = 0;
        for (double v : full) total += v;
        for (const auto& e : s.events()) expect += e.p;
        CHECK(std::abs(total - expect) < 1e-6);
        // f32 view of the full grid
        VoxelOptions all;
        all.keep_first = 0;
        all.keep_count = 7;
        VoxelGrid g = voxelize(s, all);
        float total32 = 0;
        for (float v : g.data.values()) total32 += v;
        CHECK(std::abs(total32 - expect) < 1e-3);
    }
}

TEST_CASE("permutation invariance") {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 20; ++trial) {
        // Coarse timestamps give many ties, which may be reordered freely.
        std::uniform_int_distribution<int> coord(0, 7), tick(0, 9), pol(0, 1);
        std::vector<Event> ev(300);
        for (auto& e : ev) {
            e = {static_cast<std::uint16_t>(coord(rng)), static_cast<std::uint16_t>(coord(rng)), tick(rng) * 0.1,
                 static_cast<std::int8_t>(pol(rng) ? 1 : -1)};
        }
        std::stable_sort(ev.begin(), ev.end(), [](const Event& a, const Event& b) { return a.t < b.t; });
        std::vector<Event> shuffled = ev;
        for (auto it = shuffled.begin(); it != shuffled.end();) {
            auto end = std::find_if(it, shuffled.end(), [&](const Event& e) { return e.t != it->t; });
            std::shuffle(it, end, rng);
            it = end;
        }
        VoxelGrid a = voxelize(EventStream(8, 8, ev));
        VoxelGrid b = voxelize(EventStream(8, 8, shuffled));
        for (std::size_t i = 0; i < a.data.numel(); ++i) CHECK(std::abs(a.data.values()[i] - b.data.values()[i]) < 1e-6);
        // fully shuffled order through the oracle
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        auto ref = naive_voxels(shuffled, 8, 8, 7);
        for (std::size_t i = 0; i < a.data.numel(); ++i) CHECK(std::abs(a.data.values()[i] - ref[64 + i]) < 1e-6);
    }
}

TEST_CASE("linearity over a shared window") {
    std::mt19937_64 rng(3);
    VoxelOptions opt;
    opt.window_begin = 0.0;
    opt.window_end = 1.0;
    for (int trial = 0; trial < 20; ++trial) {
        EventStream s1 = random_stream(rng, 8, 8, 200, true);
        EventStream s2 = random_stream(rng, 8, 8, 200, true);
        std::vector<Event> both(s1.events().begin(), s1.events().end());
        both.insert(both.end(), s2.events().begin(), s2.events().end());
        std::stable_sort(both.begin(), both.end(), [](const Event& a, const Event& b) { return a.t < b.t; });
        VoxelGrid u = voxelize(EventStream(8, 8, both), opt);
        VoxelGrid a = voxelize(s1, opt), b = voxelize(s2, opt);
        for (std::size_t i = 0; i < u.data.numel(); ++i) {
            CHECK(std::abs(u.data.values()[i] - (a.data.values()[i] + b.data.values()[i])) < 1e-6);
        }
    }
}

TEST_CASE("EVT1 round trip and errors") {
    std::mt19937_64 rng(5);
    EventStream s = random_stream(rng, 40, 30, 1000);
    auto bytes = encode_events(s);
    CHECK(bytes.size() == 12 + 13 * s.size());
    CHECK(decode_events(bytes) == s);
    CHECK(encode_events(decode_events(bytes)) == bytes);

    auto tmp = std::filesystem::temp_directory_path() / "eretinex_evt_test.evt";
    write_events(s, tmp);
    CHECK(read_events(tmp) == s);
    std::filesystem::remove(tmp);

    SUBCASE("bad magic") {
        auto b = bytes;
        b[0] = 'X';
        CHECK_THROWS_AS(decode_events(b), ParseError);
    }
    SUBCASE("truncated record names its offset") {
        std::vector<std::uint8_t> b(bytes.begin(), bytes.begin() + 12 + 13 * 3 + 5);
        try {
            decode_events(b);
            FAIL("expected throw");
        } catch (const ParseError& e) {
            CHECK(e.code() == ErrorCode::Truncated);
            CHECK(e.offset() == 12 + 13 * 3);
        }
    }
    SUBCASE("unsorted record") {
        EventStream two(4, 4, {{0, 0, 0.25, 1}, {1, 1, 0.5, -1}});
        auto b = encode_events(two);
        // swap the timestamps of the two records
        std::swap_ranges(b.begin() + 12 + 4, b.begin() + 12 + 12, b.begin() + 25 + 4);
        try {
            decode_events(b);
            FAIL("expected throw");
        } catch (const ParseError& e) {
            CHECK(e.code() == ErrorCode::UnsortedTimestamps);
            CHECK(e.offset() == 25);
        }
    }
    SUBCASE("zero polarity") {
        EventStream one(4, 4, {{0, 0, 0.25, 1}});
        auto b = encode_events(one);
        b.back() = 0;
        try {
            decode_events(b);
            FAIL("expected throw");
        } catch (const ParseError& e) {
            CHECK(e.code() == ErrorCode::InvalidPolarity);
        }
    }
}

TEST_CASE("CSV ingestion") {
    EventStream s = parse_events_csv("0.5,3,4,1\n");
    REQUIRE(s.size() == 1);
    CHECK(s.events()[0] == Event{3, 4, 0.5, 1});
    CHECK(s.width() == 4);
    CHECK(s.height() == 5);

    EventStream h = parse_events_csv("t,x,y,p\n0.1,0,0,-1\n0.2,1,1,1\n", 10, 10);
    CHECK(h.size() == 2);
    CHECK(h.width() == 10);
    CHECK(parse_events_csv(format_events_csv(h), 10, 10) == h);

    CHECK_THROWS_AS(parse_events_csv("0.1,0,0,0\n"), Error);
    CHECK_THROWS_AS(parse_events_csv("0.1,0,0\n"), ParseError);
    CHECK_THROWS_AS(parse_events_csv("0.1,5,0,1\n", 4, 4), Error);
}
