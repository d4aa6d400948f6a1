#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "evfi/events.hpp"
#include "evfi/rng.hpp"
#include "test_helpers.hpp"

using namespace evfi;

namespace {

EventStream random_stream(Rng& rng, int w = 16, int h = 12, size_t max_events = 200,
                          TimeWindow window = {0.0, 1.0}) {
    std::vector<Event> raw;
    size_t n = rng.below(max_events + 1);
    for (size_t i = 0; i < n; ++i) {
        raw.push_back({static_cast<uint16_t>(rng.below(static_cast<uint64_t>(w))),
                       static_cast<uint16_t>(rng.below(static_cast<uint64_t>(h))),
                       rng.uniform(window.t_start, window.t_end),
                       rng.uniform() < 0.5 ? int8_t(1) : int8_t(-1)});
    }
    return validate_stream(std::move(raw), window, w, h);
}

bool streams_identical(const EventStream& a, const EventStream& b) {
    if (a.count() != b.count()) return false;
    for (size_t i = 0; i < a.count(); ++i) {
        const Event &ea = a.events[i], &eb = b.events[i];
        if (ea.x != eb.x || ea.y != eb.y || ea.t != eb.t || ea.p != eb.p) return false;
    }
    return true;
}

} // namespace

TEST_CASE("validate_stream sorts, bounds-checks and applies the policy") {
    TimeWindow w{0.0, 1.0};
    CHECK(validate_stream({}, w, 8, 8).count() == 0);

    std::vector<Event> swapped{{1, 1, 0.75, 1}, {2, 2, 0.25, -1}};
    auto sorted = validate_stream(swapped, w, 8, 8);
    CHECK(sorted.events[0].t < sorted.events[1].t);

    std::vector<Event> oob{{8, 0, 0.5, 1}}; // x == W
    CHECK(validate_stream(oob, w, 8, 8, BoundsPolicy::kDrop).count() == 0);
    CHECK_THROWS_WITH_AS(validate_stream(oob, w, 8, 8, BoundsPolicy::kError),
                         doctest::Contains("OutOfBoundsEvent"), Error);

    std::vector<Event> nan_t{{1, 1, std::nan(""), 1}};
    CHECK_THROWS_WITH_AS(validate_stream(nan_t, w, 8, 8), doctest::Contains("NonFiniteTimestamp"),
                         Error);
    CHECK_THROWS_WITH_AS(validate_stream({}, {1.0, 1.0}, 8, 8),
                         doctest::Contains("DegenerateWindow"), Error);
}

TEST_CASE("voxelize splits polarity bilinearly over adjacent bins") {
    EventStream empty;
    empty.window = {0.0, 1.0};
    empty.width = 6;
    empty.height = 4;
    VoxelGrid zero = voxelize(empty, 5);
    CHECK(zero.data.shape() == std::vector<int>{5, 4, 6});
    CHECK(zero.total() == 0.0);

    // single event exactly on bin node k=2: t* = (B-1) t = 2 at t = 0.5
    EventStream on_node = empty;
    on_node.events = {{3, 1, 0.5, 1}};
    VoxelGrid g = voxelize(on_node, 5);
    CHECK(g.data.at(2, 1, 3) == 1.0);
    CHECK(g.total() == 1.0);

    // t* = 1.25 at t = 0.3125 (dyadic, no quantization error): weights (0.75, 0.25)
    EventStream frac = empty;
    frac.events = {{2, 0, 0.3125, -1}};
    VoxelGrid h = voxelize(frac, 5);
    CHECK(h.data.at(1, 0, 2) == doctest::Approx(-0.75).epsilon(1e-12));
    CHECK(h.data.at(2, 0, 2) == doctest::Approx(-0.25).epsilon(1e-12));

    CHECK_THROWS_WITH_AS(voxelize(empty, 0), doctest::Contains("InvalidConfig"), Error);
}

TEST_CASE("voxel signed-mass conservation over random streams") {
    Rng rng(101);
    for (int trial = 0; trial < 100; ++trial) {
        EventStream s = random_stream(rng);
        VoxelGrid g = voxelize(s, 1 + static_cast<int>(rng.below(8)));
        double expect = static_cast<double>(s.signed_sum());
        double m = static_cast<double>(std::max<size_t>(1, s.count()));
        CHECK(std::abs(g.total() - expect) <= 1e-6 * m);
    }
}

TEST_CASE("reverse is an exact involution that negates polarity") {
    Rng rng(202);
    for (int trial = 0; trial < 100; ++trial) {
        EventStream s = random_stream(rng, 10, 10, 80, {0.25, 2.75});
        EventStream rr = reverse(reverse(s));
        CHECK(streams_identical(s, rr));
        EventStream r = reverse(s);
        CHECK(r.count() == s.count());
        CHECK(r.signed_sum() == -s.signed_sum());
        CHECK(r.window.t_start == s.window.t_start);
        CHECK(r.window.t_end == s.window.t_end);
    }

    EventStream single;
    single.window = {0.0, 1.0};
    single.width = 8;
    single.height = 8;
    single.events = {{3, 4, quantize_time(0.2), 1}};
    EventStream rev = reverse(single);
    CHECK(rev.events[0].x == 3);
    CHECK(rev.events[0].y == 4);
    CHECK(rev.events[0].t == doctest::Approx(0.8).epsilon(1e-9));
    CHECK(rev.events[0].p == -1);

    EventStream none;
    none.window = {0.0, 1.0};
    CHECK(reverse(none).count() == 0);
}

TEST_CASE("voxelize of a reversed stream flips bins and negates sign on node-aligned streams") {
    EventStream s;
    s.window = {0.0, 1.0};
    s.width = 4;
    s.height = 4;
    const int bins = 5;
    // timestamps exactly on bin nodes k/4
    for (int k = 0; k <= 4; ++k)
        s.events.push_back(
            {static_cast<uint16_t>(k % 4), 1, k / 4.0, k % 2 ? int8_t(-1) : int8_t(1)});
    VoxelGrid fwd = voxelize(s, bins);
    VoxelGrid rev = voxelize(reverse(s), bins);
    for (int b = 0; b < bins; ++b)
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x)
                CHECK(rev.data.at(b, y, x) == -fwd.data.at(bins - 1 - b, y, x));
}

TEST_CASE("slice partitions events with half-open intervals, final closed") {
    Rng rng(303);
    EventStream s = random_stream(rng, 8, 8, 64);
    while (s.count() != 10) s = random_stream(rng, 8, 8, 64);

    auto parts = slice(s, {0.0, 0.5, 1.0});
    REQUIRE(parts.size() == 2);
    CHECK(parts[0].count() + parts[1].count() == 10);
    std::vector<Event> joined = parts[0].events;
    joined.insert(joined.end(), parts[1].events.begin(), parts[1].events.end());
    for (size_t i = 0; i < joined.size(); ++i) CHECK(joined[i].t == s.events[i].t);

    EventStream border;
    border.window = {0.0, 1.0};
    border.width = 4;
    border.height = 4;
    border.events = {{0, 0, 0.5, 1}};
    auto halves = slice(border, {0.0, 0.5, 1.0});
    CHECK(halves[0].count() == 0);
    CHECK(halves[1].count() == 1);

    auto whole = slice(s, {0.0, 1.0});
    REQUIRE(whole.size() == 1);
    CHECK(streams_identical(whole[0], s));

    CHECK_THROWS_WITH_AS(slice(s, {0.0, 0.5, 0.5, 1.0}), doctest::Contains("InvalidBoundaries"),
                         Error);
    CHECK_THROWS_WITH_AS(slice(s, {0.2, 1.0}), doctest::Contains("InvalidBoundaries"), Error);
}

TEST_CASE("slice-then-voxelize totals match the full voxelization at bin edges") {
    Rng rng(404);
    for (int trial = 0; trial < 20; ++trial) {
        EventStream s = random_stream(rng, 8, 8, 120);
        VoxelGrid full = voxelize(s, 5);
        auto parts = slice(s, {0.0, 0.25, 0.5, 0.75, 1.0}); // at bin edges of B=5
        double total = 0.0;
        for (const auto& p : parts) total += voxelize(p, 5).total();
        CHECK(total == doctest::Approx(full.total()).epsilon(1e-9));
    }
}

TEST_CASE("event at the closed end of the final slice is kept exactly once") {
    EventStream s;
    s.window = {0.0, 1.0};
    s.width = 4;
    s.height = 4;
    s.events = {{1, 1, 1.0, 1}}; // arises via reversal of a t=0 event
    auto parts = slice(s, {0.0, 0.5, 1.0});
    CHECK(parts[0].count() == 0);
    CHECK(parts[1].count() == 1);
}

TEST_CASE("evt binary and csv round trips") {
    Rng rng(505);
    EventStream s = random_stream(rng, 32, 24, 150, {0.5, 3.0});
    std::string dir = test::fresh_dir("evtio");

    write_evt(dir + "/a.evt", s);
    EventStream back = read_evt(dir + "/a.evt");
    CHECK(streams_identical(s, back));
    CHECK(back.window.t_start == s.window.t_start);
    CHECK(back.window.t_end == s.window.t_end);
    CHECK(back.width == s.width);
    CHECK(back.height == s.height);

    write_csv(dir + "/a.csv", s);
    EventStream csv_back = read_csv(dir + "/a.csv", s.window, s.width, s.height);
    CHECK(streams_identical(s, csv_back));

    // corrupt the magic
    {
        std::ofstream os(dir + "/bad.evt", std::ios::binary);
        os << "NOPE" << std::string(64, '\0');
    }
    CHECK_THROWS_WITH_AS(read_evt(dir + "/bad.evt"), doctest::Contains("CorruptEventFile"), Error);
}
