#include "doctest.h"

#include <cmath>
#include <fstream>

#include "evfi/events.hpp"
#include "evfi/rng.hpp"
#include "evfi/simulator.hpp"
#include "test_helpers.hpp"

using namespace evfi;

namespace {

Tensor uniform_frame(int h, int w, double v) {
    Tensor f({3, h, w});
    f.fill(v);
    return f;
}

// Independent oracle: walk a dense time grid over the piecewise-linear
// log-luminance signal and fire events whenever the next threshold level away
// from the reference is reached. Grid resolution bounds the timing error.
struct OracleEvent {
    double t;
    int p;
};
std::vector<OracleEvent> brute_force_pixel(const std::vector<double>& log_l,
                                           const std::vector<double>& times, double c_pos,
                                           double c_neg, int grid = 1'000'000) {
    std::vector<OracleEvent> out;
    double ref = log_l.front();
    const double t0 = times.front(), t1 = times.back();
    auto value_at = [&](double t) {
        size_t seg = 0;
        while (seg + 2 < times.size() && t > times[seg + 1]) ++seg;
        double u = (t - times[seg]) / (times[seg + 1] - times[seg]);
        return log_l[seg] * (1 - u) + log_l[seg + 1] * u;
    };
    for (int i = 1; i <= grid; ++i) {
        double t = t0 + (t1 - t0) * i / grid;
        double l = value_at(t);
        while (l >= ref + c_pos - 1e-12) {
            out.push_back({t, +1});
            ref += c_pos;
        }
        while (l <= ref - c_neg + 1e-12) {
            out.push_back({t, -1});
            ref -= c_neg;
        }
    }
    return out;
}

// frames whose single pixel's log-luminance takes the given values
FrameSequence pixel_ramp(const std::vector<double>& log_values, double log_eps) {
    FrameSequence seq;
    for (size_t i = 0; i < log_values.size(); ++i) {
        double luma = std::exp(log_values[i]) - log_eps;
        seq.frames.push_back(uniform_frame(1, 1, luma));
        seq.timestamps.push_back(static_cast<double>(i) / (log_values.size() - 1));
    }
    return seq;
}

} // namespace

TEST_CASE("identical frames produce no events") {
    FrameSequence seq;
    seq.frames = {uniform_frame(4, 4, 0.5), uniform_frame(4, 4, 0.5)};
    seq.timestamps = {0.0, 1.0};
    SimulatorConfig cfg;
    CHECK(simulate(seq, cfg).count() == 0);
}

TEST_CASE("linear ramp of 2.5c fires exactly two positive events at 0.4 and 0.8") {
    SimulatorConfig cfg;
    const double l0 = std::log(0.2 + cfg.log_eps);
    FrameSequence seq = pixel_ramp({l0, l0 + 2.5 * cfg.c_pos}, cfg.log_eps);
    EventStream s = simulate(seq, cfg);
    REQUIRE(s.count() == 2);
    CHECK(s.events[0].p == 1);
    CHECK(s.events[1].p == 1);
    CHECK(std::abs(s.events[0].t - 0.4) < 1e-9);
    CHECK(std::abs(s.events[1].t - 0.8) < 1e-9);

    auto oracle = brute_force_pixel({l0, l0 + 2.5 * cfg.c_pos}, {0.0, 1.0}, cfg.c_pos, cfg.c_neg);
    REQUIRE(oracle.size() == 2);
    CHECK(std::abs(oracle[0].t - s.events[0].t) < 1e-5);
    CHECK(std::abs(oracle[1].t - s.events[1].t) < 1e-5);
}

TEST_CASE("a fall of exactly 1.0c fires one negative event at the window end") {
    SimulatorConfig cfg;
    const double l0 = std::log(0.6 + cfg.log_eps);
    FrameSequence seq = pixel_ramp({l0, l0 - 1.0 * cfg.c_neg}, cfg.log_eps);
    EventStream s = simulate(seq, cfg);
    REQUIRE(s.count() == 1);
    CHECK(s.events[0].p == -1);
    CHECK(std::abs(s.events[0].t - 1.0) < 1e-9);
    CHECK(s.events[0].t <= s.window.t_end);

    auto oracle = brute_force_pixel({l0, l0 - 1.0 * cfg.c_neg}, {0.0, 1.0}, cfg.c_pos, cfg.c_neg);
    CHECK(oracle.size() == 1);
}

TEST_CASE("multi-segment signals match the dense-grid oracle") {
    SimulatorConfig cfg;
    cfg.c_pos = 0.12;
    cfg.c_neg = 0.17;
    Rng rng(99);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<double> logs;
        std::vector<double> times;
        int n = 3 + static_cast<int>(rng.below(4));
        double base = std::log(0.3 + cfg.log_eps);
        for (int i = 0; i < n; ++i) {
            logs.push_back(base + rng.uniform(-0.5, 0.5));
            times.push_back(static_cast<double>(i) / (n - 1));
        }
        FrameSequence seq;
        for (int i = 0; i < n; ++i) {
            seq.frames.push_back(
                uniform_frame(1, 1, std::exp(logs[static_cast<size_t>(i)]) - cfg.log_eps));
            seq.timestamps.push_back(times[static_cast<size_t>(i)]);
        }
        EventStream s = simulate(seq, cfg);
        auto oracle = brute_force_pixel(logs, times, cfg.c_pos, cfg.c_neg);
        REQUIRE(s.count() == oracle.size());
        for (size_t i = 0; i < oracle.size(); ++i) {
            CHECK(std::abs(s.events[i].t - oracle[i].t) < 1e-5);
            CHECK(int(s.events[i].p) == oracle[i].p);
        }
    }
}

TEST_CASE("monotone ramps fire floor(|dL|/c) single-polarity events") {
    SimulatorConfig cfg;
    Rng rng(314);
    for (int trial = 0; trial < 30; ++trial) {
        double mag = rng.uniform(0.0, 6.0);
        bool rising = rng.uniform() < 0.5;
        double l0 = std::log(0.4 + cfg.log_eps);
        double l1 = rising ? l0 + mag * cfg.c_pos : l0 - mag * cfg.c_neg;
        EventStream s = simulate(pixel_ramp({l0, l1}, cfg.log_eps), cfg);
        // stay off the exact-multiple knife edge
        if (std::abs(mag - std::round(mag)) < 1e-6) continue;
        CHECK(s.count() == static_cast<size_t>(std::floor(mag)));
        for (const auto& e : s.events) CHECK(int(e.p) == (rising ? 1 : -1));
        for (size_t i = 1; i < s.count(); ++i) CHECK(s.events[i].t >= s.events[i - 1].t);
    }
}

TEST_CASE("reconstruct_log accumulates threshold steps") {
    SimulatorConfig cfg;
    Tensor frame = uniform_frame(3, 3, 0.25);
    EventStream empty;
    empty.window = {0.0, 1.0};
    empty.width = 3;
    empty.height = 3;
    Tensor rec = reconstruct_log(frame, empty, cfg);
    Tensor expect = log_luminance(frame, cfg.log_eps);
    for (size_t i = 0; i < rec.size(); ++i) CHECK(rec[i] == expect[i]);

    EventStream one = empty;
    one.events = {{1, 2, 0.5, 1}};
    Tensor rec1 = reconstruct_log(frame, one, cfg);
    CHECK(rec1.at(2, 1) == doctest::Approx(expect.at(2, 1) + cfg.c_pos).epsilon(1e-12));
}

TEST_CASE("noise-free round trip stays within one threshold at every pixel") {
    SimulatorConfig cfg;
    for (int trial = 0; trial < 20; ++trial) {
        SceneConfig sc = test::tiny_scene_config(24, 1000 + trial, trial % 2 == 1);
        Scene scene = generate_scene(sc);
        EventStream s = simulate(scene.frames(), cfg);
        Tensor rec = reconstruct_log(scene.frames().frames.front(), s, cfg);
        Tensor expect = log_luminance(scene.frames().frames.back(), cfg.log_eps);
        double bound = std::max(cfg.c_pos, cfg.c_neg) + 1e-9;
        for (size_t i = 0; i < rec.size(); ++i) CHECK(std::abs(rec[i] - expect[i]) < bound);
    }
}

TEST_CASE("simulation is deterministic and noise obeys the configured rate") {
    SceneConfig sc = test::tiny_scene_config(24, 42, false);
    Scene scene = generate_scene(sc);
    SimulatorConfig cfg;
    cfg.noise_rate = 4.0;
    cfg.seed = 9;
    EventStream a = simulate(scene.frames(), cfg);
    EventStream b = simulate(scene.frames(), cfg);
    std::string dir = test::fresh_dir("sim_det");
    write_evt(dir + "/a.evt", a);
    write_evt(dir + "/b.evt", b);
    std::ifstream fa(dir + "/a.evt", std::ios::binary), fb(dir + "/b.evt", std::ios::binary);
    std::string ba((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
    std::string bb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
    CHECK(ba == bb);

    SimulatorConfig clean = cfg;
    clean.noise_rate = 0.0;
    EventStream base = simulate(scene.frames(), clean);
    double duration = scene.frames().timestamps.back() - scene.frames().timestamps.front();
    double expected_noise = cfg.noise_rate * duration * sc.width * sc.height;
    auto extra = static_cast<double>(a.count()) - static_cast<double>(base.count());
    CHECK(extra > 0.5 * expected_noise);
    CHECK(extra < 2.0 * expected_noise);

    for (size_t i = 1; i < a.count(); ++i) CHECK(a.events[i].t >= a.events[i - 1].t);
}

TEST_CASE("generate_scene produces analytic flows and deterministic frames") {
    SceneConfig cfg;
    cfg.width = 32;
    cfg.height = 32;
    cfg.n_frames = 3;
    cfg.frame_rate = 10;
    SceneObject obj;
    obj.size = 10;
    obj.texture.kind = TextureSpec::Kind::kChecker;
    obj.trajectory.start = {4, 6};
    obj.trajectory.velocity = {4, 0}; // 2 px per frame interval
    cfg.objects.push_back(obj);

    Scene scene = generate_scene(cfg);
    FlowField f02 = scene.flow_between(0, 2);
    FlowField f01 = scene.flow_between(0, 1);
    Tensor mask = scene.object_mask(0.0);
    bool any = false;
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x) {
            if (mask.at(y, x) == 0.0) {
                CHECK(f02.data.at(0, y, x) == 0.0);
                continue;
            }
            any = true;
            CHECK(f02.data.at(0, y, x) == doctest::Approx(4.0));
            CHECK(f02.data.at(1, y, x) == doctest::Approx(0.0));
            CHECK(f01.data.at(0, y, x) == doctest::Approx(2.0));
        }
    CHECK(any);

    // static scene: identical frames, zero flow
    SceneConfig still = cfg;
    still.objects[0].trajectory.velocity = {0, 0};
    Scene s2 = generate_scene(still);
    for (size_t i = 0; i < s2.frames().frames[0].size(); ++i)
        CHECK(s2.frames().frames[0][i] == s2.frames().frames[2][i]);
    FlowField zero = s2.flow_between(0, 2);
    for (size_t i = 0; i < zero.data.size(); ++i) CHECK(zero.data[i] == 0.0);

    // quadratic: midpoint displacement is not half the endpoint displacement
    SceneConfig quad = cfg;
    quad.objects[0].trajectory.kind = Trajectory::Kind::kQuadratic;
    quad.objects[0].trajectory.velocity = {0, 0};
    quad.objects[0].trajectory.accel = {8, 0};
    Vec2 start = quad.objects[0].trajectory.position(0.0);
    Vec2 mid = quad.objects[0].trajectory.position(0.5);
    Vec2 end = quad.objects[0].trajectory.position(1.0);
    CHECK(mid.x - start.x == doctest::Approx(2.0)); // a t^2 at t=0.5
    CHECK(end.x - start.x == doctest::Approx(8.0));
    CHECK(std::abs((mid.x - start.x) - 0.5 * (end.x - start.x)) > 1.0);

    Scene again = generate_scene(cfg);
    for (size_t f = 0; f < 3; ++f)
        for (size_t i = 0; i < scene.frames().frames[f].size(); ++i)
            CHECK(scene.frames().frames[f][i] == again.frames().frames[f][i]);

    CHECK_THROWS_WITH_AS(generate_scene(SceneConfig{}), doctest::Contains("EmptyScene"), Error);
}
