#include "doctest.h"

#include <cmath>
#include <fstream>

#include "evfi/networks.hpp"
#include "evfi/rng.hpp"
#include "evfi/simulator.hpp"
#include "test_helpers.hpp"

using namespace evfi;

namespace {

Tensor random_input(std::vector<int> shape, uint64_t seed) {
    Rng rng(seed);
    Tensor t(std::move(shape));
    for (size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-1, 1);
    return t;
}

} // namespace

TEST_CASE("hourglass shape contract and determinism") {
    HourglassConfig cfg;
    cfg.in_channels = 8;
    cfg.out_channels = 3;
    cfg.levels = 3;
    cfg.base_width = 16;
    Hourglass net(cfg, 21);

    Var out = net(constant(random_input({8, 64, 64}, 1)));
    CHECK(out->value.shape() == std::vector<int>{3, 64, 64});

    Hourglass again(cfg, 21);
    CHECK(hash_params(net.params()) == hash_params(again.params()));
    Hourglass other(cfg, 22);
    CHECK(hash_params(net.params()) != hash_params(other.params()));

    // padding policy: 60 -> 64 internally, cropped back
    Var odd = net(constant(random_input({8, 60, 60}, 2)));
    CHECK(odd->value.shape() == std::vector<int>{3, 60, 60});

    CHECK(net.param_count() == again.param_count());
}

TEST_CASE("hourglass shape preservation over randomized configs") {
    Rng rng(77);
    for (int trial = 0; trial < 8; ++trial) {
        HourglassConfig cfg;
        cfg.in_channels = 1 + static_cast<int>(rng.below(6));
        cfg.out_channels = 1 + static_cast<int>(rng.below(4));
        cfg.levels = 1 + static_cast<int>(rng.below(3));
        cfg.base_width = 4 + static_cast<int>(rng.below(8));
        cfg.norm = rng.uniform() < 0.5 ? HourglassConfig::Norm::kInstance
                                       : HourglassConfig::Norm::kNone;
        cfg.final_activation = rng.uniform() < 0.5 ? HourglassConfig::FinalActivation::kSigmoid
                                                   : HourglassConfig::FinalActivation::kNone;
        Hourglass net(cfg, 100 + trial);
        int h = 9 + static_cast<int>(rng.below(24));
        int w = 9 + static_cast<int>(rng.below(24));
        Var out = net(constant(random_input({cfg.in_channels, h, w}, 200 + trial)));
        CHECK(out->value.shape() == std::vector<int>{cfg.out_channels, h, w});
        if (cfg.final_activation == HourglassConfig::FinalActivation::kSigmoid)
            for (size_t i = 0; i < out->value.size(); ++i) {
                CHECK(out->value[i] > 0.0);
                CHECK(out->value[i] < 1.0);
            }
    }
}

TEST_CASE("gradients reach almost every parameter") {
    HourglassConfig cfg;
    cfg.in_channels = 4;
    cfg.out_channels = 2;
    cfg.levels = 2;
    cfg.base_width = 8;
    Hourglass net(cfg, 5);
    net.set_trainable(true);

    Var out = net(constant(random_input({4, 16, 16}, 3)));
    Var loss = mean_sq_diff(out, constant(random_input({2, 16, 16}, 4)));
    backward(loss);

    size_t total = 0, nonzero = 0;
    for (const auto& p : net.params()) {
        REQUIRE(p.var->has_grad());
        for (size_t i = 0; i < p.var->grad.size(); ++i) {
            ++total;
            if (p.var->grad[i] != 0.0) ++nonzero;
        }
    }
    CHECK(static_cast<double>(nonzero) / static_cast<double>(total) > 0.99);
}

TEST_CASE("zero-initialized head makes the hourglass start at zero") {
    HourglassConfig cfg;
    cfg.in_channels = 7;
    cfg.out_channels = 2;
    cfg.levels = 2;
    cfg.base_width = 8;
    cfg.zero_init_head = true;
    Hourglass net(cfg, 9);
    Var out = net(constant(random_input({7, 12, 12}, 10)));
    for (size_t i = 0; i < out->value.size(); ++i) CHECK(out->value[i] == 0.0);
}

TEST_CASE("residual-from-input head starts as the identity on the image channels") {
    HourglassConfig cfg;
    cfg.in_channels = 8;
    cfg.out_channels = 3;
    cfg.levels = 2;
    cfg.base_width = 8;
    cfg.zero_init_head = true;
    cfg.residual_from_input = 3;
    Hourglass net(cfg, 11);
    Tensor input = random_input({8, 12, 12}, 12);
    Var out = net(constant(input));
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 12; ++y)
            for (int x = 0; x < 12; ++x) CHECK(out->value.at(c, y, x) == input.at(c, y, x));
}

TEST_CASE("toy feature extractor is frozen, deterministic and scale-aware") {
    ToyFeatureExtractor fx(3);
    Tensor img = random_input({3, 32, 32}, 8);
    for (size_t i = 0; i < img.size(); ++i) img[i] = 0.5 + 0.4 * img[i];

    auto f1 = fx.extract(constant(img));
    auto f2 = fx.extract(constant(img));
    REQUIRE(f1.size() == 3);
    CHECK(f1[0]->value.shape() == std::vector<int>{8, 16, 16});
    CHECK(f1[1]->value.shape() == std::vector<int>{12, 8, 8});
    CHECK(f1[2]->value.shape() == std::vector<int>{16, 4, 4});
    for (size_t l = 0; l < f1.size(); ++l)
        for (size_t i = 0; i < f1[l]->value.size(); ++i)
            CHECK(f1[l]->value[i] == f2[l]->value[i]);
    for (const auto& p : fx.params()) CHECK_FALSE(p.var->requires_grad);

    // distance grows with perturbation magnitude (3-point monotonicity)
    auto dist = [&](double scale) {
        Tensor pert = img;
        Rng rng(5);
        for (size_t i = 0; i < pert.size(); ++i) pert[i] += scale * rng.uniform(-1, 1);
        auto fa = fx.extract(constant(img));
        auto fb = fx.extract(constant(pert));
        double d = 0;
        for (size_t l = 0; l < fa.size(); ++l) {
            for (size_t i = 0; i < fa[l]->value.size(); ++i) {
                double diff = fa[l]->value[i] - fb[l]->value[i];
                d += diff * diff;
            }
        }
        return d;
    };
    double d0 = dist(0.0), d1 = dist(0.05), d2 = dist(0.2);
    CHECK(d0 == 0.0);
    CHECK(d1 > d0);
    CHECK(d2 > d1);
}

TEST_CASE("gt flow estimator returns analytic flows and honors the noise knob") {
    Scene still = generate_scene(test::tiny_scene_config(24, 4, false, {0, 0}));
    FlowField f01 = still.flow_between(0, 3), f10 = still.flow_between(3, 0);
    GtFlowEstimator est(f01, f10);
    Var i0 = constant(still.frames().frames.front());
    Var i1 = constant(still.frames().frames.back());
    FlowEstimate e = est.estimate(i0, i1);
    for (size_t i = 0; i < e.f01->value.size(); ++i) {
        CHECK(e.f01->value[i] == 0.0);
        CHECK(e.f10->value[i] == 0.0);
    }

    Scene moving = generate_scene(test::tiny_scene_config(24, 4, false, {2, 0}));
    FlowField m01 = moving.flow_between(0, 3);
    Tensor mask = moving.object_mask(0.0);
    GtFlowEstimator est2(m01, moving.flow_between(3, 0));
    FlowEstimate e2 = est2.estimate(constant(moving.frames().frames.front()),
                                    constant(moving.frames().frames.back()));
    for (int y = 0; y < 24; ++y)
        for (int x = 0; x < 24; ++x)
            if (mask.at(y, x) == 1.0) CHECK(e2.f01->value.at(0, y, x) == doctest::Approx(2.0));

    // corruption statistics: mean ~ 0, std ~ sigma
    const double sigma = 1.0;
    GtFlowEstimator noisy(m01, moving.flow_between(3, 0), sigma, 77);
    FlowEstimate en = noisy.estimate(constant(moving.frames().frames.front()),
                                     constant(moving.frames().frames.back()));
    double sum = 0, sq = 0;
    size_t n = en.f01->value.size();
    for (size_t i = 0; i < n; ++i) {
        double d = en.f01->value[i] - m01.data[i];
        sum += d;
        sq += d * d;
    }
    double mean = sum / n;
    double std_dev = std::sqrt(sq / n - mean * mean);
    CHECK(std::abs(mean) < 0.1);
    CHECK(std_dev == doctest::Approx(sigma).epsilon(0.15));

    // repeated estimates are identical (noise drawn once)
    FlowEstimate en2 = noisy.estimate(constant(moving.frames().frames.front()),
                                      constant(moving.frames().frames.back()));
    for (size_t i = 0; i < n; ++i) CHECK(en.f01->value[i] == en2.f01->value[i]);
}

TEST_CASE("checkpoint save/load round trip preserves behaviour") {
    HourglassConfig cfg;
    cfg.in_channels = 5;
    cfg.out_channels = 2;
    cfg.levels = 2;
    cfg.base_width = 6;
    Hourglass net(cfg, 31);
    std::string dir = test::fresh_dir("ckpt");

    save_checkpoint(dir + "/net.ckpt", {{"kind", "hourglass"}}, net.params());
    Checkpoint ck = load_checkpoint(dir + "/net.ckpt");
    CHECK(ck.meta.at("kind") == "hourglass");

    Hourglass other(cfg, 999);
    auto params = other.params();
    restore_params(ck, params);
    // saving the restored net reproduces the file byte-for-byte
    save_checkpoint(dir + "/net2.ckpt", {{"kind", "hourglass"}}, other.params());
    std::ifstream a(dir + "/net.ckpt", std::ios::binary), b(dir + "/net2.ckpt", std::ios::binary);
    std::string ba((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
    std::string bb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
    CHECK(ba == bb);

    CHECK_THROWS_WITH_AS(load_checkpoint(dir + "/missing.ckpt"),
                         doctest::Contains("MissingCheckpoint"), Error);
}
