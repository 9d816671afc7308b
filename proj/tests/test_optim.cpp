#include <gtest/gtest.h>

#include "spatialbeam/optim.hpp"

using namespace spatialbeam;

TEST(Adam, FirstStepMovesByLearningRate) {
    Tensor p("w", {2});
    p.data = {1.0, -1.0};
    Tensor g("gw", {2});
    g.data = {2.0, -0.5};
    auto st = OptimizerState::for_params({&p}, 0.001);
    adam_step({&p}, {&g}, st);
    // Bias correction makes the first step lr * g / (|g| + eps).
    EXPECT_NEAR(p.data[0], 1.0 - 0.001 * 2.0 / (2.0 + 1e-8), 1e-15);
    EXPECT_NEAR(p.data[1], -1.0 + 0.001 * 0.5 / (0.5 + 1e-8), 1e-15);
    EXPECT_EQ(st.step, 1u);
}

TEST(Adam, TwoStepScalarOracle) {
    Tensor p("w", {1});
    p.data = {0.3};
    Tensor g("gw", {1});
    auto st = OptimizerState::for_params({&p}, 0.01);
    const double g1 = 0.7, g2 = -0.2;
    g.data = {g1};
    adam_step({&p}, {&g}, st);
    g.data = {g2};
    adam_step({&p}, {&g}, st);

    double w = 0.3, m = 0, v = 0;
    int k = 0;
    for (double gr : {g1, g2}) {
        ++k;
        m = 0.9 * m + 0.1 * gr;
        v = 0.999 * v + 0.001 * gr * gr;
        const double mh = m / (1 - std::pow(0.9, k)), vh = v / (1 - std::pow(0.999, k));
        w -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
    }
    EXPECT_NEAR(p.data[0], w, 1e-15);
    EXPECT_NEAR(st.m[0].data[0], m, 1e-15);
    EXPECT_NEAR(st.v[0].data[0], v, 1e-15);
}

TEST(Adam, NonFiniteGradientNamesTensor) {
    Tensor a("frontend.w_re", {2}), b("backend.out_b", {1});
    Tensor ga("g", {2}), gb("g", {1});
    gb.data[0] = std::numeric_limits<double>::quiet_NaN();
    auto st = OptimizerState::for_params({&a, &b}, 0.1);
    try {
        adam_step({&a, &b}, {&ga, &gb}, st);
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("backend.out_b"), std::string::npos);
    }
    // Nothing was updated.
    EXPECT_EQ(st.step, 0u);
    EXPECT_EQ(a.data[0], 0.0);
}

TEST(Adam, ShapeMismatchThrows) {
    Tensor a("a", {2}), g("g", {3});
    auto st = OptimizerState::for_params({&a}, 0.1);
    EXPECT_THROW(adam_step({&a}, {&g}, st), ShapeError);
}

TEST(Clip, RescalesOnlyAboveThreshold) {
    Tensor a("a", {2}), b("b", {1});
    a.data = {6.0, 0.0};
    b.data = {8.0};
    EXPECT_DOUBLE_EQ(clip_global_norm({&a, &b}, 5.0), 10.0);
    EXPECT_DOUBLE_EQ(a.data[0], 3.0);
    EXPECT_DOUBLE_EQ(b.data[0], 4.0);
    EXPECT_DOUBLE_EQ(global_norm({&a, &b}), 5.0);
    EXPECT_DOUBLE_EQ(clip_global_norm({&a, &b}, 5.0), 5.0);
    EXPECT_DOUBLE_EQ(a.data[0], 3.0);
    Tensor z("z", {3});
    EXPECT_EQ(clip_global_norm({&z}, 5.0), 0.0);
}

TEST(Schedule, HalvesOnNonDecrease) {
    PlateauSchedule s(0.001, 1, 2.0);
    EXPECT_FALSE(s.update(1.0));
    EXPECT_DOUBLE_EQ(s.lr(), 0.001);
    EXPECT_TRUE(s.update(1.0));  // equal counts as non-decrease
    EXPECT_DOUBLE_EQ(s.lr(), 0.0005);
    EXPECT_FALSE(s.update(0.9));
    EXPECT_TRUE(s.update(0.95));
    EXPECT_DOUBLE_EQ(s.lr(), 0.00025);
    EXPECT_EQ(s.non_decreasing_epochs(), 2u);
}

TEST(Schedule, FirstEpochComparesWithInitialLoss) {
    PlateauSchedule s(0.01, 1, 1.0);
    EXPECT_TRUE(s.update(1.5));
    EXPECT_DOUBLE_EQ(s.lr(), 0.005);
}

TEST(Schedule, Patience) {
    PlateauSchedule s(1.0, 2, 1.0);
    EXPECT_FALSE(s.update(1.0));
    EXPECT_TRUE(s.update(1.0));
    EXPECT_FALSE(s.update(2.0));
    EXPECT_FALSE(s.update(0.5));
    EXPECT_DOUBLE_EQ(s.lr(), 0.5);
}

TEST(Schedule, RestoreRoundTrip) {
    PlateauSchedule a(1.0, 2, 3.0);
    a.update(4.0);
    PlateauSchedule b(0.0, 2, 0.0);
    b.restore(a.lr(), a.previous(), a.bad(), a.non_decreasing_epochs());
    EXPECT_EQ(a.update(5.0), b.update(5.0));
    EXPECT_EQ(a.lr(), b.lr());
}
