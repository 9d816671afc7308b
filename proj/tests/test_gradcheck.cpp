#include <gtest/gtest.h>

#include <chrono>

#include "spatialbeam/gradcheck.hpp"

using namespace spatialbeam;

TEST(Gradcheck, AllPoolingModesPass) {
    const auto t0 = std::chrono::steady_clock::now();
    for (const auto& [mode, name] : pooling_names()) {
        const auto rep = run_gradcheck({}, mode);
        EXPECT_TRUE(rep.passed) << format_report(rep);
        EXPECT_LE(rep.max_rel_error, 1e-4) << name;
        for (const auto& t : rep.tensors) {
            if (!t.absent) {
                EXPECT_GT(t.checked, 0u) << name << " " << t.name;
            }
        }
    }
    EXPECT_LE(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 120.0);
}

TEST(Gradcheck, NonAttentionModesReportAbsentSubnet) {
    const auto rep = run_gradcheck({}, PoolingMode::Average);
    std::size_t absent = 0;
    for (const auto& t : rep.tensors)
        if (t.absent) {
            ++absent;
            EXPECT_EQ(t.name.rfind("attention.", 0), 0u);
            EXPECT_EQ(t.checked, 0u);
        }
    // Two LSTM layers (wx, wh, b each) plus the projection.
    EXPECT_EQ(absent, 8u);
    EXPECT_NE(format_report(rep).find("absent"), std::string::npos);
    const auto att = run_gradcheck({}, PoolingMode::AttentionOnline);
    for (const auto& t : att.tensors) EXPECT_FALSE(t.absent);
}

TEST(Gradcheck, EpsilonSweepIsUShaped) {
    // Truncation error dominates for large steps, cancellation for tiny ones.
    const auto pb = make_gradcheck_problem({}, PoolingMode::AttentionOnline);
    const double big = gradcheck_max_abs_error(pb, 1e-1);
    const double mid = gradcheck_max_abs_error(pb, 1e-6);
    const double tiny = gradcheck_max_abs_error(pb, 1e-12);
    EXPECT_LT(mid, big);
    EXPECT_LT(mid, tiny);
}

TEST(Gradcheck, ToleranceIsEnforced) {
    // Finite differences are never exact, so an impossible tolerance must fail.
    GradcheckSetup g;
    g.tolerance = 1e-12;
    EXPECT_FALSE(run_gradcheck(g, PoolingMode::AttentionOffline).passed);
}
