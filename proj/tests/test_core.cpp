#include <gtest/gtest.h>

#include <cstdint>
#include <set>

#include "spatialbeam/core.hpp"

using namespace spatialbeam;

TEST(Rng, SameSeedSameStream) {
    Rng a(42), b(42);
    for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, StateRoundTrip) {
    Rng a(7);
    for (int i = 0; i < 10; ++i) a.normal();
    Rng b(0);
    b.set_state(a.state());
    for (int i = 0; i < 100; ++i) ASSERT_EQ(a.normal(), b.normal());
}

TEST(Rng, UniformMoments) {
    Rng r(3);
    double s = 0, s2 = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double u = r.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        s += u;
        s2 += u * u;
    }
    EXPECT_NEAR(s / n, 0.5, 0.01);
    EXPECT_NEAR(s2 / n - (s / n) * (s / n), 1.0 / 12.0, 0.01);
}

TEST(Rng, NormalMoments) {
    Rng r(5);
    double s = 0, s2 = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double v = r.normal();
        s += v;
        s2 += v * v;
    }
    EXPECT_NEAR(s / n, 0.0, 0.01);
    EXPECT_NEAR(s2 / n, 1.0, 0.02);
}

TEST(Rng, IndexAndShuffle) {
    Rng r(9);
    for (int i = 0; i < 1000; ++i) ASSERT_LT(r.index(7), 7u);
    std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    r.shuffle(v);
    std::multiset<int> got(v.begin(), v.end());
    EXPECT_EQ(got, (std::multiset<int>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9}));
}

TEST(Seeds, DerivedSeedsDiffer) {
    std::set<std::uint64_t> seen;
    for (std::uint64_t i = 0; i < 1000; ++i) seen.insert(derive_seed(1, i));
    seen.insert(derive_seed(1, "train"));
    seen.insert(derive_seed(1, "eval"));
    EXPECT_EQ(seen.size(), 1002u);
    EXPECT_EQ(derive_seed(11, "simulate"), derive_seed(11, "simulate"));
    EXPECT_NE(derive_seed(11, "simulate"), derive_seed(12, "simulate"));
}

TEST(Tensor, MatrixView) {
    Tensor t("x", {2, 3, 4});
    EXPECT_EQ(t.size(), 24u);
    EXPECT_EQ(t.mat().rows(), 2);
    EXPECT_EQ(t.mat().cols(), 12);
    t.mat()(1, 0) = 5.0;
    EXPECT_EQ(t.data[12], 5.0);
    EXPECT_EQ(dims_to_string(t.dims), "[2x3x4]");
}

TEST(Tensor, StorageAligned) {
    for (int i = 0; i < 20; ++i) {
        Tensor t("x", {static_cast<std::size_t>(i + 1)});
        EXPECT_EQ(reinterpret_cast<std::uintptr_t>(t.data.data()) % EIGEN_MAX_ALIGN_BYTES, 0u);
    }
}

TEST(Array3, Indexing) {
    Array3 a(2, 3, 4);
    a(1, 2, 3) = 7.0;
    EXPECT_EQ(a.data.back(), 7.0);
    EXPECT_EQ(a.row(1, 2)[3], 7.0);
}
