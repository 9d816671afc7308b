#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "spatialbeam/scene.hpp"

using namespace spatialbeam;
namespace fs = std::filesystem;

namespace {

std::vector<double> noise(std::size_t n, std::uint64_t seed) {
    Rng r(seed);
    std::vector<double> v(n);
    for (double& x : v) x = r.normal();
    return v;
}

double rms(const std::vector<double>& v, std::size_t lo, std::size_t hi) {
    double acc = 0.0;
    for (std::size_t i = lo; i < hi; ++i) acc += v[i] * v[i];
    return std::sqrt(acc / static_cast<double>(hi - lo));
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

fs::path temp_dir(const std::string& name) {
    const auto d = fs::temp_directory_path() / ("sb_scene_" + name);
    fs::remove_all(d);
    return d;
}

SimulationConfig small_sim(std::size_t train, std::size_t eval) {
    SimulationConfig c;
    c.train_count = train;
    c.eval_count = eval;
    c.duration_s = 0.4;
    return c;
}

}  // namespace

TEST(Steering, ZeroFrequencyIsAllOnes) {
    const auto d = steering_vector(ArrayGeometry::rectangle(), unit_direction(1.0, 0.2), 0.0);
    for (const auto& v : d) EXPECT_EQ(v, cdouble(1.0, 0.0));
}

TEST(Steering, BroadsideEqualPhases) {
    ArrayGeometry g{{{-0.03, 0, 0}, {0.03, 0, 0}}};
    const auto d = steering_vector(g, {0, 1, 0}, 3000.0);
    EXPECT_LE(std::abs(d[0] - d[1]), 1e-12);
}

TEST(Steering, TwoMicPhaseDifferenceHandOracle) {
    ArrayGeometry g{{{0, 0, 0}, {0.06, 0, 0}}};
    const auto d = steering_vector(g, {1, 0, 0}, 1000.0, 343.0);
    const double expected = 2.0 * kPi * 1000.0 * 0.06 / 343.0;
    EXPECT_NEAR(std::arg(d[1] / d[0]), expected, 1e-12);
}

TEST(Steering, UnitMagnitude) {
    Rng r(1);
    const auto g = ArrayGeometry::rectangle();
    for (int i = 0; i < 500; ++i) {
        const auto d = steering_vector(g, unit_direction(r.uniform(0, 2 * kPi), r.uniform(-1.5, 1.5)), r.uniform(0, 8000));
        for (const auto& v : d) ASSERT_LE(std::abs(std::abs(v) - 1.0), 1e-12);
    }
}

TEST(Steering, ZeroDirectionThrows) {
    EXPECT_THROW(steering_vector(ArrayGeometry::rectangle(), {0, 0, 0}, 100.0), ConfigError);
}

TEST(Geometry, DefaultRectangle) {
    const auto g = ArrayGeometry::rectangle();
    ASSERT_EQ(g.size(), 4u);
    const auto c = g.centroid();
    for (double v : c) EXPECT_NEAR(v, 0.0, 1e-15);
    EXPECT_NEAR(g.aperture(), std::hypot(0.06, 0.07), 1e-15);
    ArrayGeometry dup{{{0, 0, 0}, {0, 0, 0}}};
    EXPECT_THROW(dup.validate(), ConfigError);
}

TEST(Render, EquidistantMicsIdentical) {
    ArrayGeometry g{{{-0.03, 0, 0}, {0.03, 0, 0}}};
    const auto x = noise(2000, 2);
    const auto out = render_source(x, 16000, g, {kPi / 2, 0.0, 2.0});
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, std::abs(out.samples[0][i] - out.samples[1][i]));
    EXPECT_LE(worst, 1e-6);
}

TEST(Render, InverseDistanceLaw) {
    ArrayGeometry g{{{-0.03, 0, 0}, {0.03, 0, 0}}};
    auto x = noise(8000, 3);
    for (std::size_t i = 6000; i < 8000; ++i) x[i] = 0.0;  // room for the delay
    const auto near = render_source(x, 16000, g, {kPi / 2, 0.0, 1.5});
    const auto far = render_source(x, 16000, g, {kPi / 2, 0.0, 3.0});
    const double r1 = std::hypot(1.5, 0.03), r2 = std::hypot(3.0, 0.03);
    const double ratio = rms(far.samples[0], 0, 8000) / rms(near.samples[0], 0, 8000);
    EXPECT_NEAR(ratio, r1 / r2, 2e-3);
    EXPECT_NEAR(ratio, 0.5, 2e-3);
}

TEST(Render, IntegerDelayCrossCorrelationPeak) {
    ArrayGeometry g{{{0, 0, 0}}};
    const auto x = noise(4000, 4);
    const double dist = 10.0 * 343.0 / 16000.0;
    const auto y = render_source(x, 16000, g, {0.0, 0.0, dist});
    long best = -1;
    double best_v = -1e300;
    for (long lag = 0; lag < 40; ++lag) {
        double acc = 0.0;
        for (std::size_t i = static_cast<std::size_t>(lag); i < x.size(); ++i) acc += y.samples[0][i] * x[i - static_cast<std::size_t>(lag)];
        if (acc > best_v) {
            best_v = acc;
            best = lag;
        }
    }
    EXPECT_EQ(best, 10);
}

TEST(Render, Linearity) {
    const auto g = ArrayGeometry::rectangle();
    const auto x = noise(3000, 5), y = noise(3000, 6);
    std::vector<double> comb(3000);
    const double a = 0.7, b = -1.3;
    for (std::size_t i = 0; i < comb.size(); ++i) comb[i] = a * x[i] + b * y[i];
    for (int order : {0, 1}) {
        RenderOptions opt;
        opt.reflection_order = order;
        const SourcePlacement pl{1.1, 0.2, 2.5};
        const auto rx = render_source(x, 16000, g, pl, opt), ry = render_source(y, 16000, g, pl, opt);
        const auto rc = render_source(comb, 16000, g, pl, opt);
        double worst = 0.0;
        for (std::size_t m = 0; m < 4; ++m)
            for (std::size_t i = 0; i < comb.size(); ++i)
                worst = std::max(worst, std::abs(rc.samples[m][i] - (a * rx.samples[m][i] + b * ry.samples[m][i])));
        EXPECT_LE(worst, 1e-9);
    }
}

TEST(Render, ReflectionsAddEnergy) {
    const auto g = ArrayGeometry::rectangle();
    const auto x = noise(4000, 7);
    RenderOptions opt;
    const SourcePlacement pl{0.5, 0.0, 2.0};
    const auto direct = render_source(x, 16000, g, pl, opt);
    opt.reflection_order = 1;
    const auto refl = render_source(x, 16000, g, pl, opt);
    EXPECT_GT(mean_power(refl), mean_power(direct));
    opt.room.size = {3, 3, 3};
    opt.room.array_position = {1.5, 1.5, 1.5};
    EXPECT_THROW(render_source(x, 16000, g, {0.0, 0.0, 3.5}, opt), ConfigError);
}

TEST(Render, InsideHullRejected) {
    const auto g = ArrayGeometry::rectangle();
    const auto x = noise(100, 8);
    try {
        render_source(x, 16000, g, {0.0, 0.0, 0.02});
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("inside the array hull"), std::string::npos);
    }
}

TEST(Mix, EqualPowerZeroDbUnitGain) { EXPECT_DOUBLE_EQ(snr_gain(0.25, 0.25, 0.0), 1.0); }

TEST(Mix, FormulaOracle) {
    // RMS 0.1 each -> powers 0.01; 20 dB -> g = sqrt(0.01 / (0.01 * 100)) = 0.1.
    EXPECT_NEAR(snr_gain(0.1 * 0.1, 0.1 * 0.1, 20.0), 0.1, 1e-15);
}

TEST(Mix, MeasuredSnrMatchesTarget) {
    Rng r(9);
    for (int trial = 0; trial < 100; ++trial) {
        MultiChannelWaveform s(4, 2000, 16000), n(4, 2000, 16000);
        for (auto& ch : s.samples)
            for (double& v : ch) v = r.normal() * 0.3;
        for (auto& ch : n.samples)
            for (double& v : ch) v = r.normal() * 0.05;
        const double target = r.uniform(0, 25);
        const auto mix = mix_at_snr(s, n, target);
        MultiChannelWaveform resid = mix;
        for (std::size_t m = 0; m < 4; ++m)
            for (std::size_t i = 0; i < 2000; ++i) resid.samples[m][i] -= s.samples[m][i];
        const double measured = 10 * std::log10(mean_power(s) / mean_power(resid));
        EXPECT_LE(std::abs(measured - target), 0.1);
    }
}

TEST(Mix, SilentNoiseRejected) {
    MultiChannelWaveform s(1, 10, 16000), n(1, 10, 16000);
    s.samples[0][0] = 1.0;
    EXPECT_THROW(mix_at_snr(s, n, 10.0), Error);
}

TEST(Scene, PlacementRangesAndSeparation) {
    SimulationConfig c;
    for (std::uint64_t i = 0; i < 500; ++i) {
        const auto s = random_scene(c, derive_seed(3, i));
        for (const auto* p : {&s.speech, &s.noise}) {
            EXPECT_GE(p->azimuth, 0.0);
            EXPECT_LT(p->azimuth, 2 * kPi);
            EXPECT_LE(std::abs(p->elevation), 20.0 * kPi / 180.0);
            EXPECT_GE(p->distance, 1.0);
            EXPECT_LE(p->distance, 4.0);
        }
        EXPECT_GE(azimuth_separation(s.speech.azimuth, s.noise.azimuth), kPi / 4);
        EXPECT_GE(s.snr_db, 0.0);
        EXPECT_LE(s.snr_db, 25.0);
    }
}

TEST(Scene, ClassTonesAreDistinctPairs) {
    SimulationConfig c;
    EXPECT_EQ(c.tone_grid_size(), 5u);
    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (std::size_t k = 1; k <= c.num_classes; ++k) seen.insert(class_tones(k, 5));
    EXPECT_EQ(seen.size(), c.num_classes);
}

TEST(Scene, LabelsFollowSymbols) {
    SimulationConfig c;
    c.duration_s = 2.0;
    const auto scene = random_scene(c, 11);
    const auto u = simulate_utterance(c, ArrayGeometry::rectangle(), scene);
    EXPECT_EQ(u.mixture.channels(), 4u);
    EXPECT_EQ(u.frame_labels.size(), 1u + (32000u - 400u) / 160u);
    std::set<int> classes(u.frame_labels.begin(), u.frame_labels.end());
    EXPECT_TRUE(classes.count(0));
    EXPECT_GE(classes.size(), 3u);
    for (int l : classes) EXPECT_LE(l, 10);
}

TEST(Scene, InterferenceKinds) {
    SimulationConfig c;
    c.noise_broadband_fraction = 0.0;
    const auto n = static_cast<std::size_t>(std::llround(c.duration_s * c.sample_rate));
    // Without the floor the symbol interferer is exactly a second symbol stream
    // with its own gap range.
    Rng a(4), b(4);
    EXPECT_EQ(synthesize_interference(c, a), synthesize_symbols(c, b, c.noise_gap_min_s, c.noise_gap_max_s).samples);
    c.noise_kind = "bands";
    Rng r(4);
    const auto bands = synthesize_interference(c, r);
    ASSERT_EQ(bands.size(), n);
    double p = 0;
    for (double v : bands) p += v * v;
    EXPECT_GT(p, 0.0);
    c.noise_kind = "hum";
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Dataset, ZeroCountIsEmpty) {
    const auto dir = temp_dir("empty");
    const auto ds = generate_dataset(small_sim(0, 0), ArrayGeometry::rectangle(), dir);
    EXPECT_TRUE(ds.train.entries.empty());
    EXPECT_TRUE(ds.eval.entries.empty());
    EXPECT_FALSE(fs::exists(dir / "train"));
    EXPECT_EQ(slurp(dir / "train.jsonl"), "");
}

TEST(Dataset, DeterministicBytes) {
    const auto a = temp_dir("det_a"), b = temp_dir("det_b");
    generate_dataset(small_sim(4, 2), ArrayGeometry::rectangle(), a);
    generate_dataset(small_sim(4, 2), ArrayGeometry::rectangle(), b);
    for (const auto* m : {"train.jsonl", "eval.jsonl", "train/train_00003.wav", "eval/eval_00001.wav",
                          "train/train_00000.labels"})
        EXPECT_EQ(slurp(a / m), slurp(b / m)) << m;
    const auto c = temp_dir("det_c");
    auto cfg = small_sim(4, 2);
    cfg.seed = 99;
    generate_dataset(cfg, ArrayGeometry::rectangle(), c);
    EXPECT_NE(slurp(a / "train.jsonl"), slurp(c / "train.jsonl"));
}

TEST(Dataset, FiveHundredUniqueIdsSpanSnrRange) {
    const auto dir = temp_dir("five_hundred");
    auto cfg = small_sim(500, 0);
    cfg.duration_s = 0.1;
    generate_dataset(cfg, ArrayGeometry::rectangle(), dir);
    const auto m = load_manifest(dir / "train.jsonl");
    ASSERT_EQ(m.entries.size(), 500u);
    std::set<std::string> ids;
    double lo = 1e9, hi = -1e9;
    for (const auto& e : m.entries) {
        ids.insert(e.id);
        lo = std::min(lo, e.scene.snr_db);
        hi = std::max(hi, e.scene.snr_db);
    }
    EXPECT_EQ(ids.size(), 500u);
    EXPECT_GE(lo, 0.0);
    EXPECT_LE(hi, 25.0);
    EXPECT_LE(lo, 1.0);
    EXPECT_GE(hi, 24.0);
}

TEST(Dataset, ManifestRoundTripAndChecks) {
    const auto dir = temp_dir("manifest");
    const auto ds = generate_dataset(small_sim(3, 1), ArrayGeometry::rectangle(), dir);
    const auto m = load_manifest(dir / "train.jsonl");
    ASSERT_EQ(m.entries.size(), 3u);
    EXPECT_EQ(m.split, "train");
    EXPECT_EQ(m.entries[1].id, ds.train.entries[1].id);
    EXPECT_EQ(m.entries[1].scene.snr_db, ds.train.entries[1].scene.snr_db);
    EXPECT_EQ(read_labels(m.labels(m.entries[0])).size(), 1 + (read_wav(m.mixture(m.entries[0])).length() - 400) / 160);
    // Duplicate ids are rejected.
    {
        std::ofstream os(dir / "dup.jsonl");
        const auto line = manifest_line(ds.train, ds.train.entries[0]);
        os << line << '\n' << line << '\n';
    }
    EXPECT_THROW(load_manifest(dir / "dup.jsonl"), Error);
    fs::remove(dir / "train" / "train_00002.wav");
    EXPECT_THROW(load_manifest(dir / "train.jsonl"), Error);
}

TEST(Dataset, UnwritableDirectory) {
    EXPECT_THROW(generate_dataset(small_sim(1, 0), ArrayGeometry::rectangle(), "/proc/version/sub"), Error);
}
