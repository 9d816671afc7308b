#include <gtest/gtest.h>

#include "spatialbeam/config.hpp"

using namespace spatialbeam;

namespace {

std::string config_error(const std::string& text) {
    try {
        parse_config_text(text);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST(Config, EmptyFileGivesDefaults) {
    const auto c = parse_config_text("");
    EXPECT_EQ(c.seed, 1u);
    EXPECT_EQ(c.frontend.p, 6u);
    EXPECT_EQ(c.frontend.l, 32u);
    EXPECT_EQ(c.dsp.resolved_fft(), 512u);
    EXPECT_EQ(c.dsp.bins(), 257u);
    EXPECT_EQ(c.array.size(), 4u);
    EXPECT_EQ(c.variants.size(), 6u);
    EXPECT_EQ(c.classes(), c.simulation.num_classes + 1);
    EXPECT_EQ(parse_config_text("  \n").frontend.p, 6u);
    EXPECT_EQ(config_to_json(parse_config_text("{}")).dump(), config_to_json(c).dump());
}

TEST(Config, ZeroDirectionsNamesField) {
    EXPECT_NE(config_error(R"({"frontend": {"p": 0}})").find("frontend.p"), std::string::npos);
}

TEST(Config, FftSizeEchoedWithBins) {
    const auto c = parse_config_text(R"({"dsp": {"fft_size": 512}})");
    const auto j = config_to_json(c);
    EXPECT_EQ(j["dsp"]["fft_size"], 512);
    EXPECT_EQ(j["dsp"]["bins"], 257);
    EXPECT_EQ(j["frontend"]["m"], 4);
    const auto big = config_to_json(parse_config_text(R"({"dsp": {"fft_size": 1024}})"));
    EXPECT_EQ(big["dsp"]["bins"], 513);
}

TEST(Config, Rejections) {
    EXPECT_NE(config_error(R"({"frontend": {"q": 1}})").find("frontend.q"), std::string::npos);
    EXPECT_NE(config_error(R"({"bogus": 1})").find("bogus"), std::string::npos);
    EXPECT_NE(config_error(R"({"dsp": {"fft_size": 300}})").find("dsp.fft_size"), std::string::npos);
    EXPECT_NE(config_error(R"({"dsp": {"fft_size": 256}})").find("dsp.fft_size"), std::string::npos);
    EXPECT_NE(config_error(R"({"dsp": {"fft_size": 512, "bins": 100}})").find("dsp.bins"), std::string::npos);
    EXPECT_NE(config_error(R"({"training": {"lr": -1}})").find("training.lr"), std::string::npos);
    EXPECT_NE(config_error(R"({"training": {"epochs": -3}})").find("training.epochs"), std::string::npos);
    EXPECT_NE(config_error(R"({"frontend": {"l": "many"}})").find("frontend.l"), std::string::npos);
    EXPECT_NE(config_error(R"({"simulation": {"noise_kind": "hum"}})").find("simulation.noise_kind"), std::string::npos);
    EXPECT_FALSE(config_error(R"({"variants": ["median"]})").empty());
    EXPECT_FALSE(config_error(R"({"variants": []})").empty());
    EXPECT_FALSE(config_error("{not json").empty());
    EXPECT_THROW(parse_config("/nonexistent/config.json"), ConfigError);
}

TEST(Config, ResolvedDumpRoundTrips) {
    const auto c = parse_config_text(R"({"seed": 7, "frontend": {"p": 3, "l": 8},
        "training": {"epochs": 2, "pooling": "attention-offline"}, "variants": ["average", "max"]})");
    const auto dumped = config_to_json(c).dump();
    const auto again = config_from_json(nlohmann::json::parse(dumped));
    EXPECT_EQ(config_to_json(again).dump(), dumped);
    EXPECT_EQ(again.training.pooling, PoolingMode::AttentionOffline);
    EXPECT_EQ(again.variants, (std::vector<PoolingMode>{PoolingMode::Average, PoolingMode::Max}));
}

TEST(Config, PoolingNames) {
    for (const auto& [mode, name] : pooling_names()) {
        EXPECT_EQ(parse_pooling(name), mode);
        EXPECT_EQ(to_string(mode), name);
    }
    EXPECT_THROW(parse_pooling("attention"), ConfigError);
    EXPECT_TRUE(uses_attention(PoolingMode::AttentionLatency));
    EXPECT_FALSE(uses_attention(PoolingMode::Max));
}

TEST(Config, AttentionModeMapping) {
    auto c = parse_config_text(R"({"attention": {"window": 7, "latency_frames": 20, "segment_mean": false}})");
    EXPECT_EQ(c.attention_mode(PoolingMode::AttentionOnline).window, 7u);
    EXPECT_EQ(c.attention_mode(PoolingMode::AttentionOffline).kind, AttentionKind::Offline);
    const auto lat = c.attention_mode(PoolingMode::AttentionLatency);
    EXPECT_EQ(lat.latency_frames, 20u);
    EXPECT_FALSE(lat.segment_mean);
}

TEST(Config, SimulationSeedDerivedFromRoot) {
    const auto a = parse_config_text(R"({"seed": 1})"), b = parse_config_text(R"({"seed": 2})");
    EXPECT_NE(a.resolved_simulation().seed, b.resolved_simulation().seed);
    EXPECT_EQ(a.resolved_simulation().seed, parse_config_text("").resolved_simulation().seed);
}

TEST(Config, ModelDigestTracksShapesOnly) {
    const auto base = parse_config_text("");
    auto other = base;
    other.training.epochs = 99;
    other.seed = 5;
    EXPECT_EQ(model_digest(base), model_digest(other));
    other.frontend.l = 16;
    EXPECT_NE(model_digest(base), model_digest(other));
}

TEST(Config, CustomArray) {
    const auto c = parse_config_text(R"({"array": {"positions": [[0,0,0],[0.05,0,0]]}})");
    EXPECT_EQ(c.array.size(), 2u);
    EXPECT_EQ(c.frontend_shape().channels, 2u);
    EXPECT_FALSE(config_error(R"({"array": {"positions": [[0,0]]}})").empty());
}
