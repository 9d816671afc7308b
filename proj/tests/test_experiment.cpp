#include <gtest/gtest.h>

#include "spatialbeam/experiment.hpp"

using namespace spatialbeam;
namespace fs = std::filesystem;

namespace {

const char* kTiny = R"({"seed": 11,
  "simulation": {"train_count": 10, "eval_count": 3, "duration_s": 1.0},
  "frontend": {"p": 2, "l": 4}, "attention": {"hidden": 4, "layers": 1, "window": 10},
  "backend": {"hidden": 8, "layers": 1}, "training": {"epochs": 1, "batch_size": 5}})";

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

fs::path fresh(const std::string& name) {
    const auto d = fs::temp_directory_path() / name;
    fs::remove_all(d);
    return d;
}

}  // namespace

TEST(Experiment, SingleVariantOneCheckpointOneReport) {
    auto cfg = parse_config_text(kTiny);
    cfg.variants = {PoolingMode::Max};
    ExperimentOptions opt;
    opt.out_dir = fresh("sb_exp_one");
    const auto res = run_experiment(cfg, opt);
    ASSERT_EQ(res.variants.size(), 1u);
    EXPECT_TRUE(res.variants[0].ok);
    EXPECT_TRUE(fs::exists(opt.out_dir / "max" / "model.bin"));
    EXPECT_TRUE(fs::exists(opt.out_dir / "max" / "report.json"));
    EXPECT_TRUE(fs::exists(opt.out_dir / "config.resolved.json"));
    std::size_t reports = 0;
    for (const auto& e : fs::recursive_directory_iterator(opt.out_dir))
        if (e.path().filename() == "report.json") ++reports;
    EXPECT_EQ(reports, 1u);
    const auto table = slurp(opt.out_dir / "comparison.txt");
    EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 2);
}

TEST(Experiment, SixVariantsSixRowsAndRerunIdentical) {
    const auto cfg = parse_config_text(kTiny);
    ExperimentOptions a, b;
    a.out_dir = fresh("sb_exp_six_a");
    b.out_dir = fresh("sb_exp_six_b");
    const auto ra = run_experiment(cfg, a);
    run_experiment(cfg, b);
    ASSERT_EQ(ra.variants.size(), 6u);
    const auto table = slurp(a.out_dir / "comparison.txt");
    EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 7);
    for (const auto& name : {"none", "max", "average", "attention-online", "attention-latency", "attention-offline"})
        EXPECT_NE(table.find(name), std::string::npos) << name;
    EXPECT_EQ(table, slurp(b.out_dir / "comparison.txt"));
    EXPECT_EQ(slurp(a.out_dir / "comparison.json"), slurp(b.out_dir / "comparison.json"));
    for (const auto& v : ra.variants) {
        const auto sub = to_string(v.pooling);
        EXPECT_EQ(slurp(a.out_dir / sub / "model.bin"), slurp(b.out_dir / sub / "model.bin")) << sub;
        EXPECT_EQ(slurp(a.out_dir / sub / "metrics.jsonl"), slurp(b.out_dir / sub / "metrics.jsonl")) << sub;
    }
    EXPECT_TRUE(ra.find(PoolingMode::AttentionOnline)->report.attention.has_value());
    EXPECT_FALSE(ra.find(PoolingMode::None)->report.attention.has_value());
}

TEST(Experiment, ReusesExistingData) {
    auto cfg = parse_config_text(kTiny);
    cfg.variants = {PoolingMode::Average};
    ExperimentOptions first;
    first.out_dir = fresh("sb_exp_data_src");
    run_experiment(cfg, first);
    cfg.simulate = false;
    ExperimentOptions second;
    second.out_dir = fresh("sb_exp_data_reuse");
    second.data_dir = first.out_dir / "data";
    run_experiment(cfg, second);
    EXPECT_FALSE(fs::exists(second.out_dir / "data"));
    // The files embed the config (simulate differs), so compare what was learned.
    EXPECT_EQ(slurp(first.out_dir / "average" / "metrics.jsonl"), slurp(second.out_dir / "average" / "metrics.jsonl"));
    const auto a = load_checkpoint(first.out_dir / "average" / "model.bin");
    const auto b = load_checkpoint(second.out_dir / "average" / "model.bin");
    const auto ta = std::as_const(a.params).tensors(), tb = std::as_const(b.params).tensors();
    ASSERT_EQ(ta.size(), tb.size());
    for (std::size_t i = 0; i < ta.size(); ++i) EXPECT_EQ(ta[i]->data, tb[i]->data) << ta[i]->name;
}

TEST(Experiment, Errors) {
    auto cfg = parse_config_text(kTiny);
    cfg.simulate = false;
    ExperimentOptions opt;
    opt.out_dir = fresh("sb_exp_err");
    EXPECT_THROW(run_experiment(cfg, opt), ConfigError);
    opt.out_dir.clear();
    EXPECT_THROW(run_experiment(parse_config_text(kTiny), opt), ConfigError);
}

TEST(Experiment, FailedVariantKeepsPartialResults) {
    // A target delay longer than any utterance makes every variant fail at training;
    // the table still records each failure.
    auto cfg = parse_config_text(kTiny);
    cfg.backend.delay = 1000;
    cfg.variants = {PoolingMode::Average, PoolingMode::Max};
    ExperimentOptions opt;
    opt.out_dir = fresh("sb_exp_fail");
    EXPECT_THROW(run_experiment(cfg, opt), Error);
    const auto table = slurp(opt.out_dir / "comparison.txt");
    EXPECT_NE(table.find("average              failed"), std::string::npos);
    EXPECT_NE(table.find("max                  failed"), std::string::npos);
}
