#include <gtest/gtest.h>

#include "spatialbeam/train.hpp"

using namespace spatialbeam;
namespace fs = std::filesystem;

namespace {

const char* kTiny = R"({"seed": 5,
  "simulation": {"train_count": 12, "eval_count": 2, "duration_s": 1.0},
  "frontend": {"p": 3, "l": 6}, "attention": {"hidden": 6, "layers": 1, "window": 10},
  "backend": {"hidden": 12, "layers": 1}, "training": {"epochs": 2, "batch_size": 4}})";

struct TinyData {
    ExperimentConfig cfg;
    std::vector<LoadedUtterance> train;
};

const TinyData& tiny() {
    static const TinyData d = [] {
        TinyData t;
        t.cfg = parse_config_text(kTiny);
        const auto dir = fs::temp_directory_path() / "sb_train_data";
        fs::remove_all(dir);
        generate_dataset(t.cfg.resolved_simulation(), t.cfg.array, dir);
        t.train = load_utterances(load_manifest(dir / "train.jsonl"), t.cfg);
        return t;
    }();
    return d;
}

std::vector<char> read_bytes(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST(Split, SeededDisjointCover) {
    const auto [tr, va] = split_indices(50, 0.1, 9);
    EXPECT_EQ(va.size(), 5u);
    EXPECT_EQ(tr.size(), 45u);
    std::vector<std::size_t> all(tr);
    all.insert(all.end(), va.begin(), va.end());
    std::sort(all.begin(), all.end());
    for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(all[i], i);
    EXPECT_EQ(split_indices(50, 0.1, 9), split_indices(50, 0.1, 9));
    EXPECT_NE(split_indices(50, 0.1, 9).second, split_indices(50, 0.1, 10).second);
    EXPECT_EQ(split_indices(3, 0.1, 1).second.size(), 1u);
    EXPECT_TRUE(split_indices(5, 0.0, 1).second.empty());
}

TEST(Loading, LabelsMatchFrames) {
    const auto& d = tiny();
    ASSERT_EQ(d.train.size(), 12u);
    for (const auto& u : d.train) {
        EXPECT_EQ(u.frame_labels.size(), u.spec.frames());
        EXPECT_EQ(u.anchor_labels.size(), stack_anchors(u.spec.frames(), d.cfg.stack_spec()).size());
        EXPECT_EQ(u.spec.bins(), 257u);
    }
}

TEST(Training, ZeroEpochsWritesInitialState) {
    auto cfg = tiny().cfg;
    cfg.training.epochs = 0;
    const auto dir = fs::temp_directory_path() / "sb_train_zero";
    fs::remove_all(dir);
    TrainOptions opt;
    opt.out_dir = dir;
    const auto res = train(cfg, PoolingMode::Average, tiny().train, opt);
    ASSERT_EQ(res.metrics.size(), 1u);
    EXPECT_EQ(res.checkpoint.epoch, 0u);
    EXPECT_TRUE(fs::exists(dir / "model.bin"));
    EXPECT_TRUE(fs::exists(dir / "config.resolved.json"));
    const auto init = initial_checkpoint(cfg, PoolingMode::Average);
    EXPECT_EQ(encode_checkpoint(load_checkpoint(dir / "model.bin")), encode_checkpoint(res.checkpoint));
    EXPECT_EQ(init.params.frontend.w_re.data, res.checkpoint.params.frontend.w_re.data);
    // Roughly chance-level loss before training.
    EXPECT_NEAR(res.metrics[0].train_loss, std::log(static_cast<double>(cfg.classes())), 1.0);
}

TEST(Training, DeterministicAcrossRuns) {
    const auto& d = tiny();
    std::vector<std::vector<char>> ck, metrics;
    for (int run = 0; run < 2; ++run) {
        const auto dir = fs::temp_directory_path() / ("sb_train_det" + std::to_string(run));
        fs::remove_all(dir);
        TrainOptions opt;
        opt.out_dir = dir;
        train(d.cfg, PoolingMode::AttentionOnline, d.train, opt);
        ck.push_back(read_bytes(dir / "model.bin"));
        metrics.push_back(read_bytes(dir / "metrics.jsonl"));
    }
    EXPECT_EQ(ck[0], ck[1]);
    EXPECT_EQ(metrics[0], metrics[1]);
    EXPECT_EQ(std::count(metrics[0].begin(), metrics[0].end(), '\n'), 3);
}

TEST(Training, LossDecreasesOnTinySet) {
    auto cfg = tiny().cfg;
    cfg.training.epochs = 8;
    cfg.training.lr = 0.01;
    cfg.training.validate_on_train = true;
    const auto res = train(cfg, PoolingMode::Average, tiny().train);
    EXPECT_LT(res.metrics.back().train_loss, 0.7 * res.metrics.front().train_loss);
    EXPECT_EQ(res.checkpoint.epoch, 8u);
    for (const auto& m : res.metrics) EXPECT_TRUE(std::isfinite(m.val_loss));
}

TEST(Training, LearningRateHalvesOnPlateau) {
    auto cfg = tiny().cfg;
    cfg.training.epochs = 3;
    cfg.training.lr = 10.0;  // far too large: validation loss cannot keep decreasing
    try {
        const auto res = train(cfg, PoolingMode::Average, tiny().train);
        bool halved = false;
        for (std::size_t i = 1; i < res.metrics.size(); ++i) {
            const bool worse = res.metrics[i].val_loss >= res.metrics[i - 1].val_loss;
            EXPECT_DOUBLE_EQ(res.metrics[i].lr, worse ? res.metrics[i - 1].lr / 2 : res.metrics[i - 1].lr);
            halved = halved || worse;
        }
        EXPECT_TRUE(halved);
    } catch (const TrainingDiverged&) {
        SUCCEED() << "diverged, reported as such";
    }
}

TEST(Training, Errors) {
    EXPECT_THROW(train(tiny().cfg, PoolingMode::Average, {}), Error);
    auto bad = tiny().train;
    bad[0].spec.real.data[5] = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(train(tiny().cfg, PoolingMode::Average, bad), Error);
}
