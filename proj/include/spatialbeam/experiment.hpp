#pragma once

// Comparison loop: simulate (optionally), train every configured pooling
// variant on the same data with the same seed, evaluate each, and write a
// comparison table.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "analysis.hpp"
#include "train.hpp"

namespace spatialbeam {

struct VariantResult {
    PoolingMode pooling = PoolingMode::Average;
    bool ok = false;
    std::string error;
    EvalReport report;
    std::vector<EpochMetrics> metrics;
};

struct ExperimentResult {
    std::vector<VariantResult> variants;
    std::string table;

    const VariantResult* find(PoolingMode m) const {
        for (const auto& v : variants)
            if (v.pooling == m) return &v;
        return nullptr;
    }
};

struct ExperimentOptions {
    std::filesystem::path out_dir;
    std::filesystem::path data_dir;  // used when the config does not simulate
    std::function<void(const std::string&)> log;
};

inline std::string comparison_table(const std::vector<VariantResult>& rows) {
    std::string out = "variant              frame_acc  utt_acc  mean_ce\n";
    char buf[160];
    for (const auto& r : rows) {
        if (r.ok)
            std::snprintf(buf, sizeof buf, "%-20s %9.4f %8.4f %8.4f\n", to_string(r.pooling).c_str(),
                          r.report.frame_accuracy, r.report.utterance_accuracy, r.report.mean_cross_entropy);
        else
            std::snprintf(buf, sizeof buf, "%-20s failed: %s\n", to_string(r.pooling).c_str(), r.error.c_str());
        out += buf;
    }
    return out;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot write " + path.string());
    os << text;
    if (!os) throw Error("failed writing " + path.string());
}

/// Layout under out_dir:
///   config.resolved.json, data/ (when simulating), <variant>/{config.resolved.json,
///   metrics.jsonl, checkpoint.bin, model.bin, report.json}, comparison.txt, comparison.json
/// A failing variant is recorded and the remaining ones still run; the
/// function throws afterwards if any failed.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const ExperimentOptions& opt) {
    cfg.validate();
    auto log = [&](const std::string& s) {
        if (opt.log) opt.log(s);
    };
    namespace fs = std::filesystem;
    if (opt.out_dir.empty()) throw ConfigError("experiment: output directory required");
    fs::create_directories(opt.out_dir);
    write_resolved_config(opt.out_dir / "config.resolved.json", cfg);

    fs::path data = opt.data_dir;
    if (cfg.simulate) {
        data = opt.out_dir / "data";
        log("simulating into " + data.string());
        generate_dataset(cfg.resolved_simulation(), cfg.array, data);
    } else if (data.empty()) {
        throw ConfigError("simulate: false requires a data directory");
    }
    const auto train_manifest = load_manifest(data / "train.jsonl");
    const auto eval_manifest = load_manifest(data / "eval.jsonl");
    const auto train_utts = load_utterances(train_manifest, cfg, cfg.training.max_utterances);
    const auto eval_utts = load_utterances(eval_manifest, cfg);
    log("loaded " + std::to_string(train_utts.size()) + " train / " + std::to_string(eval_utts.size()) +
        " eval utterances");

    ExperimentResult res;
    std::string failed;
    for (auto mode : cfg.variants) {
        VariantResult vr;
        vr.pooling = mode;
        const auto dir = opt.out_dir / to_string(mode);
        try {
            TrainOptions to;
            to.out_dir = dir;
            to.on_epoch = [&](const EpochMetrics& m) { log(metrics_line(m, to_string(mode))); };
            auto tr = train(cfg, mode, train_utts, to);
            vr.metrics = std::move(tr.metrics);
            const auto ev = evaluate(tr.checkpoint, eval_utts);
            vr.report = ev.report;
            write_text(dir / "report.json", report_json(vr.report).dump(2) + "\n");
            vr.ok = true;
        } catch (const std::exception& ex) {
            vr.error = ex.what();
            failed += (failed.empty() ? "" : ", ") + to_string(mode);
            log(to_string(mode) + " failed: " + vr.error);
        }
        res.variants.push_back(std::move(vr));
        // Rewritten after every variant so partial results survive a crash.
        res.table = comparison_table(res.variants);
        write_text(opt.out_dir / "comparison.txt", res.table);
    }
    nlohmann::ordered_json j = nlohmann::ordered_json::array();
    for (const auto& v : res.variants) {
        if (v.ok) {
            j.push_back(report_json(v.report));
        } else {
            nlohmann::ordered_json e;
            e["variant"] = to_string(v.pooling);
            e["error"] = v.error;
            j.push_back(e);
        }
    }
    write_text(opt.out_dir / "comparison.json", j.dump(2) + "\n");
    if (!failed.empty()) throw Error("experiment: variants failed: " + failed);
    return res;
}

}  // namespace spatialbeam
