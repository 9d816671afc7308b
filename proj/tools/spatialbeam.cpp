// Command-line entry point. Every subcommand writes under --out with fixed
// file names and dumps the resolved configuration next to its outputs.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "spatialbeam/experiment.hpp"
#include "spatialbeam/gradcheck.hpp"

namespace fs = std::filesystem;
using namespace spatialbeam;

namespace {

struct Args {
    std::string config, out, data, ckpt, mode;
    std::optional<std::uint64_t> seed;
};

ExperimentConfig load_config(const Args& a) {
    auto cfg = a.config.empty() ? parse_config_text("") : parse_config(a.config);
    if (a.seed) cfg.seed = *a.seed;
    return cfg;
}

void require(const std::string& value, const char* flag) {
    if (value.empty()) throw ConfigError(std::string("missing required flag ") + flag);
}

/// --data may name a manifest file or a dataset directory holding <split>.jsonl.
DatasetManifest manifest_for(const std::string& data, const char* split) {
    require(data, "--data");
    fs::path p(data);
    if (fs::is_directory(p)) p /= std::string(split) + ".jsonl";
    return load_manifest(p);
}

void log_line(const std::string& s) { std::cerr << s << std::endl; }

int cmd_simulate(const Args& a) {
    require(a.out, "--out");
    const auto cfg = load_config(a);
    fs::create_directories(a.out);
    write_resolved_config(fs::path(a.out) / "config.resolved.json", cfg);
    const auto ds = generate_dataset(cfg.resolved_simulation(), cfg.array, a.out);
    std::cout << "wrote " << ds.train.entries.size() << " train / " << ds.eval.entries.size() << " eval utterances to "
              << a.out << "\n";
    return 0;
}

int cmd_train(const Args& a) {
    require(a.out, "--out");
    auto cfg = load_config(a);
    const auto pooling = a.mode.empty() ? cfg.training.pooling : parse_pooling(a.mode);
    const auto utts = load_utterances(manifest_for(a.data, "train"), cfg, cfg.training.max_utterances);
    TrainOptions opt;
    opt.out_dir = a.out;
    opt.on_epoch = [&](const EpochMetrics& m) { log_line(metrics_line(m, to_string(pooling))); };
    const auto res = train(cfg, pooling, utts, opt);
    std::cout << "trained " << to_string(pooling) << " for " << res.checkpoint.epoch << " epochs; final val loss "
              << res.metrics.back().val_loss << "\n";
    return 0;
}

int cmd_evaluate(const Args& a) {
    require(a.ckpt, "--ckpt");
    require(a.out, "--out");
    const auto ck = load_checkpoint(a.ckpt);
    const auto utts = load_utterances(manifest_for(a.data, "eval"), ck.config);
    const auto ev = evaluate(ck, utts);
    fs::create_directories(a.out);
    write_resolved_config(fs::path(a.out) / "config.resolved.json", ck.config);
    const auto j = report_json(ev.report).dump(2) + "\n";
    write_text(fs::path(a.out) / "report.json", j);
    std::cout << j;
    return 0;
}

int cmd_gradcheck(const Args& a) {
    std::vector<PoolingMode> modes;
    if (a.mode.empty() || a.mode == "all") {
        for (const auto& [m, name] : pooling_names()) modes.push_back(m);
    } else if (a.mode == "online" || a.mode == "offline" || a.mode == "latency") {
        modes.push_back(parse_pooling("attention-" + a.mode));
    } else {
        modes.push_back(parse_pooling(a.mode));
    }
    GradcheckSetup setup;
    if (a.seed) setup.seed = *a.seed;
    const auto t0 = std::chrono::steady_clock::now();
    bool ok = true;
    std::string text;
    for (auto m : modes) {
        const auto rep = run_gradcheck(setup, m);
        ok = ok && rep.passed;
        text += format_report(rep);
    }
    char buf[96];
    std::snprintf(buf, sizeof buf, "elapsed %.1f s\n",
                  std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    text += buf;
    std::cout << text;
    if (!a.out.empty()) {
        fs::create_directories(a.out);
        write_text(fs::path(a.out) / "gradcheck.txt", text);
    }
    return ok ? 0 : 1;
}

int cmd_directivity(const Args& a) {
    require(a.ckpt, "--ckpt");
    require(a.out, "--out");
    const auto ck = load_checkpoint(a.ckpt);
    DirectivityOptions opt;
    opt.sample_rate = ck.config.dsp.sample_rate;
    opt.fft_size = ck.config.dsp.resolved_fft();
    opt.speed_of_sound = ck.config.simulation.speed_of_sound;
    const auto grids = directivity(ck.params.frontend, ck.config.array, opt);
    fs::create_directories(a.out);
    write_resolved_config(fs::path(a.out) / "config.resolved.json", ck.config);
    write_text(fs::path(a.out) / "directivity.csv", directivity_csv(grids));
    for (const auto& g : grids) {
        const auto [az, el] = g.peak();
        std::cout << "filter " << g.filter << ": peak azimuth " << az << " deg, elevation " << el << " deg\n";
    }
    return 0;
}

int cmd_attention_viz(const Args& a) {
    require(a.ckpt, "--ckpt");
    require(a.out, "--out");
    const auto ck = load_checkpoint(a.ckpt);
    if (!uses_attention(ck.spec.pooling))
        throw ConfigError("attention-viz: checkpoint uses " + to_string(ck.spec.pooling) + " pooling, not attention");
    const auto utts = load_utterances(manifest_for(a.data, "eval"), ck.config);
    const auto ev = evaluate(ck, utts);
    const fs::path dir = fs::path(a.out) / "attention";
    fs::create_directories(dir);
    write_resolved_config(fs::path(a.out) / "config.resolved.json", ck.config);
    for (const auto& [id, tr] : ev.traces) write_text(dir / (id + ".csv"), attention_csv(id, tr));
    const auto j = report_json(ev.report).dump(2) + "\n";
    write_text(fs::path(a.out) / "report.json", j);
    std::cout << j;
    return 0;
}

int cmd_export_weights(const Args& a) {
    require(a.ckpt, "--ckpt");
    require(a.out, "--out");
    const auto ck = load_checkpoint(a.ckpt);
    fs::create_directories(a.out);
    write_text(fs::path(a.out) / "weights.csv", weights_csv(ck.params.frontend));
    return 0;
}

int cmd_experiment(const Args& a) {
    require(a.out, "--out");
    auto cfg = load_config(a);
    ExperimentOptions opt;
    opt.out_dir = a.out;
    if (!a.data.empty()) {
        cfg.simulate = false;
        opt.data_dir = a.data;
    }
    const auto t0 = std::chrono::steady_clock::now();
    opt.log = [&](const std::string& s) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "[%7.1fs] ", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
        log_line(buf + s);
    };
    try {
        const auto res = run_experiment(cfg, opt);
        std::cout << res.table;
    } catch (const Error&) {
        std::ifstream is(fs::path(a.out) / "comparison.txt");
        if (is) std::cout << is.rdbuf();
        throw;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Spatial attention beamforming front end: simulation, training and analysis"};
    app.require_subcommand(1);
    Args a;
    std::uint64_t seed = 0;

    auto add_common = [&](CLI::App* s, bool config, bool data, bool ckpt) {
        s->add_option("--out", a.out, "output directory");
        if (config) s->add_option("--config", a.config, "experiment config (JSON)");
        if (data) s->add_option("--data", a.data, "dataset directory or manifest file");
        if (ckpt) s->add_option("--ckpt", a.ckpt, "checkpoint file");
        s->add_option("--seed", seed, "override the root seed");
    };
    auto* sim = app.add_subcommand("simulate", "generate a simulated multichannel dataset");
    add_common(sim, true, false, false);
    auto* tr = app.add_subcommand("train", "train one pooling variant");
    add_common(tr, true, true, false);
    tr->add_option("--mode", a.mode, "pooling variant (defaults to training.pooling)");
    auto* ev = app.add_subcommand("evaluate", "evaluate a checkpoint on a manifest");
    add_common(ev, false, true, true);
    auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient check on a tiny model");
    add_common(gc, false, false, false);
    gc->add_option("--mode", a.mode, "online|offline|latency|none|max|average|all (default all)");
    auto* dv = app.add_subcommand("directivity", "beam patterns of the learned spatial filters");
    add_common(dv, false, false, true);
    auto* av = app.add_subcommand("attention-viz", "per-utterance attention weights as CSV");
    add_common(av, false, true, true);
    auto* ew = app.add_subcommand("export-weights", "dump spatial filter weights as CSV");
    add_common(ew, false, false, true);
    auto* ex = app.add_subcommand("experiment", "simulate, train and evaluate every configured variant");
    add_common(ex, true, true, false);

    CLI11_PARSE(app, argc, argv);
    for (auto* s : app.get_subcommands())
        if (s->count("--seed")) a.seed = seed;

    try {
        if (*sim) return cmd_simulate(a);
        if (*tr) return cmd_train(a);
        if (*ev) return cmd_evaluate(a);
        if (*gc) return cmd_gradcheck(a);
        if (*dv) return cmd_directivity(a);
        if (*av) return cmd_attention_viz(a);
        if (*ew) return cmd_export_weights(a);
        if (*ex) return cmd_experiment(a);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
