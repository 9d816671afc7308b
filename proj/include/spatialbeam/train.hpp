#pragma once

// Joint end-to-end training: seeded shuffling, length-bucketed batches, Adam
// with global-norm clipping, plateau learning-rate halving, per-epoch
// checkpoints and line-delimited metrics.

#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "checkpoint.hpp"
#include "model.hpp"
#include "optim.hpp"
#include "scene.hpp"

namespace spatialbeam {

class TrainingDiverged : public Error {
public:
    using Error::Error;
};

struct LoadedUtterance {
    std::string id;
    ComplexSpectrogram spec;
    std::vector<int> frame_labels;
    std::vector<int> anchor_labels;
};

/// Reads mixtures and labels and computes the (parameter-free) STFT once.
inline std::vector<LoadedUtterance> load_utterances(const DatasetManifest& manifest, const ExperimentConfig& cfg,
                                                    std::size_t limit = 0) {
    std::vector<LoadedUtterance> out;
    const std::size_t n = limit == 0 ? manifest.entries.size() : std::min(limit, manifest.entries.size());
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& e = manifest.entries[i];
        const auto wave = read_wav(manifest.mixture(e));
        if (wave.sample_rate != cfg.dsp.sample_rate)
            throw ConfigError("utterance " + e.id + " has sample rate " + std::to_string(wave.sample_rate) +
                              ", config expects " + std::to_string(cfg.dsp.sample_rate));
        if (wave.channels() != cfg.array.size())
            throw ConfigError("utterance " + e.id + " has " + std::to_string(wave.channels()) +
                              " channels, array has " + std::to_string(cfg.array.size()));
        LoadedUtterance u;
        u.id = e.id;
        u.spec = stft_samples(wave, cfg.dsp.window_samples(), cfg.dsp.hop_samples());
        u.frame_labels = read_labels(manifest.labels(e));
        if (u.frame_labels.size() != u.spec.frames())
            throw Error("utterance " + e.id + ": " + std::to_string(u.frame_labels.size()) + " labels for " +
                        std::to_string(u.spec.frames()) + " frames");
        for (int l : u.frame_labels)
            if (l < 0 || static_cast<std::size_t>(l) >= cfg.classes())
                throw Error("utterance " + e.id + ": label " + std::to_string(l) + " outside the class inventory");
        u.anchor_labels = anchor_labels(u.frame_labels, cfg.stack_spec());
        out.push_back(std::move(u));
    }
    return out;
}

struct EpochMetrics {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_frame_accuracy = 0.0;
    double lr = 0.0;
    double grad_norm = 0.0;  // mean pre-clip norm over the epoch's batches
};

inline std::string metrics_line(const EpochMetrics& m, const std::string& variant) {
    nlohmann::ordered_json j;
    j["variant"] = variant;
    j["epoch"] = m.epoch;
    j["train_loss"] = m.train_loss;
    j["val_loss"] = m.val_loss;
    j["val_frame_accuracy"] = m.val_frame_accuracy;
    j["lr"] = m.lr;
    j["grad_norm"] = m.grad_norm;
    return j.dump();
}

struct EvalTotals {
    double mean_loss = 0.0;
    double frame_accuracy = 0.0;
};

inline EvalTotals evaluate_loss(const ModelSpec& spec, const ModelParams& prm, const std::vector<LoadedUtterance>& utts,
                                const std::vector<std::size_t>& idx) {
    EvalTotals t;
    if (idx.empty()) return t;
    std::size_t positions = 0, correct = 0;
    for (std::size_t i : idx) {
        const auto r = model_step(spec, prm, utts[i].spec, utts[i].anchor_labels);
        t.mean_loss += r.loss;
        positions += r.positions;
        correct += r.correct;
    }
    t.mean_loss /= static_cast<double>(idx.size());
    t.frame_accuracy = positions ? static_cast<double>(correct) / static_cast<double>(positions) : 0.0;
    return t;
}

struct TrainResult {
    ModelCheckpoint checkpoint;
    std::vector<EpochMetrics> metrics;  // entry 0 holds the pre-training losses
};

struct TrainOptions {
    std::filesystem::path out_dir;  // empty: keep everything in memory
    std::function<void(const EpochMetrics&)> on_epoch;
};

/// Train/validation split of utterance indices (seeded).
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n, double val_fraction,
                                                                                  std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(derive_seed(seed, "validation-split"));
    rng.shuffle(idx);
    std::size_t nval = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(n)));
    if (val_fraction > 0 && nval == 0 && n >= 2) nval = 1;
    std::vector<std::size_t> val(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(nval));
    std::vector<std::size_t> train(idx.begin() + static_cast<std::ptrdiff_t>(nval), idx.end());
    std::sort(val.begin(), val.end());
    std::sort(train.begin(), train.end());
    return {train, val};
}

/// Shuffled, then stably grouped by frame count, then chunked.
inline std::vector<std::vector<std::size_t>> make_batches(const std::vector<LoadedUtterance>& utts,
                                                          std::vector<std::size_t> order, std::size_t batch_size) {
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return utts[a].spec.frames() < utts[b].spec.frames(); });
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t i = 0; i < order.size(); i += batch_size)
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                             order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + batch_size)));
    return batches;
}

inline ModelCheckpoint initial_checkpoint(const ExperimentConfig& cfg, PoolingMode pooling) {
    ModelCheckpoint ck;
    ck.config = cfg;
    ck.config.training.pooling = pooling;
    ck.spec = ModelSpec::from_config(ck.config);
    Rng rng(derive_seed(cfg.seed, "init:" + to_string(pooling)));
    ck.params = init_model(ck.spec, cfg.array, cfg.dsp.sample_rate, cfg.dsp.resolved_fft(), rng,
                           cfg.frontend.init == "random" ? FrontEndInit::Random : FrontEndInit::Steering,
                           cfg.simulation.speed_of_sound);
    ck.optimizer = OptimizerState::for_params(std::as_const(ck.params).tensors(), cfg.training.lr);
    ck.rng_state = derive_seed(cfg.seed, "shuffle:" + to_string(pooling));
    return ck;
}

inline TrainResult train(const ExperimentConfig& cfg, PoolingMode pooling, const std::vector<LoadedUtterance>& utts,
                         const TrainOptions& opt = {}) {
    const auto& tc = cfg.training;
    TrainResult res;
    res.checkpoint = initial_checkpoint(cfg, pooling);
    auto& ck = res.checkpoint;
    const auto& spec = ck.spec;
    const std::string variant = to_string(pooling);

    std::vector<std::size_t> train_idx, val_idx;
    if (tc.validate_on_train) {
        train_idx.resize(utts.size());
        std::iota(train_idx.begin(), train_idx.end(), std::size_t{0});
        val_idx = train_idx;
    } else {
        std::tie(train_idx, val_idx) = split_indices(utts.size(), tc.val_fraction, cfg.seed);
        if (val_idx.empty()) val_idx = train_idx;
    }
    if (train_idx.empty()) throw Error("train: no training utterances");

    std::ofstream metrics_os;
    if (!opt.out_dir.empty()) {
        std::filesystem::create_directories(opt.out_dir);
        write_resolved_config(opt.out_dir / "config.resolved.json", ck.config);
        metrics_os.open(opt.out_dir / "metrics.jsonl", std::ios::binary);
        if (!metrics_os) throw Error("cannot write metrics log in " + opt.out_dir.string());
    }
    auto emit = [&](const EpochMetrics& m) {
        res.metrics.push_back(m);
        if (metrics_os) metrics_os << metrics_line(m, variant) << '\n' << std::flush;
        if (opt.on_epoch) opt.on_epoch(m);
    };
    auto save = [&]() {
        if (opt.out_dir.empty()) return;
        save_checkpoint(opt.out_dir / "checkpoint.bin", ck);
    };

    {
        EpochMetrics m0;
        m0.train_loss = evaluate_loss(spec, ck.params, utts, train_idx).mean_loss;
        const auto v = evaluate_loss(spec, ck.params, utts, val_idx);
        m0.val_loss = v.mean_loss;
        m0.val_frame_accuracy = v.frame_accuracy;
        m0.lr = ck.optimizer.lr;
        if (!std::isfinite(m0.train_loss) || !std::isfinite(m0.val_loss)) throw TrainingDiverged("initial loss is not finite");
        ck.previous_val_loss = m0.val_loss;
        emit(m0);
        save();
    }

    PlateauSchedule sched(ck.optimizer.lr, tc.patience, ck.previous_val_loss);
    Rng rng(ck.rng_state);
    ModelParams grads(spec);
    const AdamHyper hyper{tc.beta1, tc.beta2, tc.eps};
    for (std::size_t epoch = 1; epoch <= tc.epochs; ++epoch) {
        std::vector<std::size_t> order = train_idx;
        rng.shuffle(order);
        const auto batches = make_batches(utts, order, tc.batch_size);
        double loss_sum = 0.0, norm_sum = 0.0;
        for (const auto& batch : batches) {
            grads.zero();
            double batch_loss = 0.0;
            const double scale = 1.0 / static_cast<double>(batch.size());
            for (std::size_t i : batch) {
                const auto r = model_step(spec, ck.params, utts[i].spec, utts[i].anchor_labels, &grads, scale);
                batch_loss += r.loss * scale;
            }
            if (!std::isfinite(batch_loss))
                throw TrainingDiverged("training loss became non-finite in epoch " + std::to_string(epoch));
            norm_sum += clip_global_norm(grads.tensors(), tc.clip_norm);
            adam_step(ck.params.tensors(), std::as_const(grads).tensors(), ck.optimizer, hyper);
            loss_sum += batch_loss;
        }
        EpochMetrics m;
        m.epoch = epoch;
        m.train_loss = loss_sum / static_cast<double>(batches.size());
        m.grad_norm = norm_sum / static_cast<double>(batches.size());
        const auto v = evaluate_loss(spec, ck.params, utts, val_idx);
        m.val_loss = v.mean_loss;
        m.val_frame_accuracy = v.frame_accuracy;
        if (!std::isfinite(m.val_loss)) throw TrainingDiverged("validation loss became non-finite in epoch " + std::to_string(epoch));
        sched.update(m.val_loss);
        ck.optimizer.lr = sched.lr();
        m.lr = sched.lr();
        ck.epoch = epoch;
        ck.rng_state = rng.state();
        ck.previous_val_loss = sched.previous();
        ck.plateau_bad = sched.bad();
        ck.non_decreasing = sched.non_decreasing_epochs();
        emit(m);
        save();
    }
    if (!opt.out_dir.empty()) save_checkpoint(opt.out_dir / "model.bin", ck);
    return res;
}

}  // namespace spatialbeam
