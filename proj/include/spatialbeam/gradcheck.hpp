#pragma once

// Central finite-difference verification of every analytic parameter
// gradient of the full composite loss.

#include <cstdio>
#include <string>
#include <vector>

#include "model.hpp"

namespace spatialbeam {

struct GradcheckSetup {
    std::size_t channels = 2;
    std::size_t directions = 3;
    std::size_t features = 4;
    std::size_t fft_size = 16;  // 9 bins
    std::size_t frames = 12;
    std::size_t attention_hidden = 5;
    std::size_t attention_layers = 2;
    std::size_t backend_hidden = 8;
    std::size_t backend_layers = 1;
    std::size_t classes = 4;
    StackSpec stack{4, 2};
    std::size_t delay = 1;
    AttentionMode online = AttentionMode::online(3);
    AttentionMode latency = AttentionMode::latency(5);
    double epsilon = 1e-6;
    double tolerance = 1e-4;
    double abs_floor = 1e-5;  // denominators below this use it instead (absolute-error regime)
    std::uint64_t seed = 7;
};

struct TensorCheck {
    std::string name;
    bool absent = false;
    std::size_t checked = 0;
    std::size_t skipped = 0;  // max pooling: argmax switched inside the perturbation
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
};

struct GradcheckReport {
    PoolingMode pooling;
    std::vector<TensorCheck> tensors;
    double max_rel_error = 0.0;
    bool passed = true;
};

struct GradcheckProblem {
    ModelSpec spec;
    ModelParams params;
    ComplexSpectrogram input;
    std::vector<int> labels;
};

inline GradcheckProblem make_gradcheck_problem(const GradcheckSetup& g, PoolingMode pooling) {
    GradcheckProblem pb;
    auto& s = pb.spec;
    s.frontend = {g.directions, g.features, g.fft_size / 2 + 1, g.channels};
    s.pooling = pooling;
    s.attention_mode = pooling == PoolingMode::AttentionOffline   ? AttentionMode::offline()
                       : pooling == PoolingMode::AttentionLatency ? g.latency
                                                                  : g.online;
    s.attention_hidden = g.attention_hidden;
    s.attention_layers = g.attention_layers;
    s.stack = g.stack;
    s.backend_hidden = g.backend_hidden;
    s.backend_layers = g.backend_layers;
    s.delay = g.delay;
    s.classes = g.classes;

    Rng rng(g.seed);
    const double sp = 0.06;
    ArrayGeometry geom;
    for (std::size_t m = 0; m < g.channels; ++m)
        geom.mic_positions.push_back({sp * static_cast<double>(m) - sp * (static_cast<double>(g.channels) - 1) / 2, 0, 0});
    pb.params = init_model(s, geom, 16000, g.fft_size, rng);
    // Random, non-degenerate spectrogram.
    pb.input.real = Array3(g.channels, g.frames, s.frontend.bins);
    pb.input.imag = Array3(g.channels, g.frames, s.frontend.bins);
    for (auto& v : pb.input.real.data) v = rng.normal();
    for (auto& v : pb.input.imag.data) v = rng.normal();
    pb.input.sample_rate = 16000;
    pb.input.fft_size = g.fft_size;
    pb.input.window_samples = g.fft_size;
    pb.input.hop_samples = g.fft_size / 2;
    const auto anchors = stack_anchors(g.frames, g.stack);
    for (std::size_t i = 0; i < anchors.size(); ++i) pb.labels.push_back(static_cast<int>(rng.index(g.classes)));
    return pb;
}

/// Maximum |analytic - numeric| over all parameters for a given epsilon.
inline double gradcheck_max_abs_error(const GradcheckProblem& pb, double eps) {
    ModelParams grads(pb.spec);
    grads.zero();
    model_step(pb.spec, pb.params, pb.input, pb.labels, &grads);
    ModelParams work = pb.params;
    auto wt = work.tensors();
    const auto gt = std::as_const(grads).tensors();
    double worst = 0.0;
    for (std::size_t ti = 0; ti < wt.size(); ++ti)
        for (std::size_t k = 0; k < wt[ti]->size(); ++k) {
            const double orig = wt[ti]->data[k];
            wt[ti]->data[k] = orig + eps;
            const double lp = model_step(pb.spec, work, pb.input, pb.labels).loss;
            wt[ti]->data[k] = orig - eps;
            const double lm = model_step(pb.spec, work, pb.input, pb.labels).loss;
            wt[ti]->data[k] = orig;
            worst = std::max(worst, std::abs((lp - lm) / (2 * eps) - gt[ti]->data[k]));
        }
    return worst;
}

inline GradcheckReport run_gradcheck(const GradcheckSetup& g, PoolingMode pooling) {
    const auto pb = make_gradcheck_problem(g, pooling);
    GradcheckReport rep;
    rep.pooling = pooling;

    ModelParams grads(pb.spec);
    grads.zero();
    const auto base = model_step(pb.spec, pb.params, pb.input, pb.labels, &grads);

    if (!uses_attention(pooling)) {
        const AttentionSubnetParams ghost(g.directions, g.features, g.attention_hidden, g.attention_layers);
        for (const auto* t : ghost.tensors()) rep.tensors.push_back({t->name, true});
    }

    ModelParams work = pb.params;
    auto wt = work.tensors();
    const auto gt = std::as_const(grads).tensors();
    for (std::size_t ti = 0; ti < wt.size(); ++ti) {
        TensorCheck tc;
        tc.name = wt[ti]->name;
        for (std::size_t k = 0; k < wt[ti]->size(); ++k) {
            const double orig = wt[ti]->data[k];
            wt[ti]->data[k] = orig + g.epsilon;
            const auto rp = model_step(pb.spec, work, pb.input, pb.labels);
            wt[ti]->data[k] = orig - g.epsilon;
            const auto rm = model_step(pb.spec, work, pb.input, pb.labels);
            wt[ti]->data[k] = orig;
            if (pooling == PoolingMode::Max && (rp.max_pattern != base.max_pattern || rm.max_pattern != base.max_pattern)) {
                ++tc.skipped;
                continue;
            }
            const double numeric = (rp.loss - rm.loss) / (2 * g.epsilon);
            const double analytic = gt[ti]->data[k];
            const double abs_err = std::abs(numeric - analytic);
            const double rel = abs_err / std::max({std::abs(numeric), std::abs(analytic), g.abs_floor});
            tc.max_abs_error = std::max(tc.max_abs_error, abs_err);
            tc.max_rel_error = std::max(tc.max_rel_error, rel);
            ++tc.checked;
        }
        rep.max_rel_error = std::max(rep.max_rel_error, tc.max_rel_error);
        rep.tensors.push_back(std::move(tc));
    }
    rep.passed = rep.max_rel_error <= g.tolerance;
    return rep;
}

inline std::string format_report(const GradcheckReport& rep) {
    std::string out = "pooling " + to_string(rep.pooling) + ": " + (rep.passed ? "PASS" : "FAIL") + "\n";
    char buf[256];
    for (const auto& t : rep.tensors) {
        if (t.absent) {
            std::snprintf(buf, sizeof buf, "  %-28s absent\n", t.name.c_str());
        } else {
            std::snprintf(buf, sizeof buf, "  %-28s checked %5zu  skipped %3zu  max_rel %.3e  max_abs %.3e\n",
                          t.name.c_str(), t.checked, t.skipped, t.max_rel_error, t.max_abs_error);
        }
        out += buf;
    }
    std::snprintf(buf, sizeof buf, "  overall max relative error %.3e\n", rep.max_rel_error);
    out += buf;
    return out;
}

}  // namespace spatialbeam
