#pragma once

// Acoustic-model back end: causal frame stacking with subsampling, a stacked
// LSTM classifier and a delayed-target cross-entropy loss.

#include <map>
#include <vector>

#include "attention.hpp"
#include "lstm.hpp"

namespace spatialbeam {

struct StackSpec {
    std::size_t stack = 8;
    std::size_t stride = 3;
};

/// Anchor frames t = stack-1, stack-1+stride, ... < T.
inline std::vector<std::size_t> stack_anchors(std::size_t frames, const StackSpec& s) {
    if (s.stack == 0 || s.stride == 0) throw ConfigError("stack and stride must be positive");
    if (frames < s.stack)
        throw Error("utterance too short: " + std::to_string(frames) + " frames, stacking needs " + std::to_string(s.stack));
    std::vector<std::size_t> a;
    for (std::size_t t = s.stack - 1; t < frames; t += s.stride) a.push_back(t);
    return a;
}

/// Row k concatenates pooled frames [t-stack+1 .. t] (oldest first) for anchor t.
inline RowMatrix stack_frames(const RowMatrix& pooled, const StackSpec& s = {}) {
    const auto anchors = stack_anchors(static_cast<std::size_t>(pooled.rows()), s);
    const Eigen::Index d = pooled.cols();
    RowMatrix out(static_cast<Eigen::Index>(anchors.size()), d * static_cast<Eigen::Index>(s.stack));
    for (std::size_t k = 0; k < anchors.size(); ++k)
        for (std::size_t j = 0; j < s.stack; ++j)
            out.block(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j) * d, 1, d) =
                pooled.row(static_cast<Eigen::Index>(anchors[k] + 1 - s.stack + j));
    return out;
}

/// Adjoint of stack_frames: scatter-adds stacked gradients back onto frames.
inline RowMatrix unstack_adjoint(const RowMatrix& d_stacked, std::size_t frames, const StackSpec& s = {}) {
    const auto anchors = stack_anchors(frames, s);
    if (static_cast<std::size_t>(d_stacked.rows()) != anchors.size() ||
        d_stacked.cols() % static_cast<Eigen::Index>(s.stack) != 0)
        throw ShapeError("unstack_adjoint: gradient shape mismatch");
    const Eigen::Index d = d_stacked.cols() / static_cast<Eigen::Index>(s.stack);
    RowMatrix out = RowMatrix::Zero(static_cast<Eigen::Index>(frames), d);
    for (std::size_t k = 0; k < anchors.size(); ++k)
        for (std::size_t j = 0; j < s.stack; ++j)
            out.row(static_cast<Eigen::Index>(anchors[k] + 1 - s.stack + j)) +=
                d_stacked.block(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j) * d, 1, d);
    return out;
}

/// Majority label over each anchor's window; ties go to the tied class seen latest.
inline std::vector<int> anchor_labels(const std::vector<int>& frame_labels, const StackSpec& s = {}) {
    const auto anchors = stack_anchors(frame_labels.size(), s);
    std::vector<int> out;
    out.reserve(anchors.size());
    for (std::size_t t : anchors) {
        std::map<int, std::pair<int, std::size_t>> count;  // label -> (count, latest position)
        for (std::size_t j = t + 1 - s.stack; j <= t; ++j) {
            auto& c = count[frame_labels[j]];
            ++c.first;
            c.second = j;
        }
        int best = frame_labels[t];
        std::pair<int, std::size_t> best_key{-1, 0};
        for (const auto& [label, c] : count)
            if (c.first > best_key.first || (c.first == best_key.first && c.second > best_key.second)) {
                best_key = c;
                best = label;
            }
        out.push_back(best);
    }
    return out;
}

struct BackendParams {
    LstmStack lstm;
    Tensor out_w;  // [C x H]
    Tensor out_b;  // [C]

    BackendParams() = default;
    BackendParams(std::size_t input, std::size_t hidden, std::size_t layers, std::size_t classes)
        : lstm("backend", input, hidden, layers),
          out_w("backend.out_w", {classes, layers == 0 ? input : hidden}),
          out_b("backend.out_b", {classes}) {}

    std::size_t classes() const { return out_b.size(); }

    std::vector<Tensor*> tensors() {
        std::vector<Tensor*> out;
        lstm.append_tensors(out);
        out.insert(out.end(), {&out_w, &out_b});
        return out;
    }
    std::vector<const Tensor*> tensors() const {
        std::vector<const Tensor*> out;
        lstm.append_tensors(out);
        out.insert(out.end(), {&out_w, &out_b});
        return out;
    }

    void init(Rng& rng) {
        lstm.init(rng);
        const double a = 1.0 / std::sqrt(static_cast<double>(out_w.dims[1]));
        for (auto& v : out_w.data) v = rng.uniform(-a, a);
        out_b.zero();
    }
};

struct BackendCache {
    LstmCache lstm;
    RowMatrix hidden;
    bool valid = false;
};

/// Logits [T' x C]; no softmax.
inline RowMatrix backend_forward(const RowMatrix& stacked, const BackendParams& prm, BackendCache* cache = nullptr) {
    if (static_cast<std::size_t>(stacked.cols()) != (prm.lstm.layers.empty() ? prm.out_w.dims[1] : prm.lstm.input_size()))
        throw ShapeError("backend_forward: stacked width " + std::to_string(stacked.cols()) +
                         " does not match the back end input");
    LstmCache lc;
    RowMatrix h = lstm_forward(prm.lstm, stacked, cache ? &lc : nullptr);
    RowMatrix logits = h * prm.out_w.mat().transpose();
    logits.rowwise() += prm.out_b.vec().transpose();
    if (cache) {
        cache->lstm = std::move(lc);
        cache->hidden = std::move(h);
        cache->valid = true;
    }
    return logits;
}

struct LossResult {
    double loss = 0.0;
    RowMatrix d_logits;         // dLoss/dlogits
    std::size_t positions = 0;  // number of scored positions
    std::size_t correct = 0;    // argmax(logits[t+d]) == label[t]
};

/// Mean over t with t + delay < T' of -log softmax(logits[t + delay])[label[t]].
inline LossResult delayed_cross_entropy(const RowMatrix& logits, const std::vector<int>& labels, std::size_t delay) {
    const auto n = static_cast<std::size_t>(logits.rows());
    if (labels.size() != n) throw ShapeError("delayed_cross_entropy: label count does not match logits");
    if (delay >= n) throw Error("delayed_cross_entropy: no valid positions (delay " + std::to_string(delay) +
                                " >= " + std::to_string(n) + " frames)");
    LossResult r;
    r.d_logits = RowMatrix::Zero(logits.rows(), logits.cols());
    r.positions = n - delay;
    const double inv = 1.0 / static_cast<double>(r.positions);
    for (std::size_t t = 0; t + delay < n; ++t) {
        const int y = labels[t];
        if (y < 0 || y >= logits.cols()) throw Error("label " + std::to_string(y) + " outside the class inventory");
        const auto row = static_cast<Eigen::Index>(t + delay);
        const Eigen::VectorXd p = softmax(logits.row(row).transpose());
        const double mx = logits.row(row).maxCoeff();
        const double lse = mx + std::log((logits.row(row).array() - mx).exp().sum());
        r.loss += (lse - logits(row, y)) * inv;
        r.d_logits.row(row) = p.transpose() * inv;
        r.d_logits(row, y) -= inv;
        Eigen::Index arg;
        logits.row(row).maxCoeff(&arg);
        if (arg == y) ++r.correct;
    }
    return r;
}

struct BackendGrads {
    BackendParams params;
    RowMatrix d_stacked;
};

inline BackendGrads backend_backward(const BackendParams& prm, const BackendCache& cache, const RowMatrix& d_logits) {
    if (!cache.valid) throw Error("backend_backward called without forward state");
    BackendGrads g;
    g.params = prm;
    g.params.out_w.mat().noalias() = d_logits.transpose() * cache.hidden;
    g.params.out_b.vec() = d_logits.colwise().sum().transpose();
    const RowMatrix dh = d_logits * prm.out_w.mat();
    auto lg = lstm_backward(prm.lstm, cache.lstm, dh);
    g.params.lstm = std::move(lg.params);
    g.d_stacked = std::move(lg.d_input);
    return g;
}

/// CSV rows (utterance id, stacked frame, class, logit).
inline std::string logits_csv(const std::string& id, const RowMatrix& logits, bool header = true) {
    std::string out = header ? "utterance,frame,class,logit\n" : "";
    char buf[96];
    for (Eigen::Index t = 0; t < logits.rows(); ++t)
        for (Eigen::Index c = 0; c < logits.cols(); ++c) {
            std::snprintf(buf, sizeof buf, ",%ld,%ld,%.9g\n", static_cast<long>(t), static_cast<long>(c), logits(t, c));
            out += id + buf;
        }
    return out;
}

}  // namespace spatialbeam
