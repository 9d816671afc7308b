#pragma once

// Spatial attention over look directions: an LSTM subnet scores each
// direction per frame, the scores are post-processed according to the timing
// mode, and the directional features are pooled by the resulting weights.
// Non-attention pooling baselines live here as well.

#include <algorithm>
#include <string>
#include <vector>

#include "beamformer.hpp"
#include "lstm.hpp"

namespace spatialbeam {

enum class AttentionKind { Online, Offline, Latency };

struct AttentionMode {
    AttentionKind kind = AttentionKind::Online;
    std::size_t window = 50;          // online: trailing smoothing window, frames
    std::size_t latency_frames = 50;  // latency: last frame index of the segment
    bool segment_mean = true;         // latency: average over [0, k] (else use frame k only)

    static AttentionMode online(std::size_t w) { return {AttentionKind::Online, w, 0, true}; }
    static AttentionMode offline() { return {AttentionKind::Offline, 1, 0, true}; }
    static AttentionMode latency(std::size_t k, bool segment_mean = true) {
        return {AttentionKind::Latency, 1, k, segment_mean};
    }
};

inline std::string to_string(AttentionKind k) {
    switch (k) {
        case AttentionKind::Online: return "online";
        case AttentionKind::Offline: return "offline";
        case AttentionKind::Latency: return "latency";
    }
    return "?";
}

struct AttentionSubnetParams {
    LstmStack lstm;
    Tensor proj_w;  // [P x H]
    Tensor proj_b;  // [P]

    AttentionSubnetParams() = default;
    AttentionSubnetParams(std::size_t directions, std::size_t features, std::size_t hidden, std::size_t layers)
        : lstm("attention", directions * features, hidden, layers),
          proj_w("attention.proj_w", {directions, layers == 0 ? directions * features : hidden}),
          proj_b("attention.proj_b", {directions}) {}

    std::size_t directions() const { return proj_b.size(); }

    std::vector<Tensor*> tensors() {
        std::vector<Tensor*> out;
        lstm.append_tensors(out);
        out.insert(out.end(), {&proj_w, &proj_b});
        return out;
    }
    std::vector<const Tensor*> tensors() const {
        std::vector<const Tensor*> out;
        lstm.append_tensors(out);
        out.insert(out.end(), {&proj_w, &proj_b});
        return out;
    }

    void init(Rng& rng) {
        lstm.init(rng);
        const double a = 1.0 / std::sqrt(static_cast<double>(proj_w.dims[1]));
        for (auto& v : proj_w.data) v = rng.uniform(-a, a);
        proj_b.zero();
    }
};

/// Max-subtracted softmax.
inline Eigen::VectorXd softmax(const Eigen::Ref<const Eigen::VectorXd>& logits) {
    if (logits.size() == 0) return logits;
    const double mx = logits.maxCoeff();
    Eigen::VectorXd e = (logits.array() - mx).exp().matrix();
    return e / e.sum();
}

/// Per-frame direction weights; every row lies on the probability simplex.
struct AttentionTrace {
    RowMatrix scores;  // [T x P]
    AttentionMode mode;
};

struct AttentionCache {
    LstmCache lstm;
    RowMatrix hidden;  // [frames_run x H]
    RowMatrix raw;     // softmax outputs s[t], [frames_run x P]
    std::size_t frames = 0;
    std::size_t frames_run = 0;  // subnet evaluated on frames [0, frames_run)
    bool valid = false;
};

/// Flattens Z[t] (P*L) into rows.
inline RowMatrix flatten_frames(const DirectionalFeatures& z, std::size_t frames) {
    return ConstMatMap(z.data.data(), static_cast<Eigen::Index>(frames), static_cast<Eigen::Index>(z.d1 * z.d2));
}

inline std::size_t latency_anchor(const AttentionMode& mode, std::size_t frames) {
    return std::min(mode.latency_frames, frames - 1);
}

inline AttentionTrace attention_forward(const DirectionalFeatures& z, const AttentionSubnetParams& prm,
                                        const AttentionMode& mode, AttentionCache* cache = nullptr) {
    const std::size_t T = z.d0, P = z.d1;
    if (T == 0) throw Error("attention_forward: utterance has no frames");
    if (P != prm.directions()) throw ShapeError("attention_forward: direction count mismatch");
    if (mode.kind == AttentionKind::Online && mode.window < 1) throw ConfigError("attention online window must be >= 1");
    for (double v : z.data)
        if (!std::isfinite(v)) throw Error("attention_forward: non-finite directional feature");

    const std::size_t run = mode.kind == AttentionKind::Latency ? latency_anchor(mode, T) + 1 : T;
    LstmCache lc;
    const RowMatrix h = lstm_forward(prm.lstm, flatten_frames(z, run), cache ? &lc : nullptr);
    RowMatrix logits = h * prm.proj_w.mat().transpose();
    logits.rowwise() += prm.proj_b.vec().transpose();
    RowMatrix raw(static_cast<Eigen::Index>(run), static_cast<Eigen::Index>(P));
    for (Eigen::Index t = 0; t < raw.rows(); ++t) raw.row(t) = softmax(logits.row(t).transpose()).transpose();

    AttentionTrace tr;
    tr.mode = mode;
    tr.scores.resize(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(P));
    switch (mode.kind) {
        case AttentionKind::Online: {
            Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(P));
            for (std::size_t t = 0; t < T; ++t) {
                const std::size_t lo = t + 1 >= mode.window ? t + 1 - mode.window : 0;
                acc.setZero();
                for (std::size_t k = lo; k <= t; ++k) acc += raw.row(static_cast<Eigen::Index>(k));
                tr.scores.row(static_cast<Eigen::Index>(t)) = acc / static_cast<double>(t - lo + 1);
            }
            break;
        }
        case AttentionKind::Offline:
            tr.scores.rowwise() = raw.row(static_cast<Eigen::Index>(T - 1));
            break;
        case AttentionKind::Latency: {
            Eigen::RowVectorXd a = mode.segment_mean ? Eigen::RowVectorXd(raw.colwise().mean())
                                                     : Eigen::RowVectorXd(raw.row(raw.rows() - 1));
            tr.scores.rowwise() = a;
            break;
        }
    }
    if (cache) {
        cache->lstm = std::move(lc);
        cache->hidden = h;
        cache->raw = std::move(raw);
        cache->frames = T;
        cache->frames_run = run;
        cache->valid = true;
    }
    return tr;
}

/// Zbar_l[t] = sum_p A_p[t] Z_{p,l}[t].
inline RowMatrix attention_pool(const DirectionalFeatures& z, const AttentionTrace& a) {
    const std::size_t T = z.d0, P = z.d1, L = z.d2;
    if (static_cast<std::size_t>(a.scores.rows()) != T || static_cast<std::size_t>(a.scores.cols()) != P)
        throw ShapeError("attention_pool: attention shape does not match features");
    RowMatrix out = RowMatrix::Zero(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(L));
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t p = 0; p < P; ++p) {
            const double w = a.scores(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(p));
            for (std::size_t l = 0; l < L; ++l) out(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(l)) += w * z(t, p, l);
        }
    return out;
}

enum class BaselinePool { None, Max, Average };

inline BaselinePool parse_baseline_pool(const std::string& s) {
    if (s == "none") return BaselinePool::None;
    if (s == "max") return BaselinePool::Max;
    if (s == "average") return BaselinePool::Average;
    throw ConfigError("unknown pooling kind '" + s + "'");
}

/// none: concatenate directions -> [T x P*L]; max / average over directions -> [T x L].
inline RowMatrix baseline_pool(const DirectionalFeatures& z, BaselinePool kind) {
    const std::size_t T = z.d0, P = z.d1, L = z.d2;
    for (double v : z.data)
        if (!std::isfinite(v)) throw Error("baseline_pool: non-finite directional feature");
    if (kind == BaselinePool::None) return flatten_frames(z, T);
    RowMatrix out(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(L));
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t l = 0; l < L; ++l) {
            double acc = kind == BaselinePool::Max ? z(t, 0, l) : 0.0;
            for (std::size_t p = 0; p < P; ++p)
                acc = kind == BaselinePool::Max ? std::max(acc, z(t, p, l)) : acc + z(t, p, l);
            out(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(l)) =
                kind == BaselinePool::Max ? acc : acc / static_cast<double>(P);
        }
    return out;
}

/// Adjoint of baseline_pool. Max routes the gradient to the first maximal direction.
inline DirectionalFeatures baseline_pool_backward(const DirectionalFeatures& z, BaselinePool kind, const RowMatrix& d_out) {
    const std::size_t T = z.d0, P = z.d1, L = z.d2;
    DirectionalFeatures dz(T, P, L);
    if (kind == BaselinePool::None) {
        std::copy(d_out.data(), d_out.data() + d_out.size(), dz.data.begin());
        return dz;
    }
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t l = 0; l < L; ++l) {
            const double g = d_out(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(l));
            if (kind == BaselinePool::Average) {
                for (std::size_t p = 0; p < P; ++p) dz(t, p, l) = g / static_cast<double>(P);
            } else {
                std::size_t best = 0;
                for (std::size_t p = 1; p < P; ++p)
                    if (z(t, p, l) > z(t, best, l)) best = p;
                dz(t, best, l) = g;
            }
        }
    return dz;
}

/// Index of the winning direction for every (t, l) under max pooling; used to
/// detect argmax switches during finite-difference checks.
inline std::vector<std::uint8_t> max_pool_pattern(const DirectionalFeatures& z) {
    std::vector<std::uint8_t> out(z.d0 * z.d2);
    for (std::size_t t = 0; t < z.d0; ++t)
        for (std::size_t l = 0; l < z.d2; ++l) {
            std::size_t best = 0;
            for (std::size_t p = 1; p < z.d1; ++p)
                if (z(t, p, l) > z(t, best, l)) best = p;
            out[t * z.d2 + l] = static_cast<std::uint8_t>(best);
        }
    return out;
}

struct AttentionGrads {
    AttentionSubnetParams params;
    DirectionalFeatures d_z;  // total gradient w.r.t. Z (pooling path + subnet path)
    RowMatrix d_scores;       // dL/dA[t]
    RowMatrix d_logits;       // dL/d(projection output), [frames_run x P]
};

/// Backpropagates dL/dZbar through the weighted pooling, the timing-mode
/// post-processing, softmax, projection and the subnet LSTM.
inline AttentionGrads attention_backward(const DirectionalFeatures& z, const AttentionSubnetParams& prm,
                                         const AttentionTrace& trace, const AttentionCache& cache,
                                         const RowMatrix& d_pooled) {
    if (!cache.valid) throw Error("attention_backward called without forward state");
    const std::size_t T = z.d0, P = z.d1, L = z.d2;
    if (static_cast<std::size_t>(d_pooled.rows()) != T || static_cast<std::size_t>(d_pooled.cols()) != L)
        throw ShapeError("attention_backward: upstream gradient shape mismatch");
    AttentionGrads g;
    g.d_z = DirectionalFeatures(T, P, L);
    g.d_scores = RowMatrix::Zero(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(P));
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t p = 0; p < P; ++p) {
            const double a = trace.scores(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(p));
            double da = 0.0;
            for (std::size_t l = 0; l < L; ++l) {
                const double up = d_pooled(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(l));
                da += up * z(t, p, l);
                g.d_z(t, p, l) = a * up;
            }
            g.d_scores(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(p)) = da;
        }

    // Mode post-processing adjoint: dA -> d raw scores.
    const auto run = static_cast<Eigen::Index>(cache.frames_run);
    RowMatrix d_raw = RowMatrix::Zero(run, static_cast<Eigen::Index>(P));
    const auto& mode = trace.mode;
    switch (mode.kind) {
        case AttentionKind::Online:
            for (std::size_t t = 0; t < T; ++t) {
                const std::size_t lo = t + 1 >= mode.window ? t + 1 - mode.window : 0;
                const double inv = 1.0 / static_cast<double>(t - lo + 1);
                for (std::size_t k = lo; k <= t; ++k)
                    d_raw.row(static_cast<Eigen::Index>(k)) += inv * g.d_scores.row(static_cast<Eigen::Index>(t));
            }
            break;
        case AttentionKind::Offline:
            d_raw.row(run - 1) = g.d_scores.colwise().sum();
            break;
        case AttentionKind::Latency: {
            const Eigen::RowVectorXd total = g.d_scores.colwise().sum();
            if (mode.segment_mean) d_raw.rowwise() = total / static_cast<double>(run);
            else d_raw.row(run - 1) = total;
            break;
        }
    }

    // Softmax adjoint: dlogit = s * (ds - <ds, s>).
    g.d_logits.resize(run, static_cast<Eigen::Index>(P));
    for (Eigen::Index t = 0; t < run; ++t) {
        const auto s = cache.raw.row(t);
        const double inner = s.dot(d_raw.row(t));
        g.d_logits.row(t) = (s.array() * (d_raw.row(t).array() - inner)).matrix();
    }

    g.params = prm;
    g.params.proj_w.mat().noalias() = g.d_logits.transpose() * cache.hidden;
    g.params.proj_b.vec() = g.d_logits.colwise().sum().transpose();
    const RowMatrix dh = g.d_logits * prm.proj_w.mat();
    auto lg = lstm_backward(prm.lstm, cache.lstm, dh);
    g.params.lstm = std::move(lg.params);
    for (Eigen::Index t = 0; t < run; ++t)
        for (std::size_t j = 0; j < P * L; ++j)
            g.d_z.data[static_cast<std::size_t>(t) * P * L + j] += lg.d_input(t, static_cast<Eigen::Index>(j));
    return g;
}

/// CSV rows (utterance id, frame, A_1..A_P).
inline std::string attention_csv(const std::string& id, const AttentionTrace& tr, bool header = true) {
    std::string out;
    char buf[64];
    if (header) {
        out = "utterance,frame";
        for (Eigen::Index p = 0; p < tr.scores.cols(); ++p) out += ",A_" + std::to_string(p + 1);
        out += '\n';
    }
    for (Eigen::Index t = 0; t < tr.scores.rows(); ++t) {
        out += id + "," + std::to_string(t);
        for (Eigen::Index p = 0; p < tr.scores.cols(); ++p) {
            std::snprintf(buf, sizeof buf, ",%.9g", tr.scores(t, p));
            out += buf;
        }
        out += '\n';
    }
    return out;
}

}  // namespace spatialbeam
