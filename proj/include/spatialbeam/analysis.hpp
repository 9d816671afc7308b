#pragma once

// Diagnostics: white-noise directivity patterns of the spatial filters,
// attention entropy statistics, and checkpoint evaluation.

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "checkpoint.hpp"
#include "model.hpp"
#include "scene.hpp"
#include "train.hpp"

namespace spatialbeam {

/// Gain (dB) relative to the most amplified direction for one spatial filter.
struct DirectivityGrid {
    std::size_t filter = 0;
    double az_step_deg = 5.0;
    double el_step_deg = 5.0;
    std::vector<double> azimuths_deg;    // [0, 360)
    std::vector<double> elevations_deg;  // [-90, 90]
    RowMatrix gains_db;                  // [azimuth x elevation]

    /// (azimuth, elevation) of the 0 dB cell.
    std::pair<double, double> peak() const {
        Eigen::Index i, j;
        gains_db.maxCoeff(&i, &j);
        return {azimuths_deg[static_cast<std::size_t>(i)], elevations_deg[static_cast<std::size_t>(j)]};
    }
};

struct DirectivityOptions {
    double az_step_deg = 5.0;
    double el_step_deg = 5.0;
    int sample_rate = 16000;
    std::size_t fft_size = 512;
    double speed_of_sound = 343.0;
};

/// R_p(theta) = sum_f |W_p[f]^H d(theta, f)|^2 with bin centre f * sr / fft;
/// gain = 10 log10(R / max R), floored at -300 dB.
inline std::vector<DirectivityGrid> directivity(const FrontEndParams& w, const ArrayGeometry& geom,
                                                const DirectivityOptions& opt = {}) {
    const auto s = w.shape();
    if (geom.size() != s.channels)
        throw ShapeError("directivity: geometry has " + std::to_string(geom.size()) + " mics, weights expect " +
                         std::to_string(s.channels));
    if (!(opt.az_step_deg > 0 && opt.az_step_deg <= 360 && opt.el_step_deg > 0 && opt.el_step_deg <= 180))
        throw ConfigError("directivity: degenerate grid step");
    if (opt.fft_size / 2 + 1 != s.bins) throw ShapeError("directivity: fft size does not match the weight bin count");
    std::vector<double> az, el;
    for (double a = 0.0; a < 360.0 - 1e-9; a += opt.az_step_deg) az.push_back(a);
    for (double e = -90.0; e <= 90.0 + 1e-9; e += opt.el_step_deg) el.push_back(e);

    std::vector<DirectivityGrid> grids(s.directions);
    for (std::size_t p = 0; p < s.directions; ++p) {
        auto& g = grids[p];
        g.filter = p;
        g.az_step_deg = opt.az_step_deg;
        g.el_step_deg = opt.el_step_deg;
        g.azimuths_deg = az;
        g.elevations_deg = el;
        g.gains_db.resize(static_cast<Eigen::Index>(az.size()), static_cast<Eigen::Index>(el.size()));
    }
    std::vector<double> dre(s.channels), dim(s.channels);
    for (std::size_t i = 0; i < az.size(); ++i)
        for (std::size_t j = 0; j < el.size(); ++j) {
            const Vec3 u = unit_direction(az[i] * kPi / 180.0, el[j] * kPi / 180.0);
            std::vector<double> power(s.directions, 0.0);
            for (std::size_t f = 0; f < s.bins; ++f) {
                const double hz = static_cast<double>(f) * opt.sample_rate / static_cast<double>(opt.fft_size);
                const auto d = steering_vector(geom, u, hz, opt.speed_of_sound);
                for (std::size_t m = 0; m < s.channels; ++m) {
                    dre[m] = d[m].real();
                    dim[m] = d[m].imag();
                }
                for (std::size_t p = 0; p < s.directions; ++p) {
                    const auto w0 = w.w_index(p, f, 0);
                    const auto y = complex_dot(std::span(w.w_re.data).subspan(w0, s.channels),
                                               std::span(w.w_im.data).subspan(w0, s.channels), dre, dim);
                    power[p] += std::norm(y);
                }
            }
            for (std::size_t p = 0; p < s.directions; ++p)
                grids[p].gains_db(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = power[p];
        }
    for (auto& g : grids) {
        const double mx = g.gains_db.maxCoeff();
        if (!(mx > 0.0)) throw Error("directivity: filter " + std::to_string(g.filter) + " has zero response everywhere");
        for (Eigen::Index i = 0; i < g.gains_db.size(); ++i) {
            double& v = g.gains_db.data()[i];
            v = v == mx ? 0.0 : 10.0 * std::log10(std::max(v / mx, 1e-30));
        }
    }
    return grids;
}

inline std::string directivity_csv(const std::vector<DirectivityGrid>& grids) {
    std::string out = "p,azimuth_deg,elevation_deg,gain_db\n";
    char buf[128];
    for (const auto& g : grids)
        for (std::size_t i = 0; i < g.azimuths_deg.size(); ++i)
            for (std::size_t j = 0; j < g.elevations_deg.size(); ++j) {
                std::snprintf(buf, sizeof buf, "%zu,%g,%g,%.6f\n", g.filter, g.azimuths_deg[i], g.elevations_deg[j],
                              g.gains_db(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
                out += buf;
            }
    return out;
}

// ---------------------------------------------------------------------------

/// Shannon entropy (nats) of a probability row; 0 log 0 = 0.
inline double entropy(const Eigen::Ref<const Eigen::RowVectorXd>& a) {
    double h = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i)
        if (a(i) > 0.0) h -= a(i) * std::log(a(i));
    return h;
}

struct AttentionStats {
    std::size_t utterances = 0;
    double early_entropy = 0.0;    // mean over frames in the leading region
    double late_entropy = 0.0;     // mean over the remaining frames
    std::size_t late_frames = 0;   // 0 when every utterance ends inside the leading region
    double effective_directions = 0.0;  // mean exp(entropy) over all frames
    std::vector<double> mean_attention;  // per filter
    // Leading vs trailing window comparison per utterance.
    std::size_t early_exceeds_late = 0;
    std::size_t compared = 0;

    double early_exceeds_fraction() const {
        return compared ? static_cast<double>(early_exceeds_late) / static_cast<double>(compared) : 0.0;
    }
};

/// `region_frames`: leading region for early/late entropy (e.g. 2 s of frames).
/// `edge_frames`: window length for the first-vs-final per-utterance comparison.
inline AttentionStats attention_stats(const std::vector<AttentionTrace>& traces, std::size_t region_frames,
                                      std::size_t edge_frames) {
    if (traces.empty()) throw Error("attention_stats: no traces");
    AttentionStats st;
    st.utterances = traces.size();
    const auto P = traces.front().scores.cols();
    st.mean_attention.assign(static_cast<std::size_t>(P), 0.0);
    double early_sum = 0, late_sum = 0, eff_sum = 0;
    std::size_t early_n = 0, late_n = 0, all_n = 0;
    for (const auto& tr : traces) {
        const auto T = static_cast<std::size_t>(tr.scores.rows());
        std::vector<double> h(T);
        for (std::size_t t = 0; t < T; ++t) {
            h[t] = entropy(tr.scores.row(static_cast<Eigen::Index>(t)));
            eff_sum += std::exp(h[t]);
            ++all_n;
            for (Eigen::Index p = 0; p < P; ++p)
                st.mean_attention[static_cast<std::size_t>(p)] += tr.scores(static_cast<Eigen::Index>(t), p);
            if (t < region_frames) {
                early_sum += h[t];
                ++early_n;
            } else {
                late_sum += h[t];
                ++late_n;
            }
        }
        const std::size_t e = std::min(edge_frames, T);
        if (e > 0) {
            double first = 0, last = 0;
            for (std::size_t t = 0; t < e; ++t) {
                first += h[t];
                last += h[T - e + t];
            }
            ++st.compared;
            if (first > last) ++st.early_exceeds_late;
        }
    }
    st.early_entropy = early_n ? early_sum / static_cast<double>(early_n) : 0.0;
    st.late_entropy = late_n ? late_sum / static_cast<double>(late_n) : 0.0;
    st.late_frames = late_n;
    st.effective_directions = all_n ? eff_sum / static_cast<double>(all_n) : 0.0;
    for (auto& v : st.mean_attention) v /= static_cast<double>(std::max<std::size_t>(all_n, 1));
    return st;
}

// ---------------------------------------------------------------------------

struct EvalReport {
    std::string variant;
    std::size_t utterances = 0;
    std::size_t positions = 0;
    double frame_accuracy = 0.0;
    double utterance_accuracy = 0.0;
    double mean_cross_entropy = 0.0;
    std::optional<AttentionStats> attention;
};

/// Majority over non-silence labels (silence only if nothing else); ties -> smallest id.
inline int majority_label(const std::vector<int>& labels) {
    std::map<int, std::size_t> c;
    for (int l : labels)
        if (l != 0) ++c[l];
    if (c.empty()) return 0;
    int best = c.begin()->first;
    for (const auto& [l, n] : c)
        if (n > c[best]) best = l;
    return best;
}

struct EvalOutputs {
    EvalReport report;
    std::vector<std::pair<std::string, AttentionTrace>> traces;
};

inline EvalOutputs evaluate(const ModelCheckpoint& ck, const std::vector<LoadedUtterance>& utts) {
    EvalOutputs out;
    auto& rep = out.report;
    rep.variant = to_string(ck.spec.pooling);
    rep.utterances = utts.size();
    if (utts.empty()) return out;
    std::size_t correct = 0, utt_correct = 0;
    for (const auto& u : utts) {
        for (int l : u.anchor_labels)
            if (l < 0 || static_cast<std::size_t>(l) >= ck.spec.classes)
                throw Error("evaluate: utterance " + u.id + " has label " + std::to_string(l) +
                            " outside the checkpoint's class inventory");
        const auto r = model_step(ck.spec, ck.params, u.spec, u.anchor_labels);
        rep.positions += r.positions;
        correct += r.correct;
        rep.mean_cross_entropy += r.loss;
        std::vector<int> predicted, truth;
        for (std::size_t t = 0; t + ck.spec.delay < static_cast<std::size_t>(r.logits.rows()); ++t) {
            Eigen::Index arg;
            r.logits.row(static_cast<Eigen::Index>(t + ck.spec.delay)).maxCoeff(&arg);
            predicted.push_back(static_cast<int>(arg));
            truth.push_back(u.anchor_labels[t]);
        }
        if (majority_label(predicted) == majority_label(truth)) ++utt_correct;
        if (r.attention) out.traces.emplace_back(u.id, *r.attention);
    }
    rep.frame_accuracy = rep.positions ? static_cast<double>(correct) / static_cast<double>(rep.positions) : 0.0;
    rep.utterance_accuracy = static_cast<double>(utt_correct) / static_cast<double>(utts.size());
    rep.mean_cross_entropy /= static_cast<double>(utts.size());
    if (!out.traces.empty()) {
        std::vector<AttentionTrace> tr;
        for (const auto& [id, t] : out.traces) tr.push_back(t);
        const double hop = ck.config.dsp.hop_s;
        rep.attention = attention_stats(tr, static_cast<std::size_t>(std::llround(2.0 / hop)),
                                        static_cast<std::size_t>(std::llround(0.5 / hop)));
    }
    return out;
}

inline nlohmann::ordered_json report_json(const EvalReport& r) {
    nlohmann::ordered_json j;
    j["variant"] = r.variant;
    j["utterances"] = r.utterances;
    j["positions"] = r.positions;
    j["frame_accuracy"] = r.frame_accuracy;
    j["utterance_accuracy"] = r.utterance_accuracy;
    j["mean_cross_entropy"] = r.mean_cross_entropy;
    if (r.attention) {
        const auto& a = *r.attention;
        nlohmann::ordered_json s;
        s["early_entropy_2s"] = a.early_entropy;
        s["late_entropy"] = a.late_frames ? nlohmann::ordered_json(a.late_entropy) : nlohmann::ordered_json();
        s["effective_directions"] = a.effective_directions;
        s["mean_attention"] = a.mean_attention;
        s["first_vs_final_0p5s_fraction"] = a.early_exceeds_fraction();
        s["first_vs_final_0p5s_count"] = a.early_exceeds_late;
        s["first_vs_final_0p5s_compared"] = a.compared;
        j["attention"] = s;
    }
    return j;
}

}  // namespace spatialbeam
