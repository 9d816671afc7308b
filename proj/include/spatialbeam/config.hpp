#pragma once

// Experiment configuration: JSON sections with every default materialized,
// unknown keys rejected, and cross-section consistency checked at load.

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "attention.hpp"
#include "backend.hpp"
#include "scene.hpp"

namespace spatialbeam {

enum class PoolingMode { None, Max, Average, AttentionOnline, AttentionOffline, AttentionLatency };

inline const std::vector<std::pair<PoolingMode, std::string>>& pooling_names() {
    static const std::vector<std::pair<PoolingMode, std::string>> names{
        {PoolingMode::None, "none"},
        {PoolingMode::Max, "max"},
        {PoolingMode::Average, "average"},
        {PoolingMode::AttentionOnline, "attention-online"},
        {PoolingMode::AttentionLatency, "attention-latency"},
        {PoolingMode::AttentionOffline, "attention-offline"},
    };
    return names;
}

inline std::string to_string(PoolingMode m) {
    for (const auto& [k, v] : pooling_names())
        if (k == m) return v;
    return "?";
}

inline PoolingMode parse_pooling(const std::string& s) {
    for (const auto& [k, v] : pooling_names())
        if (v == s) return k;
    throw ConfigError("unknown pooling mode '" + s + "'");
}

inline bool uses_attention(PoolingMode m) {
    return m == PoolingMode::AttentionOnline || m == PoolingMode::AttentionOffline || m == PoolingMode::AttentionLatency;
}

struct DspConfig {
    int sample_rate = 16000;
    double window_s = 0.025;
    double hop_s = 0.010;
    std::size_t fft_size = 0;  // 0: next power of two >= window

    std::size_t window_samples() const { return seconds_to_samples(window_s, sample_rate, "dsp.window_s"); }
    std::size_t hop_samples() const { return seconds_to_samples(hop_s, sample_rate, "dsp.hop_s"); }
    std::size_t resolved_fft() const { return fft_size == 0 ? next_pow2(window_samples()) : fft_size; }
    std::size_t bins() const { return resolved_fft() / 2 + 1; }
};

struct FrontEndConfig {
    std::size_t p = 6;
    std::size_t l = 32;
    std::string init = "steering";
};

struct AttentionConfig {
    std::size_t window = 50;
    std::size_t latency_frames = 50;
    bool segment_mean = true;
    std::size_t hidden = 64;
    std::size_t layers = 2;
};

struct BackendConfig {
    std::size_t hidden = 128;
    std::size_t layers = 2;
    std::size_t stack = 8;
    std::size_t stride = 3;
    std::size_t delay = 3;  // in stacked frames
};

struct TrainConfig {
    std::size_t epochs = 20;
    double lr = 0.001;
    std::size_t batch_size = 8;
    PoolingMode pooling = PoolingMode::AttentionOnline;
    std::size_t patience = 1;  // epochs of non-decreasing validation loss before halving
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double clip_norm = 5.0;
    double val_fraction = 0.1;
    std::size_t max_utterances = 0;  // 0: use the whole manifest
    bool validate_on_train = false;  // overfit runs: validate on the training subset itself
};

struct ExperimentConfig {
    std::uint64_t seed = 1;
    DspConfig dsp;
    ArrayGeometry array = ArrayGeometry::rectangle();
    SimulationConfig simulation;
    FrontEndConfig frontend;
    AttentionConfig attention;
    BackendConfig backend;
    TrainConfig training;
    std::vector<PoolingMode> variants{PoolingMode::None, PoolingMode::Max, PoolingMode::Average,
                                      PoolingMode::AttentionOnline, PoolingMode::AttentionLatency,
                                      PoolingMode::AttentionOffline};
    bool simulate = true;

    std::size_t classes() const { return simulation.num_classes + 1; }

    FrontEndShape frontend_shape() const { return {frontend.p, frontend.l, dsp.bins(), array.size()}; }
    StackSpec stack_spec() const { return {backend.stack, backend.stride}; }

    AttentionMode attention_mode(PoolingMode m) const {
        switch (m) {
            case PoolingMode::AttentionOffline: return AttentionMode::offline();
            case PoolingMode::AttentionLatency: return AttentionMode::latency(attention.latency_frames, attention.segment_mean);
            default: return AttentionMode::online(attention.window);
        }
    }

    /// Simulation settings with the shared dsp fields filled in.
    SimulationConfig resolved_simulation() const {
        SimulationConfig s = simulation;
        s.sample_rate = dsp.sample_rate;
        s.window_s = dsp.window_s;
        s.hop_s = dsp.hop_s;
        s.seed = derive_seed(seed, "simulate");
        return s;
    }

    void validate() const;
};

namespace detail {

class Reader {
public:
    Reader(const nlohmann::json& j, std::string section) : j_(j), section_(std::move(section)) {
        if (!j_.is_object()) throw ConfigError(section_ + ": expected an object");
    }

    template <class T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const std::exception&) {
            throw ConfigError(path(key) + ": wrong type");
        }
    }

    void get_size(const char* key, std::size_t& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        const auto& v = j_.at(key);
        if (!v.is_number_integer() || v.get<long long>() < 0) throw ConfigError(path(key) + ": expected a non-negative integer");
        out = v.get<std::size_t>();
    }

    const nlohmann::json* child(const char* key) {
        seen_.insert(key);
        return j_.contains(key) ? &j_.at(key) : nullptr;
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) throw ConfigError(path(it.key().c_str()) + ": unknown key");
    }

    std::string path(const char* key) const { return section_.empty() ? key : section_ + "." + key; }

private:
    const nlohmann::json& j_;
    std::string section_;
    std::set<std::string> seen_;
};

}  // namespace detail

inline ExperimentConfig config_from_json(const nlohmann::json& root) {
    ExperimentConfig c;
    detail::Reader r(root, "");
    r.get("seed", c.seed);
    r.get("simulate", c.simulate);
    if (const auto* j = r.child("dsp")) {
        detail::Reader s(*j, "dsp");
        s.get("sample_rate", c.dsp.sample_rate);
        s.get("window_s", c.dsp.window_s);
        s.get("hop_s", c.dsp.hop_s);
        s.get_size("fft_size", c.dsp.fft_size);
        std::size_t bins = 0;
        s.get_size("bins", bins);  // echoed by the resolved dump; checked in validate()
        s.finish();
        if (bins != 0 && bins != c.dsp.bins()) throw ConfigError("dsp.bins: inconsistent with fft_size");
    }
    if (const auto* j = r.child("array")) {
        detail::Reader s(*j, "array");
        double width = 0.06, depth = 0.07;
        s.get("width", width);
        s.get("depth", depth);
        c.array = ArrayGeometry::rectangle(width, depth);
        if (const auto* pos = s.child("positions")) {
            c.array.mic_positions.clear();
            if (!pos->is_array()) throw ConfigError("array.positions: expected a list of [x, y, z]");
            for (const auto& p : *pos) {
                if (!p.is_array() || p.size() != 3) throw ConfigError("array.positions: each entry needs 3 coordinates");
                c.array.mic_positions.push_back({p[0].get<double>(), p[1].get<double>(), p[2].get<double>()});
            }
        }
        s.finish();
    }
    if (const auto* j = r.child("simulation")) {
        detail::Reader s(*j, "simulation");
        auto& m = c.simulation;
        s.get_size("train_count", m.train_count);
        s.get_size("eval_count", m.eval_count);
        s.get_size("num_classes", m.num_classes);
        s.get("duration_s", m.duration_s);
        s.get("snr_min_db", m.snr_min_db);
        s.get("snr_max_db", m.snr_max_db);
        s.get("reflection_order", m.reflection_order);
        s.get("speed_of_sound", m.speed_of_sound);
        s.get("elevation_max_deg", m.elevation_max_deg);
        s.get("distance_min_m", m.distance_min_m);
        s.get("distance_max_m", m.distance_max_m);
        s.get("min_separation_deg", m.min_separation_deg);
        s.get("tone_low_hz", m.tone_low_hz);
        s.get("tone_high_hz", m.tone_high_hz);
        s.get("symbol_min_s", m.symbol_min_s);
        s.get("symbol_max_s", m.symbol_max_s);
        s.get("gap_min_s", m.gap_min_s);
        s.get("gap_max_s", m.gap_max_s);
        s.get("noise_kind", m.noise_kind);
        s.get("noise_gap_min_s", m.noise_gap_min_s);
        s.get("noise_gap_max_s", m.noise_gap_max_s);
        s.get("noise_band_hz", m.noise_band_hz);
        s.get_size("noise_bands", m.noise_bands);
        s.get("noise_broadband_fraction", m.noise_broadband_fraction);
        if (const auto* room = s.child("room")) {
            detail::Reader rr(*room, "simulation.room");
            std::vector<double> size, pos;
            rr.get("size", size);
            rr.get("array_position", pos);
            rr.get("reflection_coefficient", m.room.reflection_coefficient);
            rr.finish();
            if (!size.empty()) {
                if (size.size() != 3) throw ConfigError("simulation.room.size: expected 3 values");
                m.room.size = {size[0], size[1], size[2]};
            }
            if (!pos.empty()) {
                if (pos.size() != 3) throw ConfigError("simulation.room.array_position: expected 3 values");
                m.room.array_position = {pos[0], pos[1], pos[2]};
            }
        }
        s.finish();
    }
    if (const auto* j = r.child("frontend")) {
        detail::Reader s(*j, "frontend");
        s.get_size("p", c.frontend.p);
        s.get_size("l", c.frontend.l);
        s.get("init", c.frontend.init);
        std::size_t m = 0;
        s.get_size("m", m);
        s.finish();
        if (m != 0 && m != c.array.size()) throw ConfigError("frontend.m: does not match the array microphone count");
    }
    if (const auto* j = r.child("attention")) {
        detail::Reader s(*j, "attention");
        s.get_size("window", c.attention.window);
        s.get_size("latency_frames", c.attention.latency_frames);
        s.get("segment_mean", c.attention.segment_mean);
        s.get_size("hidden", c.attention.hidden);
        s.get_size("layers", c.attention.layers);
        s.finish();
    }
    if (const auto* j = r.child("backend")) {
        detail::Reader s(*j, "backend");
        s.get_size("hidden", c.backend.hidden);
        s.get_size("layers", c.backend.layers);
        s.get_size("stack", c.backend.stack);
        s.get_size("stride", c.backend.stride);
        s.get_size("delay", c.backend.delay);
        s.finish();
    }
    if (const auto* j = r.child("training")) {
        detail::Reader s(*j, "training");
        auto& t = c.training;
        s.get_size("epochs", t.epochs);
        s.get("lr", t.lr);
        s.get_size("batch_size", t.batch_size);
        std::string pooling = to_string(t.pooling);
        s.get("pooling", pooling);
        t.pooling = parse_pooling(pooling);
        s.get_size("patience", t.patience);
        s.get("beta1", t.beta1);
        s.get("beta2", t.beta2);
        s.get("eps", t.eps);
        s.get("clip_norm", t.clip_norm);
        s.get("val_fraction", t.val_fraction);
        s.get_size("max_utterances", t.max_utterances);
        s.get("validate_on_train", t.validate_on_train);
        s.finish();
    }
    if (const auto* j = r.child("variants")) {
        if (!j->is_array()) throw ConfigError("variants: expected a list of pooling modes");
        c.variants.clear();
        for (const auto& v : *j) c.variants.push_back(parse_pooling(v.get<std::string>()));
    }
    r.finish();
    c.validate();
    return c;
}

inline void ExperimentConfig::validate() const {
    if (dsp.sample_rate <= 0) throw ConfigError("dsp.sample_rate: must be positive");
    const auto win = dsp.window_samples();
    dsp.hop_samples();
    if (dsp.fft_size != 0 && (dsp.fft_size < win || (dsp.fft_size & (dsp.fft_size - 1)) != 0))
        throw ConfigError("dsp.fft_size: must be a power of two >= the window length");
    array.validate();
    if (array.size() < 1) throw ConfigError("array.positions: need at least one microphone");
    resolved_simulation().validate();
    if (frontend.p == 0) throw ConfigError("frontend.p: must be at least 1");
    if (frontend.l == 0) throw ConfigError("frontend.l: must be at least 1");
    if (frontend.init != "steering" && frontend.init != "random") throw ConfigError("frontend.init: expected steering|random");
    if (attention.window == 0) throw ConfigError("attention.window: must be at least 1");
    if (attention.hidden == 0 && attention.layers > 0) throw ConfigError("attention.hidden: must be positive");
    if (backend.hidden == 0 && backend.layers > 0) throw ConfigError("backend.hidden: must be positive");
    if (backend.stack == 0) throw ConfigError("backend.stack: must be positive");
    if (backend.stride == 0) throw ConfigError("backend.stride: must be positive");
    if (!(training.lr > 0)) throw ConfigError("training.lr: must be positive");
    if (training.batch_size == 0) throw ConfigError("training.batch_size: must be positive");
    if (!(training.beta1 >= 0 && training.beta1 < 1)) throw ConfigError("training.beta1: must lie in [0, 1)");
    if (!(training.beta2 >= 0 && training.beta2 < 1)) throw ConfigError("training.beta2: must lie in [0, 1)");
    if (!(training.eps > 0)) throw ConfigError("training.eps: must be positive");
    if (!(training.clip_norm > 0)) throw ConfigError("training.clip_norm: must be positive");
    if (!(training.val_fraction >= 0 && training.val_fraction < 1))
        throw ConfigError("training.val_fraction: must lie in [0, 1)");
    if (variants.empty()) throw ConfigError("variants: need at least one pooling mode");
}

/// Resolved configuration with every default and derived value written out.
inline nlohmann::ordered_json config_to_json(const ExperimentConfig& c) {
    nlohmann::ordered_json j;
    j["seed"] = c.seed;
    j["simulate"] = c.simulate;
    j["dsp"] = {{"sample_rate", c.dsp.sample_rate}, {"window_s", c.dsp.window_s}, {"hop_s", c.dsp.hop_s},
                {"fft_size", c.dsp.resolved_fft()}, {"bins", c.dsp.bins()}};
    nlohmann::ordered_json pos = nlohmann::ordered_json::array();
    for (const auto& p : c.array.mic_positions) pos.push_back({p[0], p[1], p[2]});
    j["array"] = {{"positions", pos}};
    const auto& s = c.simulation;
    j["simulation"] = {{"train_count", s.train_count},
                       {"eval_count", s.eval_count},
                       {"num_classes", s.num_classes},
                       {"duration_s", s.duration_s},
                       {"snr_min_db", s.snr_min_db},
                       {"snr_max_db", s.snr_max_db},
                       {"reflection_order", s.reflection_order},
                       {"speed_of_sound", s.speed_of_sound},
                       {"elevation_max_deg", s.elevation_max_deg},
                       {"distance_min_m", s.distance_min_m},
                       {"distance_max_m", s.distance_max_m},
                       {"min_separation_deg", s.min_separation_deg},
                       {"tone_low_hz", s.tone_low_hz},
                       {"tone_high_hz", s.tone_high_hz},
                       {"symbol_min_s", s.symbol_min_s},
                       {"symbol_max_s", s.symbol_max_s},
                       {"gap_min_s", s.gap_min_s},
                       {"gap_max_s", s.gap_max_s},
                       {"noise_kind", s.noise_kind},
                       {"noise_gap_min_s", s.noise_gap_min_s},
                       {"noise_gap_max_s", s.noise_gap_max_s},
                       {"noise_band_hz", s.noise_band_hz},
                       {"noise_bands", s.noise_bands},
                       {"noise_broadband_fraction", s.noise_broadband_fraction},
                       {"room",
                        {{"size", {s.room.size[0], s.room.size[1], s.room.size[2]}},
                         {"array_position", {s.room.array_position[0], s.room.array_position[1], s.room.array_position[2]}},
                         {"reflection_coefficient", s.room.reflection_coefficient}}}};
    j["frontend"] = {{"p", c.frontend.p}, {"l", c.frontend.l}, {"m", c.array.size()}, {"init", c.frontend.init}};
    j["attention"] = {{"window", c.attention.window},
                      {"latency_frames", c.attention.latency_frames},
                      {"segment_mean", c.attention.segment_mean},
                      {"hidden", c.attention.hidden},
                      {"layers", c.attention.layers}};
    j["backend"] = {{"hidden", c.backend.hidden},
                    {"layers", c.backend.layers},
                    {"stack", c.backend.stack},
                    {"stride", c.backend.stride},
                    {"delay", c.backend.delay}};
    const auto& t = c.training;
    j["training"] = {{"epochs", t.epochs},
                     {"lr", t.lr},
                     {"batch_size", t.batch_size},
                     {"pooling", to_string(t.pooling)},
                     {"patience", t.patience},
                     {"beta1", t.beta1},
                     {"beta2", t.beta2},
                     {"eps", t.eps},
                     {"clip_norm", t.clip_norm},
                     {"val_fraction", t.val_fraction},
                     {"max_utterances", t.max_utterances},
                     {"validate_on_train", t.validate_on_train}};
    nlohmann::ordered_json v = nlohmann::ordered_json::array();
    for (auto m : c.variants) v.push_back(to_string(m));
    j["variants"] = v;
    return j;
}

/// Digest of everything that determines tensor shapes and model semantics.
inline std::uint64_t model_digest(const ExperimentConfig& c) {
    const auto j = config_to_json(c);
    nlohmann::ordered_json m;
    m["dsp"] = j["dsp"];
    m["array"] = j["array"];
    m["frontend"] = j["frontend"];
    m["attention"] = j["attention"];
    m["backend"] = j["backend"];
    m["pooling"] = j["training"]["pooling"];
    m["classes"] = c.classes();
    return fnv1a(m.dump());
}

inline ExperimentConfig parse_config_text(const std::string& text) {
    std::string trimmed = text;
    trimmed.erase(0, trimmed.find_first_not_of(" \t\r\n"));
    if (trimmed.empty()) {
        ExperimentConfig c;
        c.validate();
        return c;
    }
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const std::exception& ex) {
        throw ConfigError(std::string("config is not valid JSON: ") + ex.what());
    }
    return config_from_json(j);
}

inline ExperimentConfig parse_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("config file not found: " + path.string());
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_config_text(ss.str());
}

inline void write_resolved_config(const std::filesystem::path& path, const ExperimentConfig& c) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot write " + path.string());
    os << config_to_json(c).dump(2) << '\n';
}

}  // namespace spatialbeam
