#pragma once

// Far-field scene simulation: array geometry, plane-wave steering vectors,
// direct-path (+ optional first-order image) rendering, SNR mixing, and the
// synthetic labelled dataset generator.

#include <array>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dsp.hpp"
#include "wav.hpp"

namespace spatialbeam {

using Vec3 = std::array<double, 3>;

inline double dot3(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline double norm3(const Vec3& a) { return std::sqrt(dot3(a, a)); }
inline Vec3 sub3(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 add3(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 scale3(const Vec3& a, double s) { return {a[0] * s, a[1] * s, a[2] * s}; }

struct ArrayGeometry {
    std::vector<Vec3> mic_positions;

    std::size_t size() const { return mic_positions.size(); }

    Vec3 centroid() const {
        Vec3 c{0, 0, 0};
        for (const auto& p : mic_positions) c = add3(c, p);
        return mic_positions.empty() ? c : scale3(c, 1.0 / static_cast<double>(mic_positions.size()));
    }

    /// Largest mic distance from the centroid.
    double radius() const {
        double r = 0.0;
        const auto c = centroid();
        for (const auto& p : mic_positions) r = std::max(r, norm3(sub3(p, c)));
        return r;
    }

    /// Largest pairwise mic distance.
    double aperture() const {
        double a = 0.0;
        for (const auto& p : mic_positions)
            for (const auto& q : mic_positions) a = std::max(a, norm3(sub3(p, q)));
        return a;
    }

    void validate() const {
        if (mic_positions.empty()) throw ConfigError("array geometry has no microphones");
        for (std::size_t i = 0; i < size(); ++i)
            for (std::size_t j = i + 1; j < size(); ++j)
                if (norm3(sub3(mic_positions[i], mic_positions[j])) < 1e-9)
                    throw ConfigError("microphones " + std::to_string(i) + " and " + std::to_string(j) +
                                      " share a position");
    }

    /// Four mics on the corners of a width x depth rectangle centred at the origin.
    static ArrayGeometry rectangle(double width = 0.06, double depth = 0.07) {
        const double x = width / 2, y = depth / 2;
        return {{{-x, -y, 0.0}, {x, -y, 0.0}, {x, y, 0.0}, {-x, y, 0.0}}};
    }
};

struct SourcePlacement {
    double azimuth = 0.0;    // radians, [0, 2pi)
    double elevation = 0.0;  // radians, [-pi/2, pi/2]
    double distance = 3.0;   // metres from the array centroid

    /// Unit vector pointing from the array towards the source.
    Vec3 direction() const {
        return {std::cos(elevation) * std::cos(azimuth), std::cos(elevation) * std::sin(azimuth), std::sin(elevation)};
    }

    bool far_field(const ArrayGeometry& g) const { return distance >= 10.0 * g.aperture(); }

    void validate() const {
        if (!(azimuth >= 0.0 && azimuth < 2.0 * kPi)) throw ConfigError("azimuth must lie in [0, 2pi)");
        if (!(elevation >= -kPi / 2 && elevation <= kPi / 2)) throw ConfigError("elevation must lie in [-pi/2, pi/2]");
        if (!(distance > 0.0)) throw ConfigError("distance must be positive");
    }
};

inline Vec3 unit_direction(double azimuth, double elevation) {
    return SourcePlacement{azimuth, elevation, 1.0}.direction();
}

/// Plane-wave array response, phase referenced to the array centroid:
/// element m = exp(-i 2 pi f tau_m), tau_m = -(u . (p_m - centroid)) / c.
inline std::vector<cdouble> steering_vector(const ArrayGeometry& geom, const Vec3& direction, double freq_hz,
                                            double speed_of_sound = 343.0) {
    if (freq_hz < 0.0) throw ConfigError("steering_vector: negative frequency");
    const double n = norm3(direction);
    if (n < 1e-12) throw ConfigError("steering_vector: zero-norm direction");
    const Vec3 u = scale3(direction, 1.0 / n);
    const Vec3 c = geom.centroid();
    std::vector<cdouble> d(geom.size());
    for (std::size_t m = 0; m < geom.size(); ++m) {
        const double tau = -dot3(u, sub3(geom.mic_positions[m], c)) / speed_of_sound;
        const double phase = -2.0 * kPi * freq_hz * tau;
        d[m] = {std::cos(phase), std::sin(phase)};
    }
    return d;
}

// ---------------------------------------------------------------------------

/// Rectangular room used for first-order image sources. The array centroid
/// sits at `array_position` inside [0, size].
struct RoomConfig {
    Vec3 size{10.0, 10.0, 4.0};
    Vec3 array_position{5.0, 5.0, 1.2};
    double reflection_coefficient = 0.5;
};

struct RenderOptions {
    int reflection_order = 0;
    double speed_of_sound = 343.0;
    RoomConfig room{};
};

inline constexpr int kSincHalfWidth = 15;  // 31 taps

/// Windowed-sinc taps h[j], j = -15..15, for a fractional delay in [0, 1).
inline std::array<double, 2 * kSincHalfWidth + 1> fractional_delay_taps(double frac) {
    std::array<double, 2 * kSincHalfWidth + 1> h{};
    for (int j = -kSincHalfWidth; j <= kSincHalfWidth; ++j) {
        const double x = j - frac;
        double v;
        if (std::abs(x) < 1e-12) v = 1.0;
        else v = std::sin(kPi * x) / (kPi * x);
        const double w = 0.5 * (1.0 + std::cos(kPi * x / (kSincHalfWidth + 1)));
        h[static_cast<std::size_t>(j + kSincHalfWidth)] = frac == 0.0 ? (j == 0 ? 1.0 : 0.0) : v * w;
    }
    return h;
}

/// Adds gain * x delayed by `delay_samples` into y (same length as x).
inline void add_delayed(std::span<const double> x, double delay_samples, double gain, std::span<double> y) {
    const double whole = std::floor(delay_samples);
    const double frac = delay_samples - whole;
    const auto d = static_cast<long>(whole);
    const auto h = fractional_delay_taps(frac);
    const long n = static_cast<long>(x.size());
    for (long i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int j = -kSincHalfWidth; j <= kSincHalfWidth; ++j) {
            const long k = i - d - j;
            if (k >= 0 && k < n) acc += x[static_cast<std::size_t>(k)] * h[static_cast<std::size_t>(j + kSincHalfWidth)];
        }
        y[static_cast<std::size_t>(i)] += gain * acc;
    }
}

/// Propagates a mono signal to every microphone: per-mic fractional delay of
/// distance / c and 1/distance attenuation, plus six first-order images when
/// reflection_order is 1.
inline MultiChannelWaveform render_source(std::span<const double> wave, int sample_rate, const ArrayGeometry& geom,
                                          const SourcePlacement& place, const RenderOptions& opt = {}) {
    geom.validate();
    place.validate();
    if (opt.reflection_order != 0 && opt.reflection_order != 1) throw ConfigError("reflection_order must be 0 or 1");
    if (place.distance <= geom.radius()) throw ConfigError("source placed inside the array hull");
    const Vec3 c = geom.centroid();
    const Vec3 src = add3(c, scale3(place.direction(), place.distance));

    struct Image {
        Vec3 pos;
        double gain;
    };
    std::vector<Image> images{{src, 1.0}};
    if (opt.reflection_order == 1) {
        const auto& room = opt.room;
        // Room coordinates: array centroid maps to room.array_position.
        const Vec3 offset = sub3(room.array_position, c);
        const Vec3 s_room = add3(src, offset);
        for (int a = 0; a < 3; ++a)
            if (s_room[a] <= 0.0 || s_room[a] >= room.size[a] || room.array_position[a] <= 0.0 ||
                room.array_position[a] >= room.size[a])
                throw ConfigError("source or array lies outside the configured room");
        for (int a = 0; a < 3; ++a) {
            for (double wall : {0.0, room.size[a]}) {
                Vec3 img = s_room;
                img[a] = 2.0 * wall - s_room[a];
                images.push_back({sub3(img, offset), room.reflection_coefficient});
            }
        }
    }

    MultiChannelWaveform out(geom.size(), wave.size(), sample_rate);
    for (std::size_t m = 0; m < geom.size(); ++m) {
        for (const auto& im : images) {
            const double dist = norm3(sub3(im.pos, geom.mic_positions[m]));
            add_delayed(wave, dist / opt.speed_of_sound * sample_rate, im.gain / dist, out.samples[m]);
        }
    }
    return out;
}

/// Mean per-sample power averaged over channels.
inline double mean_power(const MultiChannelWaveform& w) {
    double acc = 0.0;
    std::size_t n = 0;
    for (const auto& ch : w.samples)
        for (double v : ch) {
            acc += v * v;
            ++n;
        }
    return n == 0 ? 0.0 : acc / static_cast<double>(n);
}

/// Noise gain that brings the mixture to the requested SNR.
inline double snr_gain(double speech_power, double noise_power, double snr_db) {
    if (noise_power <= 0.0) throw Error("mix_at_snr: noise is silent, target SNR unreachable");
    return std::sqrt(speech_power / (noise_power * std::pow(10.0, snr_db / 10.0)));
}

inline MultiChannelWaveform mix_at_snr(const MultiChannelWaveform& speech, const MultiChannelWaveform& noise,
                                       double snr_db) {
    speech.validate();
    noise.validate();
    if (speech.channels() != noise.channels() || speech.length() != noise.length())
        throw ShapeError("mix_at_snr: speech and noise shapes differ");
    if (speech.sample_rate != noise.sample_rate) throw ShapeError("mix_at_snr: sample rates differ");
    const double g = snr_gain(mean_power(speech), mean_power(noise), snr_db);
    MultiChannelWaveform out = speech;
    for (std::size_t m = 0; m < out.channels(); ++m)
        for (std::size_t i = 0; i < out.length(); ++i) out.samples[m][i] += g * noise.samples[m][i];
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic source content.

struct SimulationConfig {
    std::size_t train_count = 500;
    std::size_t eval_count = 100;
    std::size_t num_classes = 10;  // symbol classes; label 0 is silence
    int sample_rate = 16000;
    double duration_s = 1.5;
    double snr_min_db = 0.0;
    double snr_max_db = 25.0;
    std::uint64_t seed = 1;
    int reflection_order = 0;
    double speed_of_sound = 343.0;
    RoomConfig room{};
    // Placement distributions.
    double elevation_max_deg = 20.0;
    double distance_min_m = 1.0;
    double distance_max_m = 4.0;
    double min_separation_deg = 45.0;
    // Symbol inventory: each class is a pair of tones from a grid spanning the band.
    double tone_low_hz = 2500.0;
    double tone_high_hz = 6500.0;
    double symbol_min_s = 0.15;
    double symbol_max_s = 0.30;
    double gap_min_s = 0.03;
    double gap_max_s = 0.08;
    // Interference. "symbols": a competing source drawing from the same symbol
    // inventory, with its own (longer) gaps so it arrives in bursts. "bands":
    // narrow noise bands centred on tone-grid frequencies, re-drawn every segment.
    std::string noise_kind = "symbols";
    double noise_gap_min_s = 0.3;
    double noise_gap_max_s = 0.6;
    double noise_band_hz = 80.0;
    std::size_t noise_bands = 2;
    double noise_broadband_fraction = 0.1;
    double window_s = 0.025;
    double hop_s = 0.010;

    void validate() const {
        if (num_classes < 1) throw ConfigError("simulation.num_classes: must be at least 1");
        if (sample_rate <= 0) throw ConfigError("simulation.sample_rate: must be positive");
        if (!(duration_s > 0)) throw ConfigError("simulation.duration_s: must be positive");
        if (snr_min_db > snr_max_db) throw ConfigError("simulation.snr_min_db: exceeds snr_max_db");
        if (reflection_order != 0 && reflection_order != 1)
            throw ConfigError("simulation.reflection_order: must be 0 or 1");
        if (!(distance_min_m > 0 && distance_max_m >= distance_min_m))
            throw ConfigError("simulation.distance_min_m: invalid distance range");
        if (!(tone_low_hz > 0 && tone_high_hz > tone_low_hz && tone_high_hz < sample_rate / 2.0))
            throw ConfigError("simulation.tone_high_hz: tone band must lie below Nyquist");
        if (!(symbol_min_s > 0 && symbol_max_s >= symbol_min_s)) throw ConfigError("simulation.symbol_min_s: invalid");
        if (!(gap_min_s >= 0 && gap_max_s >= gap_min_s)) throw ConfigError("simulation.gap_min_s: invalid");
        if (!(noise_gap_min_s >= 0 && noise_gap_max_s >= noise_gap_min_s))
            throw ConfigError("simulation.noise_gap_min_s: invalid");
        if (min_separation_deg < 0 || min_separation_deg > 180)
            throw ConfigError("simulation.min_separation_deg: must lie in [0, 180]");
        if (noise_kind != "symbols" && noise_kind != "bands")
            throw ConfigError("simulation.noise_kind: expected symbols|bands");
        if (tone_grid_size() * (tone_grid_size() - 1) / 2 < num_classes)
            throw ConfigError("simulation.num_classes: too many classes for the tone grid");
    }

    /// Smallest grid n with n*(n-1)/2 >= num_classes.
    std::size_t tone_grid_size() const {
        std::size_t n = 2;
        while (n * (n - 1) / 2 < num_classes) ++n;
        return n;
    }
};

inline std::vector<double> tone_grid(const SimulationConfig& cfg) {
    const std::size_t n = cfg.tone_grid_size();
    std::vector<double> f(n);
    for (std::size_t i = 0; i < n; ++i)
        f[i] = cfg.tone_low_hz + (cfg.tone_high_hz - cfg.tone_low_hz) * static_cast<double>(i) / static_cast<double>(n - 1);
    return f;
}

/// Tone-grid index pair of class k (1-based).
inline std::pair<std::size_t, std::size_t> class_tones(std::size_t k, std::size_t grid) {
    std::size_t idx = 0;
    for (std::size_t a = 0; a < grid; ++a)
        for (std::size_t b = a + 1; b < grid; ++b)
            if (++idx == k) return {a, b};
    throw ConfigError("class index out of range");
}

struct SymbolTrack {
    std::vector<double> samples;
    std::vector<int> sample_labels;  // class per sample, 0 = silence
};

/// Sequence of two-tone symbols separated by short silences.
/// The first symbol starts after a gap drawn from the target's range; later gaps
/// use [gap_min_s, gap_max_s].
inline SymbolTrack synthesize_symbols(const SimulationConfig& cfg, Rng& rng, double gap_min_s, double gap_max_s) {
    const auto n = static_cast<std::size_t>(std::llround(cfg.duration_s * cfg.sample_rate));
    SymbolTrack tr{std::vector<double>(n, 0.0), std::vector<int>(n, 0)};
    const auto grid = tone_grid(cfg);
    const double sr = cfg.sample_rate;
    const auto ramp = static_cast<std::size_t>(0.01 * sr);
    std::size_t pos = static_cast<std::size_t>(rng.uniform(cfg.gap_min_s, cfg.gap_max_s) * sr);
    while (pos < n) {
        const auto len = static_cast<std::size_t>(rng.uniform(cfg.symbol_min_s, cfg.symbol_max_s) * sr);
        const std::size_t cls = 1 + rng.index(cfg.num_classes);
        const auto [a, b] = class_tones(cls, grid.size());
        const double amp = rng.uniform(0.8, 1.2);
        const double ph_a = rng.uniform(0, 2 * kPi), ph_b = rng.uniform(0, 2 * kPi);
        for (std::size_t i = 0; i < len && pos + i < n; ++i) {
            double env = 1.0;
            if (i < ramp) env = 0.5 - 0.5 * std::cos(kPi * static_cast<double>(i) / static_cast<double>(ramp));
            if (len - i <= ramp)
                env = std::min(env, 0.5 - 0.5 * std::cos(kPi * static_cast<double>(len - i) / static_cast<double>(ramp)));
            const double t = static_cast<double>(pos + i) / sr;
            tr.samples[pos + i] = amp * env * 0.5 *
                                  (std::sin(2 * kPi * grid[a] * t + ph_a) + std::sin(2 * kPi * grid[b] * t + ph_b));
            tr.sample_labels[pos + i] = static_cast<int>(cls);
        }
        pos += len + static_cast<std::size_t>(rng.uniform(gap_min_s, gap_max_s) * sr);
    }
    return tr;
}

inline SymbolTrack synthesize_symbols(const SimulationConfig& cfg, Rng& rng) {
    return synthesize_symbols(cfg, rng, cfg.gap_min_s, cfg.gap_max_s);
}

/// Band-limited Gaussian noise: frequency-domain masking of white noise.
inline std::vector<double> band_noise(std::size_t n, int sample_rate, std::span<const std::pair<double, double>> bands,
                                      Rng& rng) {
    const std::size_t nfft = next_pow2(n);
    std::vector<cdouble> buf(nfft);
    for (std::size_t i = 0; i < n; ++i) buf[i] = rng.normal();
    fft_inplace(buf);
    for (std::size_t k = 0; k <= nfft / 2; ++k) {
        const double hz = static_cast<double>(k) * sample_rate / static_cast<double>(nfft);
        bool keep = false;
        for (const auto& [lo, hi] : bands) keep = keep || (hz >= lo && hz <= hi);
        if (!keep) {
            buf[k] = 0.0;
            if (k > 0 && k < nfft / 2) buf[nfft - k] = 0.0;
        }
    }
    fft_inplace(buf, true);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = buf[i].real();
    return out;
}

/// Interference: a competing symbol stream, or segments of narrowband noise
/// centred on random tone-grid frequencies; either way plus a broadband floor
/// over the tone band.
inline std::vector<double> synthesize_interference(const SimulationConfig& cfg, Rng& rng) {
    const auto n = static_cast<std::size_t>(std::llround(cfg.duration_s * cfg.sample_rate));
    const auto grid = tone_grid(cfg);
    std::vector<double> out(n, 0.0);
    const double sr = cfg.sample_rate;
    const auto ramp = static_cast<std::size_t>(0.01 * sr);
    std::size_t pos = 0;
    if (cfg.noise_kind == "symbols") {
        out = synthesize_symbols(cfg, rng, cfg.noise_gap_min_s, cfg.noise_gap_max_s).samples;
        pos = n;
    }
    while (pos < n) {
        const auto len = std::min(n - pos, static_cast<std::size_t>(rng.uniform(cfg.symbol_min_s, cfg.symbol_max_s) * sr));
        std::vector<std::pair<double, double>> bands;
        for (std::size_t b = 0; b < cfg.noise_bands; ++b) {
            const double c = grid[rng.index(grid.size())];
            bands.emplace_back(c - cfg.noise_band_hz / 2, c + cfg.noise_band_hz / 2);
        }
        const auto seg = band_noise(len, cfg.sample_rate, bands, rng);
        for (std::size_t i = 0; i < len; ++i) {
            double env = 1.0;
            if (i < ramp) env = 0.5 - 0.5 * std::cos(kPi * static_cast<double>(i) / static_cast<double>(ramp));
            if (len - i <= ramp)
                env = std::min(env, 0.5 - 0.5 * std::cos(kPi * static_cast<double>(len - i) / static_cast<double>(ramp)));
            out[pos + i] = env * seg[i];
        }
        pos += len;
    }
    if (cfg.noise_broadband_fraction > 0.0) {
        const std::pair<double, double> band{cfg.tone_low_hz - 200.0, cfg.tone_high_hz + 200.0};
        auto floor = band_noise(n, cfg.sample_rate, std::span(&band, 1), rng);
        double pn = 0, pf = 0;
        for (std::size_t i = 0; i < n; ++i) {
            pn += out[i] * out[i];
            pf += floor[i] * floor[i];
        }
        const double g = pf > 0 ? std::sqrt(cfg.noise_broadband_fraction * pn / pf) : 0.0;
        for (std::size_t i = 0; i < n; ++i) out[i] += g * floor[i];
    }
    return out;
}

// ---------------------------------------------------------------------------

struct SceneSpec {
    SourcePlacement speech;
    SourcePlacement noise;
    double snr_db = 10.0;
    std::uint64_t seed = 0;
    int reflection_order = 0;
};

inline double wrap_angle(double a) {
    a = std::fmod(a, 2.0 * kPi);
    return a < 0 ? a + 2.0 * kPi : a;
}

inline double azimuth_separation(double a, double b) {
    const double d = std::abs(wrap_angle(a) - wrap_angle(b));
    return std::min(d, 2.0 * kPi - d);
}

inline SourcePlacement random_placement(const SimulationConfig& cfg, Rng& rng) {
    const double el_max = cfg.elevation_max_deg * kPi / 180.0;
    SourcePlacement p;
    p.azimuth = wrap_angle(rng.uniform(0.0, 2.0 * kPi));
    p.elevation = rng.uniform(-el_max, el_max);
    p.distance = rng.uniform(cfg.distance_min_m, cfg.distance_max_m);
    return p;
}

inline SceneSpec random_scene(const SimulationConfig& cfg, std::uint64_t seed) {
    Rng rng(seed);
    SceneSpec s;
    s.seed = seed;
    s.reflection_order = cfg.reflection_order;
    s.speech = random_placement(cfg, rng);
    const double min_sep = cfg.min_separation_deg * kPi / 180.0;
    do {
        s.noise = random_placement(cfg, rng);
    } while (azimuth_separation(s.noise.azimuth, s.speech.azimuth) < min_sep);
    s.snr_db = rng.uniform(cfg.snr_min_db, cfg.snr_max_db);
    return s;
}

struct Utterance {
    MultiChannelWaveform mixture;
    std::vector<int> frame_labels;
};

/// Per-frame labels: the source label at each frame centre, shifted by the
/// direct-path delay to the array centroid.
inline std::vector<int> frame_labels_for(const std::vector<int>& sample_labels, std::size_t frames, std::size_t win,
                                         std::size_t hop, double delay_samples) {
    std::vector<int> out(frames, 0);
    const auto d = static_cast<long>(std::llround(delay_samples));
    for (std::size_t t = 0; t < frames; ++t) {
        const long centre = static_cast<long>(t * hop + win / 2) - d;
        if (centre >= 0 && centre < static_cast<long>(sample_labels.size()))
            out[t] = sample_labels[static_cast<std::size_t>(centre)];
    }
    return out;
}

inline Utterance simulate_utterance(const SimulationConfig& cfg, const ArrayGeometry& geom, const SceneSpec& scene) {
    Rng rng(derive_seed(scene.seed, "content"));
    const auto track = synthesize_symbols(cfg, rng);
    const auto interference = synthesize_interference(cfg, rng);
    RenderOptions opt;
    opt.reflection_order = scene.reflection_order;
    opt.speed_of_sound = cfg.speed_of_sound;
    opt.room = cfg.room;
    const auto speech = render_source(track.samples, cfg.sample_rate, geom, scene.speech, opt);
    const auto noise = render_source(interference, cfg.sample_rate, geom, scene.noise, opt);
    Utterance u;
    u.mixture = mix_at_snr(speech, noise, scene.snr_db);
    // Normalize the mixture peak to keep WAV samples within +-1.
    double peak = 0.0;
    for (const auto& ch : u.mixture.samples)
        for (double v : ch) peak = std::max(peak, std::abs(v));
    if (peak > 0.0)
        for (auto& ch : u.mixture.samples)
            for (double& v : ch) v *= 0.5 / peak;
    const auto win = seconds_to_samples(cfg.window_s, cfg.sample_rate, "window length");
    const auto hop = seconds_to_samples(cfg.hop_s, cfg.sample_rate, "hop");
    const std::size_t n = u.mixture.length();
    const std::size_t frames = n < win ? 0 : 1 + (n - win) / hop;
    u.frame_labels = frame_labels_for(track.sample_labels, frames, win, hop,
                                      scene.speech.distance / cfg.speed_of_sound * cfg.sample_rate);
    return u;
}

// ---------------------------------------------------------------------------
// Manifests.

struct ManifestEntry {
    std::string id;
    std::string mixture_path;  // relative to the manifest directory
    std::string label_path;
    SceneSpec scene;
};

struct DatasetManifest {
    std::string split = "train";
    std::filesystem::path root;  // directory the relative paths resolve against
    std::vector<ManifestEntry> entries;

    std::filesystem::path mixture(const ManifestEntry& e) const { return root / e.mixture_path; }
    std::filesystem::path labels(const ManifestEntry& e) const { return root / e.label_path; }
};

inline nlohmann::ordered_json placement_json(const SourcePlacement& p) {
    nlohmann::ordered_json j;
    j["azimuth"] = p.azimuth;
    j["elevation"] = p.elevation;
    j["distance"] = p.distance;
    return j;
}

inline SourcePlacement placement_from_json(const nlohmann::json& j) {
    return {j.at("azimuth").get<double>(), j.at("elevation").get<double>(), j.at("distance").get<double>()};
}

inline std::string manifest_line(const DatasetManifest& m, const ManifestEntry& e) {
    nlohmann::ordered_json j;
    j["id"] = e.id;
    j["split"] = m.split;
    j["mixture"] = e.mixture_path;
    j["labels"] = e.label_path;
    j["speech"] = placement_json(e.scene.speech);
    j["noise"] = placement_json(e.scene.noise);
    j["snr_db"] = e.scene.snr_db;
    j["seed"] = e.scene.seed;
    j["reflection_order"] = e.scene.reflection_order;
    return j.dump();
}

inline void write_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot write manifest " + path.string());
    for (const auto& e : m.entries) os << manifest_line(m, e) << '\n';
    if (!os) throw Error("failed writing manifest " + path.string());
}

/// Loads a manifest; ids must be unique and every referenced file must exist.
inline DatasetManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw Error("cannot open manifest " + path.string());
    DatasetManifest m;
    m.root = path.parent_path();
    std::set<std::string> ids;
    std::string line;
    std::size_t lineno = 0;
    bool split_set = false;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const std::exception& ex) {
            throw Error(path.string() + ":" + std::to_string(lineno) + ": " + ex.what());
        }
        ManifestEntry e;
        e.id = j.at("id").get<std::string>();
        e.mixture_path = j.at("mixture").get<std::string>();
        e.label_path = j.at("labels").get<std::string>();
        e.scene.speech = placement_from_json(j.at("speech"));
        e.scene.noise = placement_from_json(j.at("noise"));
        e.scene.snr_db = j.at("snr_db").get<double>();
        e.scene.seed = j.at("seed").get<std::uint64_t>();
        e.scene.reflection_order = j.value("reflection_order", 0);
        if (!split_set) {
            m.split = j.value("split", std::string("train"));
            split_set = true;
        }
        if (!ids.insert(e.id).second) throw Error("duplicate utterance id '" + e.id + "' in " + path.string());
        if (!std::filesystem::exists(m.root / e.mixture_path))
            throw Error("missing mixture file " + (m.root / e.mixture_path).string());
        if (!std::filesystem::exists(m.root / e.label_path))
            throw Error("missing label file " + (m.root / e.label_path).string());
        m.entries.push_back(std::move(e));
    }
    return m;
}

inline void write_labels(const std::filesystem::path& path, const std::vector<int>& labels) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot write " + path.string());
    for (int l : labels) os << l << '\n';
}

inline std::vector<int> read_labels(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw Error("cannot open " + path.string());
    std::vector<int> out;
    int v;
    while (is >> v) out.push_back(v);
    return out;
}

struct GeneratedDataset {
    DatasetManifest train;
    DatasetManifest eval;
};

inline std::string utterance_id(const std::string& split, std::size_t i) {
    std::ostringstream os;
    os << split << '_' << std::setw(5) << std::setfill('0') << i;
    return os.str();
}

/// Writes <out>/<split>/<id>.wav + .labels and <out>/<split>.jsonl. Each
/// utterance's randomness derives only from (seed, split, index).
inline GeneratedDataset generate_dataset(const SimulationConfig& cfg, const ArrayGeometry& geom,
                                         const std::filesystem::path& out_dir) {
    cfg.validate();
    geom.validate();
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec || !std::filesystem::is_directory(out_dir))
        throw Error("cannot create output directory " + out_dir.string());
    {
        const auto probe = out_dir / ".write_probe";
        std::ofstream os(probe);
        if (!os) throw Error("output directory " + out_dir.string() + " is not writable");
        os.close();
        std::filesystem::remove(probe, ec);
    }
    GeneratedDataset ds;
    for (auto* part : {&ds.train, &ds.eval}) {
        const bool is_train = part == &ds.train;
        part->split = is_train ? "train" : "eval";
        part->root = out_dir;
        const std::size_t count = is_train ? cfg.train_count : cfg.eval_count;
        if (count > 0) std::filesystem::create_directories(out_dir / part->split);
        const std::uint64_t split_seed = derive_seed(cfg.seed, part->split);
        for (std::size_t i = 0; i < count; ++i) {
            ManifestEntry e;
            e.id = utterance_id(part->split, i);
            e.scene = random_scene(cfg, derive_seed(split_seed, static_cast<std::uint64_t>(i)));
            e.mixture_path = part->split + "/" + e.id + ".wav";
            e.label_path = part->split + "/" + e.id + ".labels";
            const auto utt = simulate_utterance(cfg, geom, e.scene);
            write_wav(out_dir / e.mixture_path, utt.mixture, WavFormat::Float32);
            write_labels(out_dir / e.label_path, utt.frame_labels);
            part->entries.push_back(std::move(e));
        }
        write_manifest(out_dir / (part->split + ".jsonl"), *part);
    }
    return ds;
}

}  // namespace spatialbeam
