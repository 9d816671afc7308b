#pragma once

// Signal primitives: complex dot product, radix-2 FFT, STFT/ISTFT and log-mel
// features. Everything here is a pure function of its inputs.

#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "core.hpp"

namespace spatialbeam {

using cdouble = std::complex<double>;

/// Time-domain samples, one row per channel.
struct MultiChannelWaveform {
    std::vector<std::vector<double>> samples;
    int sample_rate = 16000;

    MultiChannelWaveform() = default;
    MultiChannelWaveform(std::size_t channels, std::size_t length, int sr)
        : samples(channels, std::vector<double>(length, 0.0)), sample_rate(sr) {}

    std::size_t channels() const { return samples.size(); }
    std::size_t length() const { return samples.empty() ? 0 : samples.front().size(); }

    void validate() const {
        if (samples.empty()) throw ShapeError("waveform has no channels");
        if (sample_rate <= 0) throw ConfigError("sample_rate must be positive");
        for (const auto& ch : samples)
            if (ch.size() != samples.front().size()) throw ShapeError("waveform channels differ in length");
    }
};

enum class WindowKind { Hann, Rectangular };

/// Periodic window of the given length.
inline std::vector<double> make_window(std::size_t length, WindowKind kind = WindowKind::Hann) {
    std::vector<double> w(length, 1.0);
    if (kind == WindowKind::Hann)
        for (std::size_t n = 0; n < length; ++n)
            w[n] = 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(n) / static_cast<double>(length));
    return w;
}

inline std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

/// Complex STFT of a multichannel signal. `real`/`imag` are [channel x frame x bin].
struct ComplexSpectrogram {
    Array3 real;
    Array3 imag;
    int sample_rate = 16000;
    std::size_t window_samples = 0;
    std::size_t hop_samples = 0;
    std::size_t fft_size = 0;
    std::size_t source_length = 0;
    WindowKind window = WindowKind::Hann;

    std::size_t channels() const { return real.d0; }
    std::size_t frames() const { return real.d1; }
    std::size_t bins() const { return real.d2; }
    double frame_hop_s() const { return static_cast<double>(hop_samples) / sample_rate; }
    double window_len_s() const { return static_cast<double>(window_samples) / sample_rate; }

    /// Single-channel copy.
    ComplexSpectrogram channel(std::size_t m) const {
        if (m >= channels()) throw ShapeError("channel index out of range");
        ComplexSpectrogram out = *this;
        out.real = Array3(1, frames(), bins());
        out.imag = Array3(1, frames(), bins());
        const std::size_t n = frames() * bins();
        std::copy_n(real.data.begin() + static_cast<std::ptrdiff_t>(m * n), n, out.real.data.begin());
        std::copy_n(imag.data.begin() + static_cast<std::ptrdiff_t>(m * n), n, out.imag.data.begin());
        return out;
    }
};

// ---------------------------------------------------------------------------

/// conj(a) . b, with real and imaginary parts accumulated as separate real sums.
inline cdouble complex_dot(std::span<const double> a_re, std::span<const double> a_im,
                           std::span<const double> b_re, std::span<const double> b_im) {
    if (a_re.size() != a_im.size() || b_re.size() != b_im.size() || a_re.size() != b_re.size())
        throw ShapeError("complex_dot: length mismatch (" + std::to_string(a_re.size()) + " vs " +
                         std::to_string(b_re.size()) + ")");
    double re = 0.0;
    double im = 0.0;
    for (std::size_t i = 0; i < a_re.size(); ++i) {
        re += a_re[i] * b_re[i] + a_im[i] * b_im[i];
        im += a_re[i] * b_im[i] - a_im[i] * b_re[i];
    }
    return {re, im};
}

inline cdouble complex_dot(std::span<const cdouble> a, std::span<const cdouble> b) {
    if (a.size() != b.size())
        throw ShapeError("complex_dot: length mismatch (" + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()) + ")");
    double re = 0.0;
    double im = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        re += a[i].real() * b[i].real() + a[i].imag() * b[i].imag();
        im += a[i].real() * b[i].imag() - a[i].imag() * b[i].real();
    }
    return {re, im};
}

// ---------------------------------------------------------------------------

/// In-place iterative radix-2 FFT. `inverse` applies the 1/N scaling.
inline void fft_inplace(std::vector<cdouble>& x, bool inverse = false) {
    const std::size_t n = x.size();
    if (n == 0 || (n & (n - 1)) != 0) throw ShapeError("fft size must be a power of two");
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(x[i], x[j]);
    }
    const double sign = inverse ? 1.0 : -1.0;
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const std::size_t half = len / 2;
        for (std::size_t k = 0; k < half; ++k) {
            const double ang = sign * 2.0 * kPi * static_cast<double>(k) / static_cast<double>(len);
            const cdouble w(std::cos(ang), std::sin(ang));
            for (std::size_t i = 0; i < n; i += len) {
                const cdouble u = x[i + k];
                const cdouble v = x[i + k + half] * w;
                x[i + k] = u + v;
                x[i + k + half] = u - v;
            }
        }
    }
    if (inverse)
        for (auto& v : x) v /= static_cast<double>(n);
}

inline std::size_t seconds_to_samples(double seconds, int sample_rate, const char* what) {
    const double exact = seconds * sample_rate;
    const double rounded = std::round(exact);
    if (rounded < 1.0 || std::abs(exact - rounded) > 1e-6)
        throw ConfigError(std::string(what) + " of " + std::to_string(seconds) + " s is not a positive integer number of samples at " +
                          std::to_string(sample_rate) + " Hz");
    return static_cast<std::size_t>(rounded);
}

/// STFT with window/hop given in samples. FFT size is the next power of two
/// at or above the window length; frames are zero-padded to it.
inline ComplexSpectrogram stft_samples(const MultiChannelWaveform& wave, std::size_t win, std::size_t hop,
                                       WindowKind kind = WindowKind::Hann) {
    wave.validate();
    if (win == 0 || hop == 0) throw ConfigError("window and hop must be positive");
    const std::size_t n = wave.length();
    if (n < win)
        throw Error("insufficient samples: signal has " + std::to_string(n) + " samples, window needs " +
                    std::to_string(win));
    const std::size_t frames = 1 + (n - win) / hop;
    const std::size_t nfft = next_pow2(win);
    const std::size_t bins = nfft / 2 + 1;
    const auto window = make_window(win, kind);

    ComplexSpectrogram spec;
    spec.real = Array3(wave.channels(), frames, bins);
    spec.imag = Array3(wave.channels(), frames, bins);
    spec.sample_rate = wave.sample_rate;
    spec.window_samples = win;
    spec.hop_samples = hop;
    spec.fft_size = nfft;
    spec.source_length = n;
    spec.window = kind;

    std::vector<cdouble> buf(nfft);
    for (std::size_t m = 0; m < wave.channels(); ++m) {
        const auto& x = wave.samples[m];
        for (std::size_t t = 0; t < frames; ++t) {
            std::fill(buf.begin(), buf.end(), cdouble{});
            for (std::size_t i = 0; i < win; ++i) buf[i] = x[t * hop + i] * window[i];
            fft_inplace(buf);
            for (std::size_t f = 0; f < bins; ++f) {
                spec.real(m, t, f) = buf[f].real();
                spec.imag(m, t, f) = buf[f].imag();
            }
        }
    }
    return spec;
}

inline ComplexSpectrogram stft(const MultiChannelWaveform& wave, double window_len_s, double hop_s,
                               WindowKind kind = WindowKind::Hann) {
    wave.validate();
    const auto win = seconds_to_samples(window_len_s, wave.sample_rate, "window length");
    const auto hop = seconds_to_samples(hop_s, wave.sample_rate, "hop");
    return stft_samples(wave, win, hop, kind);
}

/// Sum of squared synthesis windows at every output sample.
inline std::vector<double> window_square_sum(std::size_t frames, std::size_t win, std::size_t hop,
                                             WindowKind kind) {
    const auto w = make_window(win, kind);
    std::vector<double> acc(frames == 0 ? 0 : (frames - 1) * hop + win, 0.0);
    for (std::size_t t = 0; t < frames; ++t)
        for (std::size_t i = 0; i < win; ++i) acc[t * hop + i] += w[i] * w[i];
    return acc;
}

/// First/last+1 sample index of the region reconstructed from full overlap.
inline std::pair<std::size_t, std::size_t> istft_interior(std::size_t frames, std::size_t win, std::size_t hop) {
    const std::size_t covered = frames == 0 ? 0 : (frames - 1) * hop + win;
    if (covered < 2 * win) return {0, 0};
    return {win, covered - win};
}

/// Weighted overlap-add inverse. Samples are normalized by the summed squared
/// window; samples where that sum vanishes (window edges) stay unnormalized.
inline MultiChannelWaveform istft(const ComplexSpectrogram& spec) {
    const std::size_t win = spec.window_samples, hop = spec.hop_samples, nfft = spec.fft_size;
    if (win == 0 || hop == 0 || nfft < win || spec.bins() != nfft / 2 + 1)
        throw ShapeError("istft: inconsistent spectrogram metadata");
    if (!spec.real.same_shape(spec.imag)) throw ShapeError("istft: real/imag shape mismatch");
    const std::size_t frames = spec.frames();
    const auto wsum = window_square_sum(frames, win, hop, spec.window);
    const double wmax = wsum.empty() ? 0.0 : *std::max_element(wsum.begin(), wsum.end());
    // Every sample away from the outer edges must be covered by some window.
    const auto [lo, hi] = istft_interior(frames, win, hop);
    if (hop > win) throw Error("istft: hop exceeds window, overlap-add cannot reconstruct");
    for (std::size_t i = lo; i < hi; ++i)
        if (wsum[i] < 1e-8 * wmax) throw Error("istft: window/hop pair does not satisfy the overlap-add condition");

    const auto w = make_window(win, spec.window);
    const std::size_t out_len = std::max(spec.source_length, wsum.size());
    MultiChannelWaveform out(spec.channels(), out_len, spec.sample_rate);
    std::vector<cdouble> buf(nfft);
    const double thr = 1e-10 * std::max(wmax, 1e-300);
    for (std::size_t m = 0; m < spec.channels(); ++m) {
        auto& y = out.samples[m];
        for (std::size_t t = 0; t < frames; ++t) {
            for (std::size_t f = 0; f < spec.bins(); ++f) buf[f] = {spec.real(m, t, f), spec.imag(m, t, f)};
            for (std::size_t f = spec.bins(); f < nfft; ++f) buf[f] = std::conj(buf[nfft - f]);
            fft_inplace(buf, true);
            for (std::size_t i = 0; i < win; ++i) y[t * hop + i] += buf[i].real() * w[i];
        }
        for (std::size_t i = 0; i < wsum.size(); ++i)
            if (wsum[i] > thr) y[i] /= wsum[i];
    }
    return out;
}

// ---------------------------------------------------------------------------

enum class FilterbankKind { Mel, Flat };

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// [n_mels x bins] weights. Mel: HTK-scale triangles with unit peak spanning
/// 0 Hz to Nyquist. Flat: contiguous equal-width bands, each weight 1/width.
inline RowMatrix mel_filterbank(std::size_t n_mels, std::size_t fft_size, int sample_rate,
                                FilterbankKind kind = FilterbankKind::Mel) {
    if (n_mels == 0) throw ConfigError("n_mels must be at least 1");
    const std::size_t bins = fft_size / 2 + 1;
    RowMatrix fb = RowMatrix::Zero(static_cast<Eigen::Index>(n_mels), static_cast<Eigen::Index>(bins));
    if (kind == FilterbankKind::Flat) {
        if (n_mels > bins) throw ConfigError("flat filterbank needs n_mels <= bins");
        for (std::size_t m = 0; m < n_mels; ++m) {
            const std::size_t b0 = m * bins / n_mels, b1 = (m + 1) * bins / n_mels;
            for (std::size_t b = b0; b < b1; ++b)
                fb(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(b)) = 1.0 / static_cast<double>(b1 - b0);
        }
        return fb;
    }
    const double mel_max = hz_to_mel(sample_rate / 2.0);
    std::vector<double> edges(n_mels + 2);
    for (std::size_t i = 0; i < edges.size(); ++i)
        edges[i] = mel_to_hz(mel_max * static_cast<double>(i) / static_cast<double>(n_mels + 1));
    for (std::size_t m = 0; m < n_mels; ++m) {
        const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
        for (std::size_t b = 0; b < bins; ++b) {
            const double hz = static_cast<double>(b) * sample_rate / static_cast<double>(fft_size);
            double v = 0.0;
            if (hz > lo && hz <= mid) v = (hz - lo) / (mid - lo);
            else if (hz > mid && hz < hi) v = (hi - hz) / (hi - mid);
            fb(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(b)) = v;
        }
    }
    return fb;
}

/// [frame x mel] natural-log filterbank energies.
struct LogMelFeatures {
    RowMatrix values;
};

/// Log filterbank energies of one channel of `spec` (power spectrum, log floor applied).
inline LogMelFeatures log_mel(const ComplexSpectrogram& spec, std::size_t n_mels = 80, std::size_t channel = 0,
                              FilterbankKind kind = FilterbankKind::Mel) {
    if (channel >= spec.channels()) throw ShapeError("log_mel: channel out of range");
    const auto fb = mel_filterbank(n_mels, spec.fft_size, spec.sample_rate, kind);
    if (static_cast<std::size_t>(fb.cols()) != spec.bins()) throw ShapeError("log_mel: bin count mismatch");
    RowMatrix power(static_cast<Eigen::Index>(spec.frames()), static_cast<Eigen::Index>(spec.bins()));
    for (std::size_t t = 0; t < spec.frames(); ++t)
        for (std::size_t f = 0; f < spec.bins(); ++f) {
            const double re = spec.real(channel, t, f), im = spec.imag(channel, t, f);
            power(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(f)) = re * re + im * im;
        }
    LogMelFeatures out;
    out.values = ((power * fb.transpose()).array() + kLogFloor).log().matrix();
    return out;
}

}  // namespace spatialbeam
