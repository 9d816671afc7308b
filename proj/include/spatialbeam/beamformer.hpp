#pragma once

// Multi-look-direction neural beamformer front end: P trainable complex
// spatial filters followed by L complex linear projection (CLP) features per
// direction, with hand-derived gradients over real/imaginary parts.

#include <string>

#include "dsp.hpp"
#include "scene.hpp"

namespace spatialbeam {

struct FrontEndShape {
    std::size_t directions = 6;  // P
    std::size_t features = 32;   // L
    std::size_t bins = 257;      // F
    std::size_t channels = 4;    // M
};

/// Trainable front-end weights. W is [P x F x M], G is [L x F], each split
/// into real and imaginary tensors.
struct FrontEndParams {
    Tensor w_re, w_im, g_re, g_im;

    FrontEndParams() = default;
    explicit FrontEndParams(const FrontEndShape& s)
        : w_re("frontend.w_re", {s.directions, s.bins, s.channels}),
          w_im("frontend.w_im", {s.directions, s.bins, s.channels}),
          g_re("frontend.g_re", {s.features, s.bins}),
          g_im("frontend.g_im", {s.features, s.bins}) {}

    FrontEndShape shape() const { return {w_re.dims[0], g_re.dims[0], w_re.dims[1], w_re.dims[2]}; }

    std::size_t w_index(std::size_t p, std::size_t f, std::size_t m) const {
        return (p * w_re.dims[1] + f) * w_re.dims[2] + m;
    }

    std::vector<Tensor*> tensors() { return {&w_re, &w_im, &g_re, &g_im}; }
    std::vector<const Tensor*> tensors() const { return {&w_re, &w_im, &g_re, &g_im}; }
};

enum class FrontEndInit { Steering, Random };

/// W: delay-and-sum steering vectors toward P azimuths evenly spaced over
/// [0, 2pi) at zero elevation, plus N(0, 0.01^2) noise per component (pure
/// noise in Random mode). G: complex Gaussian with E|G|^2 = 1/F.
inline FrontEndParams init_frontend(const FrontEndShape& s, const ArrayGeometry& geom, int sample_rate,
                                    std::size_t fft_size, Rng& rng, FrontEndInit mode = FrontEndInit::Steering,
                                    double speed_of_sound = 343.0) {
    if (geom.size() != s.channels) throw ShapeError("init_frontend: geometry has a different mic count");
    FrontEndParams prm(s);
    for (std::size_t p = 0; p < s.directions; ++p) {
        const double az = 2.0 * kPi * static_cast<double>(p) / static_cast<double>(s.directions);
        for (std::size_t f = 0; f < s.bins; ++f) {
            const double hz = static_cast<double>(f) * sample_rate / static_cast<double>(fft_size);
            std::vector<cdouble> d(s.channels, cdouble{});
            if (mode == FrontEndInit::Steering) d = steering_vector(geom, unit_direction(az, 0.0), hz, speed_of_sound);
            for (std::size_t m = 0; m < s.channels; ++m) {
                const auto i = prm.w_index(p, f, m);
                prm.w_re.data[i] = d[m].real() / static_cast<double>(s.channels) + 0.01 * rng.normal();
                prm.w_im.data[i] = d[m].imag() / static_cast<double>(s.channels) + 0.01 * rng.normal();
            }
        }
    }
    const double sigma = std::sqrt(0.5 / static_cast<double>(s.bins));
    for (auto& v : prm.g_re.data) v = sigma * rng.normal();
    for (auto& v : prm.g_im.data) v = sigma * rng.normal();
    return prm;
}

/// Beamformer output Y[t, p, f], stored as rows t*P + p.
struct BeamformedSpectrum {
    RowMatrix re, im;
    std::size_t frames = 0, directions = 0;
};

/// [frame T x direction P x feature L] log-magnitude features.
using DirectionalFeatures = Array3;

/// Y_p[t,f] = W_p[f]^H X[t,f].
inline BeamformedSpectrum beamform(const ComplexSpectrogram& spec, const FrontEndParams& prm) {
    const auto s = prm.shape();
    if (spec.channels() != s.channels)
        throw ShapeError("beamform: spectrogram has " + std::to_string(spec.channels()) + " channels, weights expect " +
                         std::to_string(s.channels));
    if (spec.bins() != s.bins)
        throw ShapeError("beamform: spectrogram has " + std::to_string(spec.bins()) + " bins, weights expect " +
                         std::to_string(s.bins));
    const std::size_t T = spec.frames(), P = s.directions, F = s.bins, M = s.channels;
    BeamformedSpectrum y;
    y.frames = T;
    y.directions = P;
    y.re.resize(static_cast<Eigen::Index>(T * P), static_cast<Eigen::Index>(F));
    y.im.resize(static_cast<Eigen::Index>(T * P), static_cast<Eigen::Index>(F));
    std::vector<double> xr(M), xi(M);
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t f = 0; f < F; ++f) {
            for (std::size_t m = 0; m < M; ++m) {
                xr[m] = spec.real(m, t, f);
                xi[m] = spec.imag(m, t, f);
            }
            for (std::size_t p = 0; p < P; ++p) {
                const auto w0 = prm.w_index(p, f, 0);
                const auto v = complex_dot(std::span(prm.w_re.data).subspan(w0, M), std::span(prm.w_im.data).subspan(w0, M),
                                           xr, xi);
                y.re(static_cast<Eigen::Index>(t * P + p), static_cast<Eigen::Index>(f)) = v.real();
                y.im(static_cast<Eigen::Index>(t * P + p), static_cast<Eigen::Index>(f)) = v.imag();
            }
        }
    return y;
}

/// Raw CLP projections S = Y G^T (no conjugation), rows t*P + p, columns l.
struct ClpProjection {
    RowMatrix re, im;
};

inline ClpProjection clp_project(const BeamformedSpectrum& y, const FrontEndParams& prm) {
    if (static_cast<std::size_t>(y.re.cols()) != prm.g_re.dims[1]) throw ShapeError("clp: bin count mismatch");
    const auto gr = prm.g_re.mat();
    const auto gi = prm.g_im.mat();
    ClpProjection s;
    s.re.noalias() = y.re * gr.transpose();
    s.re.noalias() -= y.im * gi.transpose();
    s.im.noalias() = y.re * gi.transpose();
    s.im.noalias() += y.im * gr.transpose();
    return s;
}

/// Z_{p,l}[t] = log(|sum_f Y_p[t,f] G_l[f]| + floor).
inline DirectionalFeatures clp_features(const BeamformedSpectrum& y, const FrontEndParams& prm,
                                        ClpProjection* keep = nullptr) {
    auto s = clp_project(y, prm);
    const std::size_t L = prm.g_re.dims[0];
    DirectionalFeatures z(y.frames, y.directions, L);
    for (std::size_t r = 0; r < y.frames * y.directions; ++r)
        for (std::size_t l = 0; l < L; ++l) {
            const double a = s.re(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(l));
            const double b = s.im(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(l));
            z.data[r * L + l] = std::log(std::sqrt(a * a + b * b) + kLogFloor);
        }
    if (keep) *keep = std::move(s);
    return z;
}

/// Intermediates retained by frontend_forward for the backward pass.
struct FrontEndState {
    BeamformedSpectrum y;
    ClpProjection s;
    DirectionalFeatures z;
    bool valid = false;
};

inline FrontEndState frontend_forward(const ComplexSpectrogram& spec, const FrontEndParams& prm) {
    FrontEndState st;
    st.y = beamform(spec, prm);
    st.z = clp_features(st.y, prm, &st.s);
    st.valid = true;
    return st;
}

struct FrontEndGrads {
    FrontEndParams params;  // gradient tensors mirror the parameter layout
    Array3 d_real, d_imag;  // optional gradient w.r.t. the input spectrogram
};

/// Backpropagates dL/dZ to W, G and optionally the input spectrogram. `spec`
/// must be the spectrogram passed to the matching forward call.
inline FrontEndGrads frontend_backward(const ComplexSpectrogram& spec, const FrontEndParams& prm,
                                       const FrontEndState& st, const DirectionalFeatures& dz, bool want_input_grad = false) {
    if (!st.valid) throw Error("frontend_backward called without forward state");
    if (!dz.same_shape(st.z)) throw ShapeError("frontend_backward: upstream gradient shape mismatch");
    const auto s = prm.shape();
    const std::size_t T = st.y.frames, P = s.directions, F = s.bins, M = s.channels, L = s.features;
    const auto rows = static_cast<Eigen::Index>(T * P);

    // dZ -> dS through log(|S| + floor).
    RowMatrix ds_re(rows, static_cast<Eigen::Index>(L)), ds_im(rows, static_cast<Eigen::Index>(L));
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index l = 0; l < static_cast<Eigen::Index>(L); ++l) {
            const double a = st.s.re(r, l), b = st.s.im(r, l);
            const double mag = std::sqrt(a * a + b * b);
            const double g = dz.data[static_cast<std::size_t>(r) * L + static_cast<std::size_t>(l)];
            const double k = mag > 0.0 ? g / (mag * (mag + kLogFloor)) : 0.0;
            ds_re(r, l) = k * a;
            ds_im(r, l) = k * b;
        }

    FrontEndGrads out{FrontEndParams(s), {}, {}};
    const auto gr = prm.g_re.mat();
    const auto gi = prm.g_im.mat();
    // S_re = Yr Gr^T - Yi Gi^T ; S_im = Yr Gi^T + Yi Gr^T
    auto dgr = out.params.g_re.mat();
    auto dgi = out.params.g_im.mat();
    dgr.noalias() = ds_re.transpose() * st.y.re;
    dgr.noalias() += ds_im.transpose() * st.y.im;
    dgi.noalias() = ds_im.transpose() * st.y.re;
    dgi.noalias() -= ds_re.transpose() * st.y.im;
    RowMatrix dy_re = ds_re * gr;
    dy_re.noalias() += ds_im * gi;
    RowMatrix dy_im = ds_im * gr;
    dy_im.noalias() -= ds_re * gi;

    // Y_re = sum_m Wr Xr + Wi Xi ; Y_im = sum_m Wr Xi - Wi Xr
    if (want_input_grad) {
        out.d_real = Array3(M, T, F);
        out.d_imag = Array3(M, T, F);
    }
    auto& dwr = out.params.w_re.data;
    auto& dwi = out.params.w_im.data;
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t p = 0; p < P; ++p) {
            const auto r = static_cast<Eigen::Index>(t * P + p);
            for (std::size_t f = 0; f < F; ++f) {
                const double gyr = dy_re(r, static_cast<Eigen::Index>(f));
                const double gyi = dy_im(r, static_cast<Eigen::Index>(f));
                const auto w0 = prm.w_index(p, f, 0);
                for (std::size_t m = 0; m < M; ++m) {
                    const double xr = spec.real(m, t, f), xi = spec.imag(m, t, f);
                    dwr[w0 + m] += gyr * xr + gyi * xi;
                    dwi[w0 + m] += gyr * xi - gyi * xr;
                    if (want_input_grad) {
                        const double wr = prm.w_re.data[w0 + m], wi = prm.w_im.data[w0 + m];
                        out.d_real(m, t, f) += gyr * wr - gyi * wi;
                        out.d_imag(m, t, f) += gyr * wi + gyi * wr;
                    }
                }
            }
        }
    return out;
}

/// Writes W as CSV rows (p, f, m, real, imag).
inline std::string weights_csv(const FrontEndParams& prm) {
    const auto s = prm.shape();
    std::string out = "p,f,m,real,imag\n";
    char buf[128];
    for (std::size_t p = 0; p < s.directions; ++p)
        for (std::size_t f = 0; f < s.bins; ++f)
            for (std::size_t m = 0; m < s.channels; ++m) {
                const auto i = prm.w_index(p, f, m);
                std::snprintf(buf, sizeof buf, "%zu,%zu,%zu,%.17g,%.17g\n", p, f, m, prm.w_re.data[i], prm.w_im.data[i]);
                out += buf;
            }
    return out;
}

}  // namespace spatialbeam
