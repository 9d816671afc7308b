#pragma once

// The jointly trained network: beamformer front end -> pooling over look
// directions (attention or a baseline) -> frame stacking -> LSTM back end.

#include <optional>

#include "attention.hpp"
#include "backend.hpp"
#include "beamformer.hpp"
#include "config.hpp"

namespace spatialbeam {

struct ModelSpec {
    FrontEndShape frontend;
    PoolingMode pooling = PoolingMode::AttentionOnline;
    AttentionMode attention_mode;
    std::size_t attention_hidden = 64;
    std::size_t attention_layers = 2;
    StackSpec stack;
    std::size_t backend_hidden = 128;
    std::size_t backend_layers = 2;
    std::size_t delay = 3;
    std::size_t classes = 11;

    std::size_t pooled_width() const {
        return pooling == PoolingMode::None ? frontend.directions * frontend.features : frontend.features;
    }

    static ModelSpec from_config(const ExperimentConfig& c, std::optional<PoolingMode> pooling = std::nullopt) {
        ModelSpec s;
        s.frontend = c.frontend_shape();
        s.pooling = pooling.value_or(c.training.pooling);
        s.attention_mode = c.attention_mode(s.pooling);
        s.attention_hidden = c.attention.hidden;
        s.attention_layers = c.attention.layers;
        s.stack = c.stack_spec();
        s.backend_hidden = c.backend.hidden;
        s.backend_layers = c.backend.layers;
        s.delay = c.backend.delay;
        s.classes = c.classes();
        return s;
    }
};

struct ModelParams {
    FrontEndParams frontend;
    std::optional<AttentionSubnetParams> attention;
    BackendParams backend;

    ModelParams() = default;
    explicit ModelParams(const ModelSpec& s)
        : frontend(s.frontend),
          backend(s.pooled_width() * s.stack.stack, s.backend_hidden, s.backend_layers, s.classes) {
        if (uses_attention(s.pooling))
            attention.emplace(s.frontend.directions, s.frontend.features, s.attention_hidden, s.attention_layers);
    }

    std::vector<Tensor*> tensors() {
        auto out = frontend.tensors();
        if (attention) {
            auto a = attention->tensors();
            out.insert(out.end(), a.begin(), a.end());
        }
        auto b = backend.tensors();
        out.insert(out.end(), b.begin(), b.end());
        return out;
    }
    std::vector<const Tensor*> tensors() const {
        auto out = frontend.tensors();
        if (attention) {
            auto a = attention->tensors();
            out.insert(out.end(), a.begin(), a.end());
        }
        auto b = backend.tensors();
        out.insert(out.end(), b.begin(), b.end());
        return out;
    }

    void zero() {
        for (auto* t : tensors()) t->zero();
    }

    std::size_t count() const {
        std::size_t n = 0;
        for (const auto* t : tensors()) n += t->size();
        return n;
    }
};

inline ModelParams init_model(const ModelSpec& s, const ArrayGeometry& geom, int sample_rate, std::size_t fft_size,
                              Rng& rng, FrontEndInit init = FrontEndInit::Steering, double speed_of_sound = 343.0) {
    ModelParams prm(s);
    prm.frontend = init_frontend(s.frontend, geom, sample_rate, fft_size, rng, init, speed_of_sound);
    if (prm.attention) prm.attention->init(rng);
    prm.backend.init(rng);
    return prm;
}

/// Per-utterance forward products.
struct ForwardResult {
    double loss = 0.0;
    std::size_t positions = 0;
    std::size_t correct = 0;
    RowMatrix logits;
    std::optional<AttentionTrace> attention;
    std::vector<std::uint8_t> max_pattern;  // max pooling only
};

/// Forward (and, when `grads` is non-null, backward) for one utterance.
/// Parameter gradients are scaled by `grad_scale` and added into `grads`.
inline ForwardResult model_step(const ModelSpec& s, const ModelParams& prm, const ComplexSpectrogram& spec,
                                const std::vector<int>& anchor_labels, ModelParams* grads = nullptr,
                                double grad_scale = 1.0) {
    ForwardResult r;
    const auto fe = frontend_forward(spec, prm.frontend);
    const auto& z = fe.z;

    AttentionCache acache;
    RowMatrix pooled;
    if (uses_attention(s.pooling)) {
        if (!prm.attention) throw Error("attention pooling requested but the model has no attention subnet");
        r.attention = attention_forward(z, *prm.attention, s.attention_mode, grads ? &acache : nullptr);
        pooled = attention_pool(z, *r.attention);
    } else {
        const auto kind = s.pooling == PoolingMode::None ? BaselinePool::None
                          : s.pooling == PoolingMode::Max ? BaselinePool::Max
                                                          : BaselinePool::Average;
        pooled = baseline_pool(z, kind);
        if (kind == BaselinePool::Max) r.max_pattern = max_pool_pattern(z);
    }

    const RowMatrix stacked = stack_frames(pooled, s.stack);
    BackendCache bcache;
    r.logits = backend_forward(stacked, prm.backend, grads ? &bcache : nullptr);
    auto loss = delayed_cross_entropy(r.logits, anchor_labels, s.delay);
    r.loss = loss.loss;
    r.positions = loss.positions;
    r.correct = loss.correct;
    if (!grads) return r;

    auto bg = backend_backward(prm.backend, bcache, loss.d_logits);
    const RowMatrix d_pooled = unstack_adjoint(bg.d_stacked, static_cast<std::size_t>(pooled.rows()), s.stack);
    DirectionalFeatures dz;
    std::optional<AttentionGrads> ag;
    if (uses_attention(s.pooling)) {
        ag = attention_backward(z, *prm.attention, *r.attention, acache, d_pooled);
        dz = std::move(ag->d_z);
    } else {
        const auto kind = s.pooling == PoolingMode::None ? BaselinePool::None
                          : s.pooling == PoolingMode::Max ? BaselinePool::Max
                                                          : BaselinePool::Average;
        dz = baseline_pool_backward(z, kind, d_pooled);
    }
    auto fg = frontend_backward(spec, prm.frontend, fe, dz);

    auto add = [grad_scale](Tensor& dst, const Tensor& src) {
        for (std::size_t i = 0; i < dst.size(); ++i) dst.data[i] += grad_scale * src.data[i];
    };
    {
        auto dst = grads->frontend.tensors();
        auto src = fg.params.tensors();
        for (std::size_t i = 0; i < dst.size(); ++i) add(*dst[i], *src[i]);
    }
    if (ag) {
        auto dst = grads->attention->tensors();
        auto src = ag->params.tensors();
        for (std::size_t i = 0; i < dst.size(); ++i) add(*dst[i], *src[i]);
    }
    {
        auto dst = grads->backend.tensors();
        auto src = bg.params.tensors();
        for (std::size_t i = 0; i < dst.size(); ++i) add(*dst[i], *src[i]);
    }
    return r;
}

}  // namespace spatialbeam
