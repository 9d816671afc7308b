#pragma once

#include <string>
#include <vector>

#include "core.hpp"

namespace spatialbeam {

struct AdamHyper {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// First/second moments mirror the parameter tensors one-to-one.
struct OptimizerState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    std::uint64_t step = 0;
    double lr = 0.001;

    static OptimizerState for_params(const std::vector<const Tensor*>& params, double lr) {
        OptimizerState s;
        s.lr = lr;
        for (const auto* p : params) {
            s.m.emplace_back("adam.m." + p->name, p->dims);
            s.v.emplace_back("adam.v." + p->name, p->dims);
        }
        return s;
    }
};

/// Bias-corrected Adam update. Throws, naming the tensor, on a non-finite gradient.
inline void adam_step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads, OptimizerState& st,
                      const AdamHyper& h = {}) {
    if (params.size() != grads.size() || params.size() != st.m.size())
        throw ShapeError("adam_step: parameter/gradient/state counts differ");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i]->same_shape(*grads[i]) || !params[i]->same_shape(st.m[i]))
            throw ShapeError("adam_step: shape mismatch for " + params[i]->name);
        for (double g : grads[i]->data)
            if (!std::isfinite(g)) throw Error("adam_step: non-finite gradient in tensor '" + params[i]->name + "'");
    }
    ++st.step;
    const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(st.step));
    const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(st.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i]->data;
        const auto& g = grads[i]->data;
        auto& m = st.m[i].data;
        auto& v = st.v[i].data;
        for (std::size_t k = 0; k < p.size(); ++k) {
            m[k] = h.beta1 * m[k] + (1.0 - h.beta1) * g[k];
            v[k] = h.beta2 * v[k] + (1.0 - h.beta2) * g[k] * g[k];
            const double mhat = m[k] / c1;
            const double vhat = v[k] / c2;
            p[k] -= st.lr * mhat / (std::sqrt(vhat) + h.eps);
        }
    }
}

inline double global_norm(const std::vector<const Tensor*>& grads) {
    double acc = 0.0;
    for (const auto* g : grads)
        for (double v : g->data) acc += v * v;
    return std::sqrt(acc);
}

/// Rescales gradients so their global L2 norm is at most `max_norm`; returns the pre-clip norm.
inline double clip_global_norm(const std::vector<Tensor*>& grads, double max_norm) {
    std::vector<const Tensor*> view(grads.begin(), grads.end());
    const double n = global_norm(view);
    if (n > max_norm && n > 0.0) {
        const double s = max_norm / n;
        for (auto* g : grads)
            for (double& v : g->data) v *= s;
    }
    return n;
}

/// Halves the learning rate after `patience` consecutive epochs whose
/// validation loss did not decrease relative to the previous epoch.
class PlateauSchedule {
public:
    PlateauSchedule(double lr, std::size_t patience, double previous_loss)
        : lr_(lr), patience_(patience == 0 ? 1 : patience), prev_(previous_loss) {}

    /// Returns true when the rate was halved.
    bool update(double val_loss) {
        const bool decreased = val_loss < prev_;
        prev_ = val_loss;
        if (decreased) {
            bad_ = 0;
            return false;
        }
        ++non_decreasing_;
        if (++bad_ >= patience_) {
            bad_ = 0;
            lr_ *= 0.5;
            return true;
        }
        return false;
    }

    double lr() const { return lr_; }
    double previous() const { return prev_; }
    std::size_t non_decreasing_epochs() const { return non_decreasing_; }

    void restore(double lr, double prev, std::size_t bad, std::size_t non_decreasing) {
        lr_ = lr;
        prev_ = prev;
        bad_ = bad;
        non_decreasing_ = non_decreasing;
    }
    std::size_t bad() const { return bad_; }

private:
    double lr_;
    std::size_t patience_;
    double prev_;
    std::size_t bad_ = 0;
    std::size_t non_decreasing_ = 0;
};

}  // namespace spatialbeam
