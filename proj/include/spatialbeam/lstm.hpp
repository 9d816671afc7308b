#pragma once

// Stacked unidirectional LSTM with full backpropagation through time.
// Gate order in the stacked weight rows is (input, forget, cell, output).

#include <string>
#include <vector>

#include "core.hpp"

namespace spatialbeam {

struct LstmLayer {
    Tensor wx;  // [4H x In]
    Tensor wh;  // [4H x H]
    Tensor b;   // [4H]

    LstmLayer() = default;
    LstmLayer(const std::string& prefix, std::size_t in, std::size_t hidden)
        : wx(prefix + ".wx", {4 * hidden, in}), wh(prefix + ".wh", {4 * hidden, hidden}), b(prefix + ".b", {4 * hidden}) {}

    std::size_t hidden() const { return wh.dims[1]; }
    std::size_t input() const { return wx.dims[1]; }
};

struct LstmStack {
    std::vector<LstmLayer> layers;

    LstmStack() = default;
    LstmStack(const std::string& prefix, std::size_t in, std::size_t hidden, std::size_t depth) {
        for (std::size_t i = 0; i < depth; ++i)
            layers.emplace_back(prefix + ".lstm" + std::to_string(i), i == 0 ? in : hidden, hidden);
    }

    std::size_t output_size() const { return layers.empty() ? 0 : layers.back().hidden(); }
    std::size_t input_size() const { return layers.empty() ? 0 : layers.front().input(); }

    void append_tensors(std::vector<Tensor*>& out) {
        for (auto& l : layers) out.insert(out.end(), {&l.wx, &l.wh, &l.b});
    }
    void append_tensors(std::vector<const Tensor*>& out) const {
        for (const auto& l : layers) out.insert(out.end(), {&l.wx, &l.wh, &l.b});
    }

    /// Uniform(+-1/sqrt(H)) weights, zero biases except forget gate = 1.
    void init(Rng& rng) {
        for (auto& l : layers) {
            const double a = 1.0 / std::sqrt(static_cast<double>(l.hidden()));
            for (auto& v : l.wx.data) v = rng.uniform(-a, a);
            for (auto& v : l.wh.data) v = rng.uniform(-a, a);
            l.b.zero();
            for (std::size_t j = 0; j < l.hidden(); ++j) l.b.data[l.hidden() + j] = 1.0;
        }
    }
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct LstmLayerCache {
    RowMatrix input;  // [T x In]
    RowMatrix gates;  // post-activation [T x 4H]
    RowMatrix cell;   // [T x H]
    RowMatrix out;    // [T x H]
};

struct LstmCache {
    std::vector<LstmLayerCache> layers;
    bool valid = false;
};

/// Runs the stack over rows of `x` ([T x In]); returns the top layer's hidden states.
inline RowMatrix lstm_forward(const LstmStack& net, const RowMatrix& x, LstmCache* cache = nullptr) {
    if (net.layers.empty()) return x;
    if (static_cast<std::size_t>(x.cols()) != net.input_size())
        throw ShapeError("lstm_forward: input width " + std::to_string(x.cols()) + " != " +
                         std::to_string(net.input_size()));
    const Eigen::Index T = x.rows();
    if (cache) cache->layers.clear();
    RowMatrix cur = x;
    for (const auto& layer : net.layers) {
        const auto H = static_cast<Eigen::Index>(layer.hidden());
        RowMatrix pre = cur * layer.wx.mat().transpose();
        pre.rowwise() += layer.b.vec().transpose();
        const auto wh = layer.wh.mat();
        RowMatrix cell(T, H), out(T, H);
        Eigen::VectorXd h = Eigen::VectorXd::Zero(H), c = Eigen::VectorXd::Zero(H);
        for (Eigen::Index t = 0; t < T; ++t) {
            Eigen::VectorXd g = pre.row(t).transpose();
            if (t > 0) g.noalias() += wh * h;
            for (Eigen::Index j = 0; j < H; ++j) {
                g(j) = sigmoid(g(j));
                g(H + j) = sigmoid(g(H + j));
                g(2 * H + j) = std::tanh(g(2 * H + j));
                g(3 * H + j) = sigmoid(g(3 * H + j));
                c(j) = g(H + j) * c(j) + g(j) * g(2 * H + j);
                h(j) = g(3 * H + j) * std::tanh(c(j));
            }
            pre.row(t) = g.transpose();
            cell.row(t) = c.transpose();
            out.row(t) = h.transpose();
        }
        if (cache) cache->layers.push_back({cur, pre, cell, out});
        cur = std::move(out);
    }
    if (cache) cache->valid = true;
    return cur;
}

struct LstmGrads {
    LstmStack params;
    RowMatrix d_input;
};

/// BPTT. `d_out` is dL/dh for every top-layer time step.
inline LstmGrads lstm_backward(const LstmStack& net, const LstmCache& cache, const RowMatrix& d_out) {
    LstmGrads g;
    g.params = net;
    for (auto& l : g.params.layers) {
        l.wx.zero();
        l.wh.zero();
        l.b.zero();
    }
    if (net.layers.empty()) {
        g.d_input = d_out;
        return g;
    }
    if (!cache.valid || cache.layers.size() != net.layers.size()) throw Error("lstm_backward called without forward state");
    RowMatrix dh_seq = d_out;
    for (std::size_t li = net.layers.size(); li-- > 0;) {
        const auto& layer = net.layers[li];
        const auto& lc = cache.layers[li];
        const Eigen::Index T = lc.out.rows();
        const auto H = static_cast<Eigen::Index>(layer.hidden());
        if (dh_seq.rows() != T || dh_seq.cols() != H) throw ShapeError("lstm_backward: gradient shape mismatch");
        const auto wh = layer.wh.mat();
        RowMatrix dpre(T, 4 * H);
        Eigen::VectorXd dh_next = Eigen::VectorXd::Zero(H), dc_next = Eigen::VectorXd::Zero(H);
        for (Eigen::Index t = T - 1; t >= 0; --t) {
            for (Eigen::Index j = 0; j < H; ++j) {
                const double i = lc.gates(t, j), f = lc.gates(t, H + j), gg = lc.gates(t, 2 * H + j),
                             o = lc.gates(t, 3 * H + j);
                const double c = lc.cell(t, j);
                const double c_prev = t > 0 ? lc.cell(t - 1, j) : 0.0;
                const double tc = std::tanh(c);
                const double dh = dh_seq(t, j) + dh_next(j);
                const double dc = dh * o * (1.0 - tc * tc) + dc_next(j);
                dpre(t, j) = dc * gg * i * (1.0 - i);
                dpre(t, H + j) = dc * c_prev * f * (1.0 - f);
                dpre(t, 2 * H + j) = dc * i * (1.0 - gg * gg);
                dpre(t, 3 * H + j) = dh * tc * o * (1.0 - o);
                dc_next(j) = dc * f;
            }
            dh_next.noalias() = wh.transpose() * dpre.row(t).transpose();
        }
        auto& gl = g.params.layers[li];
        gl.wx.mat().noalias() = dpre.transpose() * lc.input;
        if (T > 1) gl.wh.mat().noalias() = dpre.bottomRows(T - 1).transpose() * lc.out.topRows(T - 1);
        gl.b.vec() = dpre.colwise().sum().transpose();
        dh_seq = dpre * layer.wx.mat();
    }
    g.d_input = std::move(dh_seq);
    return g;
}

}  // namespace spatialbeam
