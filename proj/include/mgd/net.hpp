#pragma once

#include <cmath>
#include <cstdint>
#include <variant>
#include <vector>

#include "mgd/common.hpp"
#include "mgd/rng.hpp"

namespace mgd {

// Dense feed-forward net with SiLU hidden activations and an affine final
// layer. SiLU is smooth everywhere, so input gradients used for guidance
// are continuous.
struct DenseNet {
    std::vector<int> widths;                   // [in, hidden..., out]
    std::vector<std::vector<double>> weights;  // layer l: widths[l+1] x widths[l], row-major
    std::vector<std::vector<double>> biases;   // layer l: widths[l+1]

    int input_dim() const { return widths.front(); }
    int output_dim() const { return widths.back(); }
    std::size_t layer_count() const { return weights.size(); }
};

inline double silu(double x) { return x / (1.0 + std::exp(-x)); }

inline double silu_deriv(double x) {
    double sig = 1.0 / (1.0 + std::exp(-x));
    return sig * (1.0 + x * (1.0 - sig));
}

inline DenseNet make_net(const std::vector<int>& widths, Rng& rng) {
    check(widths.size() >= 2, "make_net: need at least input and output widths");
    DenseNet net;
    net.widths = widths;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        int fan_in = widths[l], fan_out = widths[l + 1];
        check(fan_in > 0 && fan_out > 0, "make_net: widths must be positive");
        double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
        std::vector<double> W(static_cast<std::size_t>(fan_out) * fan_in);
        for (double& w : W) w = scale * rng.normal();
        net.weights.push_back(std::move(W));
        net.biases.emplace_back(fan_out, 0.0);
    }
    return net;
}

// Mirrors the parameter shapes of a DenseNet.
struct NetGrads {
    std::vector<std::vector<double>> weights;
    std::vector<std::vector<double>> biases;
};

inline NetGrads zero_grads(const DenseNet& net) {
    NetGrads g;
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        g.weights.emplace_back(net.weights[l].size(), 0.0);
        g.biases.emplace_back(net.biases[l].size(), 0.0);
    }
    return g;
}

namespace detail {

// Forward pass keeping post-activation values a[l] and pre-activations z[l].
struct ForwardTrace {
    std::vector<Vec> activations;  // a[0] = input, a[L] = output
    std::vector<Vec> preacts;      // z[l] for layers 0..L-1
};

inline ForwardTrace forward_trace(const DenseNet& net, const Vec& input) {
    check(static_cast<int>(input.size()) == net.input_dim(), "forward: input width mismatch");
    ForwardTrace tr;
    tr.activations.push_back(input);
    std::size_t L = net.layer_count();
    for (std::size_t l = 0; l < L; ++l) {
        int rows = net.widths[l + 1], cols = net.widths[l];
        const Vec& a = tr.activations.back();
        Vec z(rows);
        const double* W = net.weights[l].data();
        for (int r = 0; r < rows; ++r) {
            double s = net.biases[l][r];
            const double* row = W + static_cast<std::size_t>(r) * cols;
            for (int c = 0; c < cols; ++c) s += row[c] * a[c];
            z[r] = s;
        }
        tr.preacts.push_back(z);
        if (l + 1 < L)
            for (double& v : z) v = silu(v);
        tr.activations.push_back(std::move(z));
    }
    return tr;
}

// Reverse pass for <upstream, f(input)>. Accumulates parameter gradients
// into `grads` when non-null; returns the input gradient when requested.
inline Vec backward(const DenseNet& net, const ForwardTrace& tr, const Vec& upstream,
                    NetGrads* grads, bool want_input_grad) {
    check(static_cast<int>(upstream.size()) == net.output_dim(),
          "backward: upstream width mismatch");
    std::size_t L = net.layer_count();
    Vec delta = upstream;
    for (std::size_t l = L; l-- > 0;) {
        int rows = net.widths[l + 1], cols = net.widths[l];
        const Vec& a = tr.activations[l];
        if (grads) {
            double* gW = (*grads).weights[l].data();
            for (int r = 0; r < rows; ++r) {
                double d = delta[r];
                (*grads).biases[l][r] += d;
                double* row = gW + static_cast<std::size_t>(r) * cols;
                for (int c = 0; c < cols; ++c) row[c] += d * a[c];
            }
        }
        if (l == 0 && !want_input_grad) return {};
        Vec prev(cols, 0.0);
        const double* W = net.weights[l].data();
        for (int r = 0; r < rows; ++r) {
            double d = delta[r];
            const double* row = W + static_cast<std::size_t>(r) * cols;
            for (int c = 0; c < cols; ++c) prev[c] += d * row[c];
        }
        if (l > 0) {
            const Vec& z = tr.preacts[l - 1];
            for (int c = 0; c < cols; ++c) prev[c] *= silu_deriv(z[c]);
        }
        delta = std::move(prev);
    }
    return delta;
}

}  // namespace detail

inline Vec forward(const DenseNet& net, const Vec& input) {
    return detail::forward_trace(net, input).activations.back();
}

// Exact reverse-mode gradients of <upstream, forward(net, input)> w.r.t.
// all parameters.
inline NetGrads param_gradients(const DenseNet& net, const Vec& input, const Vec& upstream) {
    NetGrads g = zero_grads(net);
    auto tr = detail::forward_trace(net, input);
    detail::backward(net, tr, upstream, &g, false);
    return g;
}

// Scalar heads whose input gradient the guidance path consumes.
struct LogSoftmaxHead {
    int class_index;  // log softmax(output)[class_index]
};
struct LogMixHead {
    Vec coefficients;  // log sum_i coefficients[i] * softmax(output)[i]
};
using ReductionSpec = std::variant<LogSoftmaxHead, LogMixHead>;

inline Vec softmax(const Vec& logits) {
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    Vec p(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] = std::exp(logits[i] - mx);
        sum += p[i];
    }
    for (double& v : p) v /= sum;
    return p;
}

// Gradient of the selected scalar head w.r.t. the input vector only.
inline Vec input_gradient(const DenseNet& net, const Vec& input, const ReductionSpec& head) {
    auto tr = detail::forward_trace(net, input);
    const Vec& out = tr.activations.back();
    Vec p = softmax(out);
    Vec upstream(out.size());
    if (const auto* h = std::get_if<LogSoftmaxHead>(&head)) {
        check(h->class_index >= 0 && h->class_index < static_cast<int>(out.size()),
              "input_gradient: invalid class index");
        for (std::size_t j = 0; j < out.size(); ++j)
            upstream[j] = (static_cast<int>(j) == h->class_index ? 1.0 : 0.0) - p[j];
    } else {
        const auto& mix = std::get<LogMixHead>(head);
        check(mix.coefficients.size() == out.size(),
              "input_gradient: coefficient width mismatch");
        double q = 0.0;
        for (std::size_t j = 0; j < out.size(); ++j) {
            check(mix.coefficients[j] > 0.0, "input_gradient: mix coefficients must be positive");
            q += mix.coefficients[j] * p[j];
        }
        for (std::size_t j = 0; j < out.size(); ++j)
            upstream[j] = p[j] * (mix.coefficients[j] - q) / q;
    }
    return detail::backward(net, tr, upstream, nullptr, true);
}

// Evaluates the scalar head itself (used by tests and closed-form checks).
inline double head_value(const DenseNet& net, const Vec& input, const ReductionSpec& head) {
    Vec out = forward(net, input);
    Vec p = softmax(out);
    if (const auto* h = std::get_if<LogSoftmaxHead>(&head)) return std::log(p[h->class_index]);
    const auto& mix = std::get<LogMixHead>(head);
    double q = 0.0;
    for (std::size_t j = 0; j < out.size(); ++j) q += mix.coefficients[j] * p[j];
    return std::log(q);
}

struct OptimizerState {
    std::vector<std::vector<double>> m_weights, v_weights;
    std::vector<std::vector<double>> m_biases, v_biases;
    long step = 0;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

inline OptimizerState make_optimizer(const DenseNet& net, double lr = 1e-3) {
    OptimizerState st;
    st.lr = lr;
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        st.m_weights.emplace_back(net.weights[l].size(), 0.0);
        st.v_weights.emplace_back(net.weights[l].size(), 0.0);
        st.m_biases.emplace_back(net.biases[l].size(), 0.0);
        st.v_biases.emplace_back(net.biases[l].size(), 0.0);
    }
    return st;
}

namespace detail {

inline void adam_update(std::vector<double>& param, std::vector<double>& m,
                        std::vector<double>& v, const std::vector<double>& g,
                        const OptimizerState& st, double corr1, double corr2) {
    for (std::size_t i = 0; i < param.size(); ++i) {
        m[i] = st.beta1 * m[i] + (1.0 - st.beta1) * g[i];
        v[i] = st.beta2 * v[i] + (1.0 - st.beta2) * g[i] * g[i];
        double mh = m[i] / corr1, vh = v[i] / corr2;
        param[i] -= st.lr * mh / (std::sqrt(vh) + st.eps);
    }
}

}  // namespace detail

inline void optimizer_step(DenseNet& net, OptimizerState& st, const NetGrads& grads) {
    check(grads.weights.size() == net.layer_count(), "optimizer_step: shape mismatch");
    ++st.step;
    double corr1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
    double corr2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        check(grads.weights[l].size() == net.weights[l].size() &&
                  grads.biases[l].size() == net.biases[l].size(),
              "optimizer_step: shape mismatch");
        detail::adam_update(net.weights[l], st.m_weights[l], st.v_weights[l],
                            grads.weights[l], st, corr1, corr2);
        detail::adam_update(net.biases[l], st.m_biases[l], st.v_biases[l],
                            grads.biases[l], st, corr1, corr2);
    }
}

// Noise-conditioning features: t/T followed by fixed-frequency sinusoids of
// t/T. Injective over {1..T} already through the first coordinate.
inline Vec time_features(int t, int T, int width) {
    check(t >= 1 && t <= T, "time_features: t out of range");
    check(width >= 1, "time_features: width must be positive");
    Vec f(width);
    double u = static_cast<double>(t) / T;
    f[0] = u;
    for (int k = 1; k < width; ++k) {
        double freq = std::pow(2.0, (k - 1) / 2);
        double arg = 6.283185307179586476925286766559 * freq * u;
        f[k] = (k % 2 == 1) ? std::sin(arg) : std::cos(arg);
    }
    return f;
}

constexpr int kTimeFeatureWidth = 8;

inline Vec with_time_features(const Vec& x, int t, int T, int width = kTimeFeatureWidth) {
    Vec in;
    in.reserve(x.size() + width);
    in.insert(in.end(), x.begin(), x.end());
    Vec tf = time_features(t, T, width);
    in.insert(in.end(), tf.begin(), tf.end());
    return in;
}

}  // namespace mgd
