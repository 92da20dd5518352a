#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "mgd/common.hpp"
#include "mgd/net.hpp"
#include "mgd/rng.hpp"
#include "mgd/schedule.hpp"

namespace mgd {

// Isotropic Gaussian mixture used as synthetic ground truth q(x0).
struct GmmComponent {
    double weight = 1.0;
    Vec mean;
    double variance = 1.0;  // sigma^2, isotropic; 0 means a point mass
};

struct GmmSpec {
    std::vector<GmmComponent> components;

    int dim() const { return static_cast<int>(components.front().mean.size()); }

    void validate() const {
        check(!components.empty(), "gmm: need at least one component");
        double wsum = 0.0;
        std::size_t d = components.front().mean.size();
        for (const auto& c : components) {
            check(c.weight > 0.0, "gmm: weights must be positive");
            check(c.variance >= 0.0, "gmm: variance must be non-negative");
            check(c.mean.size() == d, "gmm: means must share dimension");
            wsum += c.weight;
        }
        check(std::abs(wsum - 1.0) < 1e-9, "gmm: weights must sum to 1");
    }
};

namespace detail {

inline double logsumexp(const Vec& v) {
    double mx = v[0];
    for (double x : v) mx = std::max(mx, x);
    double s = 0.0;
    for (double x : v) s += std::exp(x - mx);
    return mx + std::log(s);
}

}  // namespace detail

// Log-density of the diffused mixture at step t: component (mu, s^2 I)
// diffuses to N(sqrt(a_t) mu, (a_t s^2 + 1 - a_t) I).
inline double gmm_log_marginal(const Vec& xt, int t, const GmmSpec& gmm,
                               const NoiseSchedule& sched) {
    double a = sched.alpha(t);
    double sa = std::sqrt(a);
    std::size_t d = xt.size();
    Vec logp(gmm.components.size());
    for (std::size_t i = 0; i < gmm.components.size(); ++i) {
        const auto& c = gmm.components[i];
        double var = a * c.variance + 1.0 - a;
        double q = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            double diff = xt[j] - sa * c.mean[j];
            q += diff * diff;
        }
        logp[i] = std::log(c.weight) - 0.5 * d * std::log(6.283185307179586 * var) -
                  0.5 * q / var;
    }
    return detail::logsumexp(logp);
}

// Exact score of the diffused mixture, responsibilities in log-space.
inline Vec gmm_score(const Vec& xt, int t, const GmmSpec& gmm, const NoiseSchedule& sched) {
    check(all_finite(xt), "gmm_score: non-finite input");
    check(static_cast<int>(xt.size()) == gmm.dim(), "gmm_score: dimension mismatch");
    double a = sched.alpha(t);
    double sa = std::sqrt(a);
    std::size_t d = xt.size();
    std::size_t k = gmm.components.size();
    Vec logp(k);
    for (std::size_t i = 0; i < k; ++i) {
        const auto& c = gmm.components[i];
        double var = a * c.variance + 1.0 - a;
        double q = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            double diff = xt[j] - sa * c.mean[j];
            q += diff * diff;
        }
        logp[i] = std::log(c.weight) - 0.5 * d * std::log(var) - 0.5 * q / var;
    }
    double lse = detail::logsumexp(logp);
    Vec out(d, 0.0);
    for (std::size_t i = 0; i < k; ++i) {
        const auto& c = gmm.components[i];
        double var = a * c.variance + 1.0 - a;
        double r = std::exp(logp[i] - lse);
        for (std::size_t j = 0; j < d; ++j) out[j] -= r * (xt[j] - sa * c.mean[j]) / var;
    }
    return out;
}

// Finite dataset {x0^(i)} with a uniform prior; duplicated points encode
// non-uniform priors.
struct DatasetOracle {
    const SampleBatch* dataset = nullptr;
    const NoiseSchedule* schedule = nullptr;
};

// Posterior responsibilities w_i(x_t) = softmax_i( -|x_t - sqrt(a) x0_i|^2
// / (2(1-a)) ), computed in log-space.
inline Vec posterior_weights(const Vec& xt, int t, const DatasetOracle& oracle) {
    check(oracle.dataset && !oracle.dataset->points.empty(),
          "empirical score: empty dataset");
    double a = oracle.schedule->alpha(t);
    double sa = std::sqrt(a), omA = 1.0 - a;
    const auto& pts = oracle.dataset->points;
    Vec logw(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        double q = 0.0;
        for (std::size_t j = 0; j < xt.size(); ++j) {
            double diff = xt[j] - sa * pts[i][j];
            q += diff * diff;
        }
        logw[i] = -0.5 * q / omA;
    }
    double lse = detail::logsumexp(logw);
    Vec w(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) w[i] = std::exp(logw[i] - lse);
    return w;
}

// Exact optimum of the DSM objective for a finite dataset: the posterior
// mean of conditional scores, sum_i w_i (sqrt(a) x0_i - x_t) / (1 - a).
inline Vec empirical_optimal_score(const Vec& xt, int t, const DatasetOracle& oracle) {
    check(static_cast<int>(xt.size()) == oracle.dataset->dim,
          "empirical score: dimension mismatch");
    Vec w = posterior_weights(xt, t, oracle);
    double a = oracle.schedule->alpha(t);
    double sa = std::sqrt(a), omA = 1.0 - a;
    const auto& pts = oracle.dataset->points;
    Vec out(xt.size(), 0.0);
    for (std::size_t i = 0; i < pts.size(); ++i)
        for (std::size_t j = 0; j < xt.size(); ++j)
            out[j] += w[i] * (sa * pts[i][j] - xt[j]) / omA;
    return out;
}

// Log-density of the empirical diffused marginal (Gaussian kernel mixture
// over scaled data points); finite-difference oracle target in tests.
inline double empirical_log_marginal(const Vec& xt, int t, const DatasetOracle& oracle) {
    double a = oracle.schedule->alpha(t);
    double sa = std::sqrt(a), omA = 1.0 - a;
    const auto& pts = oracle.dataset->points;
    Vec logp(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        double q = 0.0;
        for (std::size_t j = 0; j < xt.size(); ++j) {
            double diff = xt[j] - sa * pts[i][j];
            q += diff * diff;
        }
        logp[i] = -0.5 * q / omA;
    }
    return detail::logsumexp(logp) - std::log(static_cast<double>(pts.size())) -
           0.5 * xt.size() * std::log(6.283185307179586 * omA);
}

// Noise-prediction net to score: s = -eps(x_t, t) / sqrt(1 - alpha_t). The
// net consumes x_t concatenated with time features.
inline Vec network_score(const Vec& xt, int t, const DenseNet& net,
                         const NoiseSchedule& sched, int tf_width = kTimeFeatureWidth) {
    check(static_cast<int>(xt.size()) + tf_width == net.input_dim(),
          "network_score: input width mismatch");
    Vec eps = forward(net, with_time_features(xt, t, sched.total_steps, tf_width));
    double c = -1.0 / std::sqrt(1.0 - sched.alpha(t));
    for (double& v : eps) v *= c;
    return eps;
}

struct GmmScoreProvider : ScoreProvider {
    GmmSpec gmm;
    const NoiseSchedule* schedule;
    GmmScoreProvider(GmmSpec g, const NoiseSchedule& s) : gmm(std::move(g)), schedule(&s) {}
    int dim() const override { return gmm.dim(); }
    Vec score(const Vec& xt, int t) const override { return gmm_score(xt, t, gmm, *schedule); }
};

struct EmpiricalScoreProvider : ScoreProvider {
    SampleBatch dataset;
    const NoiseSchedule* schedule;
    EmpiricalScoreProvider(SampleBatch d, const NoiseSchedule& s)
        : dataset(std::move(d)), schedule(&s) {}
    int dim() const override { return dataset.dim; }
    Vec score(const Vec& xt, int t) const override {
        DatasetOracle oracle{&dataset, schedule};
        return empirical_optimal_score(xt, t, oracle);
    }
};

struct NetworkScoreProvider : ScoreProvider {
    DenseNet net;
    const NoiseSchedule* schedule;
    int data_dim;
    int tf_width;
    NetworkScoreProvider(DenseNet n, const NoiseSchedule& s, int tfw = kTimeFeatureWidth)
        : net(std::move(n)), schedule(&s), tf_width(tfw) {
        data_dim = net.input_dim() - tf_width;
    }
    int dim() const override { return data_dim; }
    Vec score(const Vec& xt, int t) const override {
        return network_score(xt, t, net, *schedule, tf_width);
    }
};

// One DSM step in the eps-parameterization: per example draw t uniform in
// {1..T} and z ~ N(0,I), form x_t, accumulate mean |eps(x_t,t) - z|^2.
// Uniform weighting here is the w_t = 1 - alpha_t weighting of the score
// regression, restated for the noise predictor.
inline std::pair<double, NetGrads> dsm_loss_and_grads(const DenseNet& net,
                                                      const SampleBatch& batch,
                                                      const NoiseSchedule& sched,
                                                      std::uint64_t seed,
                                                      int tf_width = kTimeFeatureWidth) {
    check(!batch.points.empty(), "dsm: empty batch");
    Rng rng(seed);
    NetGrads grads = zero_grads(net);
    double loss = 0.0;
    double inv_n = 1.0 / static_cast<double>(batch.points.size());
    for (const Vec& x0 : batch.points) {
        int t = rng.uniform_int(1, sched.total_steps);
        Vec z(x0.size());
        for (double& v : z) v = rng.normal();
        Vec xt = perturb(x0, t, z, sched);
        Vec in = with_time_features(xt, t, sched.total_steps, tf_width);
        auto tr = detail::forward_trace(net, in);
        const Vec& eps = tr.activations.back();
        Vec upstream(eps.size());
        for (std::size_t j = 0; j < eps.size(); ++j) {
            double r = eps[j] - z[j];
            loss += r * r * inv_n;
            upstream[j] = 2.0 * r * inv_n;
        }
        detail::backward(net, tr, upstream, &grads, false);
    }
    return {loss, std::move(grads)};
}

}  // namespace mgd
