#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "mgd/common.hpp"
#include "mgd/minority.hpp"
#include "mgd/net.hpp"
#include "mgd/rng.hpp"
#include "mgd/schedule.hpp"
#include "mgd/score.hpp"

namespace mgd {

// Noise-conditioned ordinal classifier p(l | x_t): the net maps
// x_t ++ time features to L logits. Shares the time-feature convention of
// the noise predictor.
struct ClassifierModel {
    DenseNet net;
    int class_count = 0;
    int total_steps = 0;
    int tf_width = kTimeFeatureWidth;

    int data_dim() const { return net.input_dim() - tf_width; }

    Vec logits(const Vec& xt, int t) const {
        return forward(net, with_time_features(xt, t, total_steps, tf_width));
    }
    Vec probabilities(const Vec& xt, int t) const { return softmax(logits(xt, t)); }
};

enum class GuidanceMode { ClassConditional, MixedDensity };

struct GuidanceConfig {
    int target_class = 0;
    double scale = 2.0;
    GuidanceMode mode = GuidanceMode::ClassConditional;
};

struct ClassifierTrainOpts {
    std::vector<int> hidden = {128, 128, 128};
    int batch_size = 128;
    double lr = 1e-3;
    int tf_width = kTimeFeatureWidth;
};

// Cross-entropy training on perturbed inputs: each example draws a fresh t
// uniform in {1..T} and noise, so the classifier sees every noise level.
inline ClassifierModel train_classifier(const std::vector<MinorityRecord>& records,
                                        const SampleBatch& data, const NoiseSchedule& sched,
                                        int epochs, std::uint64_t seed,
                                        const ClassifierTrainOpts& opts = {}) {
    check(records.size() == data.points.size(), "train_classifier: misaligned inputs");
    check(!records.empty(), "train_classifier: empty inputs");
    int L = 0;
    for (const auto& r : records) L = std::max(L, r.ordinal_class + 1);
    std::vector<int> class_counts(L, 0);
    for (const auto& r : records) ++class_counts[r.ordinal_class];
    for (int c = 0; c < L; ++c)
        check(class_counts[c] > 0, "train_classifier: empty class");

    Rng rng(seed);
    std::vector<int> widths;
    widths.push_back(data.dim + opts.tf_width);
    widths.insert(widths.end(), opts.hidden.begin(), opts.hidden.end());
    widths.push_back(L);
    ClassifierModel model;
    model.net = make_net(widths, rng);
    model.class_count = L;
    model.total_steps = sched.total_steps;
    model.tf_width = opts.tf_width;

    OptimizerState opt = make_optimizer(model.net, opts.lr);
    std::size_t n = data.points.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < epochs; ++epoch) {
        // Fisher-Yates with the run's stream keeps epochs reproducible.
        for (std::size_t i = n; i-- > 1;) {
            std::size_t j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i)));
            std::swap(order[i], order[j]);
        }
        for (std::size_t start = 0; start < n; start += opts.batch_size) {
            std::size_t end = std::min(n, start + opts.batch_size);
            NetGrads grads = zero_grads(model.net);
            double inv = 1.0 / static_cast<double>(end - start);
            for (std::size_t k = start; k < end; ++k) {
                std::size_t i = order[k];
                int t = rng.uniform_int(1, sched.total_steps);
                Vec z(data.points[i].size());
                for (double& v : z) v = rng.normal();
                Vec xt = perturb(data.points[i], t, z, sched);
                Vec in = with_time_features(xt, t, sched.total_steps, opts.tf_width);
                auto tr = detail::forward_trace(model.net, in);
                Vec p = softmax(tr.activations.back());
                Vec upstream(p.size());
                int label = records[i].ordinal_class;
                for (std::size_t j = 0; j < p.size(); ++j)
                    upstream[j] = (p[j] - (static_cast<int>(j) == label ? 1.0 : 0.0)) * inv;
                detail::backward(model.net, tr, upstream, &grads, false);
            }
            optimizer_step(model.net, opt, grads);
        }
    }
    return model;
}

// Class-conditional mixed score:
// s_hat = s(x_t, t) + w * d/dx_t log p(target | x_t)
inline Vec guided_score(const ScoreProvider& provider, const ClassifierModel& clf,
                        const Vec& xt, int t, const GuidanceConfig& cfg) {
    check(cfg.mode == GuidanceMode::ClassConditional, "guided_score: wrong mode");
    check(cfg.target_class >= 0 && cfg.target_class < clf.class_count,
          "guided_score: target class out of range");
    Vec s = provider.score(xt, t);
    Vec in = with_time_features(xt, t, clf.total_steps, clf.tf_width);
    Vec g = input_gradient(clf.net, in, LogSoftmaxHead{cfg.target_class});
    for (std::size_t i = 0; i < s.size(); ++i) s[i] += cfg.scale * g[i];
    return s;
}

// Mixed-density score: the approximate minority level
// l_hat(x_t) = sum_i tau_i p(i | x_t) reweights the data density, giving
// s_hat = s(x_t, t) + w * d/dx_t log l_hat(x_t).
inline Vec mixed_density_score(const ScoreProvider& provider, const ClassifierModel& clf,
                               const OrdinalBinning& binning, const Vec& xt, int t,
                               double w) {
    check(binning.class_count == clf.class_count,
          "mixed_density_score: class count mismatch");
    for (double tau : binning.representatives)
        check(tau > 0.0, "mixed_density_score: representatives must be positive");
    Vec s = provider.score(xt, t);
    Vec in = with_time_features(xt, t, clf.total_steps, clf.tf_width);
    Vec g = input_gradient(clf.net, in, LogMixHead{binning.representatives});
    for (std::size_t i = 0; i < s.size(); ++i) s[i] += w * g[i];
    return s;
}

// Ancestral sampling with the guided score substituted for the provider
// score. The classifier is fed the original step index of each plan
// element. `binning` is only consulted in mixed-density mode.
inline SampleBatch guided_generate(const ScoreProvider& provider, const ClassifierModel& clf,
                                   const OrdinalBinning& binning, const NoiseSchedule& sched,
                                   const StepPlan& plan, const GuidanceConfig& cfg, int count,
                                   std::uint64_t seed) {
    check(count >= 1, "guided_generate: count must be >= 1");
    int d = provider.dim();
    SampleBatch batch;
    batch.dim = d;
    batch.points.resize(count);
    parallel_for(static_cast<std::size_t>(count), [&](std::size_t i) {
        Rng rng(derive_seed(seed, i));
        Vec x(d);
        for (double& v : x) v = rng.normal();
        Vec zero(d, 0.0);
        for (std::size_t j = plan.indices.size(); j-- > 0;) {
            int t = plan.indices[j];
            Vec sc = cfg.mode == GuidanceMode::ClassConditional
                         ? guided_score(provider, clf, x, t, cfg)
                         : mixed_density_score(provider, clf, binning, x, t, cfg.scale);
            if (j == 0) {
                x = ancestral_step(x, t, sc, sched, zero);
            } else {
                Vec z(d);
                for (double& v : z) v = rng.normal();
                x = ancestral_step(x, t, sc, sched, z);
            }
        }
        batch.points[i] = std::move(x);
    });
    return batch;
}

}  // namespace mgd
