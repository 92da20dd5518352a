#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <utility>
#include <vector>

#include "mgd/common.hpp"
#include "mgd/rng.hpp"
#include "mgd/schedule.hpp"
#include "mgd/score.hpp"

namespace mgd {

// One-shot posterior-mean reconstruction:
// x0_hat = (x_t + (1 - alpha_t) score(x_t, t)) / sqrt(alpha_t)
inline Vec tweedie_denoise(const Vec& xt, int t, const ScoreProvider& provider,
                           const NoiseSchedule& sched) {
    double a = sched.alpha(t);
    check(a > 0.0, "tweedie_denoise: alpha_t must be positive");
    Vec s = provider.score(xt, t);
    double inv = 1.0 / std::sqrt(a), omA = 1.0 - a;
    Vec out(xt.size());
    for (std::size_t i = 0; i < xt.size(); ++i) out[i] = (xt[i] + omA * s[i]) * inv;
    return out;
}

enum class DistanceKind { L1, L2, Feature };

namespace detail {

// Fixed random linear embedding used by the feature-space distance. The
// seed is a constant so the embedding is identical across calls and runs.
inline std::vector<Vec> feature_projection(int d) {
    Rng rng(0x7ea7f00d5eedull);
    std::vector<Vec> proj(d, Vec(d));
    double scale = 1.0 / std::sqrt(static_cast<double>(d));
    for (auto& row : proj)
        for (double& v : row) v = scale * rng.normal();
    return proj;
}

}  // namespace detail

inline double distance(const Vec& a, const Vec& b, DistanceKind kind) {
    check(a.size() == b.size(), "distance: dimension mismatch");
    switch (kind) {
        case DistanceKind::L1: {
            double s = 0.0;
            for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
            return s;
        }
        case DistanceKind::L2:
            return std::sqrt(sqdist(a, b));
        case DistanceKind::Feature: {
            auto proj = detail::feature_projection(static_cast<int>(a.size()));
            Vec diff(a.size());
            for (std::size_t i = 0; i < a.size(); ++i) diff[i] = a[i] - b[i];
            double s = 0.0;
            for (const auto& row : proj) {
                double v = dot(row, diff);
                s += v * v;
            }
            return std::sqrt(s);
        }
    }
    return 0.0;
}

// Minority score of x0: mean over M noise draws of the distance between x0
// and its Tweedie reconstruction after perturbation to step t.
inline double minority_score(const Vec& x0, const ScoreProvider& provider,
                             const NoiseSchedule& sched, int t, int draws,
                             DistanceKind dist, std::uint64_t seed) {
    check(draws >= 1, "minority_score: draws must be >= 1");
    check(t >= 1 && t <= sched.total_steps, "minority_score: invalid t");
    Rng rng(seed);
    double acc = 0.0;
    for (int m = 0; m < draws; ++m) {
        Vec z(x0.size());
        for (double& v : z) v = rng.normal();
        Vec xt = perturb(x0, t, z, sched);
        Vec rec = tweedie_denoise(xt, t, provider, sched);
        acc += distance(x0, rec, dist);
    }
    return acc / draws;
}

// Per-sample stream is derive_seed(seed, i), so batch scoring parallelizes
// without changing results.
inline Vec minority_scores(const SampleBatch& data, const ScoreProvider& provider,
                           const NoiseSchedule& sched, int t, int draws,
                           DistanceKind dist, std::uint64_t seed) {
    Vec out(data.points.size());
    parallel_for(data.points.size(), [&](std::size_t i) {
        out[i] = minority_score(data.points[i], provider, sched, t, draws, dist,
                                derive_seed(seed, i));
    });
    return out;
}

struct MinorityRecord {
    int sample_index = 0;
    double raw_score = 0.0;
    int ordinal_class = 0;
};

struct OrdinalBinning {
    int class_count = 0;
    Vec edges;            // L-1 ascending thresholds between classes
    Vec representatives;  // tau_i: per-class mean raw score, ascending
};

// Quantile split into L classes of near-equal size. Class 0 holds the
// lowest scores; ties and boundaries go to the lower class via stable sort
// on (score, original index).
inline std::pair<OrdinalBinning, std::vector<int>> quantile_bins(const Vec& scores, int L) {
    check(L >= 1, "quantile_bins: L must be >= 1");
    check(!scores.empty(), "quantile_bins: empty scores");
    check(static_cast<std::size_t>(L) <= scores.size(),
          "quantile_bins: more classes than scores");
    std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] < scores[b];
        return a < b;
    });

    OrdinalBinning bins;
    bins.class_count = L;
    std::vector<int> labels(n, 0);
    std::size_t base = n / L, extra = n % L;
    std::size_t pos = 0;
    for (int c = 0; c < L; ++c) {
        std::size_t size = base + (static_cast<std::size_t>(c) < extra ? 1 : 0);
        double mean = 0.0;
        for (std::size_t k = 0; k < size; ++k) {
            labels[order[pos + k]] = c;
            mean += scores[order[pos + k]];
        }
        bins.representatives.push_back(mean / size);
        pos += size;
        if (c + 1 < L) bins.edges.push_back(scores[order[pos - 1]]);
    }
    return {bins, labels};
}

inline std::vector<MinorityRecord> make_records(const Vec& scores,
                                                const std::vector<int>& labels) {
    std::vector<MinorityRecord> recs(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i)
        recs[i] = {static_cast<int>(i), scores[i], labels[i]};
    return recs;
}

}  // namespace mgd
