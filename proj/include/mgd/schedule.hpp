#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "mgd/common.hpp"
#include "mgd/rng.hpp"

namespace mgd {

// Steps are 1-based: t in {1..T}, t=0 denotes clean data. betas[t-1] and
// alphas[t-1] store the step-t values; alphas is the running product of
// (1 - beta).
struct NoiseSchedule {
    int total_steps = 0;
    std::vector<double> betas;
    std::vector<double> alphas;

    double beta(int t) const {
        check(t >= 1 && t <= total_steps, "schedule: step index out of range");
        return betas[static_cast<std::size_t>(t) - 1];
    }
    double alpha(int t) const {
        check(t >= 1 && t <= total_steps, "schedule: step index out of range");
        return alphas[static_cast<std::size_t>(t) - 1];
    }
};

struct SampleBatch {
    int dim = 0;
    std::vector<Vec> points;
};

// Strictly increasing subsequence of {1..T}; last element is always T.
struct StepPlan {
    std::vector<int> indices;
};

inline NoiseSchedule build_schedule(int T, double beta_start, double beta_end) {
    check(T >= 1, "build_schedule: T must be positive");
    check(beta_start > 0.0 && beta_end < 1.0 && beta_start <= beta_end,
          "build_schedule: need 0 < beta_start <= beta_end < 1");
    NoiseSchedule s;
    s.total_steps = T;
    s.betas.resize(T);
    s.alphas.resize(T);
    double prod = 1.0;
    for (int t = 0; t < T; ++t) {
        double b = (T == 1) ? beta_start
                            : beta_start + (beta_end - beta_start) * t / (T - 1);
        s.betas[t] = b;
        prod *= 1.0 - b;
        s.alphas[t] = prod;
    }
    return s;
}

// x_t = sqrt(alpha_t) x0 + sqrt(1 - alpha_t) z
inline Vec perturb(const Vec& x0, int t, const Vec& noise, const NoiseSchedule& s) {
    check(noise.size() == x0.size(), "perturb: dimension mismatch");
    double a = s.alpha(t);
    double ca = std::sqrt(a), cn = std::sqrt(1.0 - a);
    Vec out(x0.size());
    for (std::size_t i = 0; i < x0.size(); ++i) out[i] = ca * x0[i] + cn * noise[i];
    return out;
}

// One reverse step: mean (x_t + beta_t score)/sqrt(1-beta_t), variance
// beta_t, i.e. noise enters with coefficient sqrt(beta_t). Caller supplies
// the noise so the step itself is deterministic.
inline Vec ancestral_step(const Vec& xt, int t, const Vec& score,
                          const NoiseSchedule& s, const Vec& noise) {
    check(score.size() == xt.size() && noise.size() == xt.size(),
          "ancestral_step: dimension mismatch");
    double b = s.beta(t);
    double inv = 1.0 / std::sqrt(1.0 - b);
    double sb = std::sqrt(b);
    Vec out(xt.size());
    for (std::size_t i = 0; i < xt.size(); ++i)
        out[i] = (xt[i] + b * score[i]) * inv + sb * noise[i];
    return out;
}

inline StepPlan make_plan(int T, int n) {
    check(n >= 1 && n <= T, "make_plan: need 1 <= n <= T");
    StepPlan plan;
    plan.indices.reserve(n);
    int prev = 0;
    for (int i = 1; i <= n; ++i) {
        int idx = static_cast<int>(std::llround(static_cast<double>(i) * T / n));
        if (idx <= prev) idx = prev + 1;
        plan.indices.push_back(idx);
        prev = idx;
    }
    plan.indices.back() = T;
    return plan;
}

// score(x_t, t) -> vector of the same dimension
struct ScoreProvider {
    virtual ~ScoreProvider() = default;
    virtual int dim() const = 0;
    virtual Vec score(const Vec& xt, int t) const = 0;
};

// Ancestral sampling down the plan from x_T ~ N(0, I); the final step adds
// no noise. Sample i consumes the stream derive_seed(seed, i).
inline SampleBatch generate(const ScoreProvider& provider, const NoiseSchedule& s,
                            const StepPlan& plan, int count, std::uint64_t seed) {
    check(count >= 1, "generate: count must be >= 1");
    check(!plan.indices.empty() && plan.indices.back() == s.total_steps,
          "generate: plan must end at T");
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
            Vec sc = provider.score(x, t);
            if (j == 0) {
                x = ancestral_step(x, t, sc, s, zero);
            } else {
                Vec z(d);
                for (double& v : z) v = rng.normal();
                x = ancestral_step(x, t, sc, s, z);
            }
        }
        batch.points[i] = std::move(x);
    });
    return batch;
}

}  // namespace mgd
