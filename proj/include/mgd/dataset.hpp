#pragma once

#include <cstdint>
#include <vector>

#include "mgd/common.hpp"
#include "mgd/rng.hpp"
#include "mgd/schedule.hpp"
#include "mgd/score.hpp"

namespace mgd {

// Mode labels are for evaluation only; training paths never see them.
struct LabeledDataset {
    SampleBatch data;
    std::vector<int> mode_labels;
};

inline LabeledDataset synth_dataset(const GmmSpec& spec, int n, std::uint64_t seed) {
    spec.validate();
    check(n >= 1, "synth_dataset: N must be >= 1");
    int d = spec.dim();
    LabeledDataset out;
    out.data.dim = d;
    out.data.points.resize(n);
    out.mode_labels.resize(n);
    Rng rng(seed);
    for (int i = 0; i < n; ++i) {
        double u = rng.uniform();
        std::size_t c = 0;
        double cum = 0.0;
        for (; c + 1 < spec.components.size(); ++c) {
            cum += spec.components[c].weight;
            if (u < cum) break;
        }
        const auto& comp = spec.components[c];
        double sigma = std::sqrt(comp.variance);
        Vec x(d);
        for (int j = 0; j < d; ++j) x[j] = comp.mean[j] + sigma * rng.normal();
        out.data.points[i] = std::move(x);
        out.mode_labels[i] = static_cast<int>(c);
    }
    return out;
}

}  // namespace mgd
