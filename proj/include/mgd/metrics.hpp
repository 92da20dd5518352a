#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "mgd/common.hpp"
#include "mgd/schedule.hpp"

namespace mgd {

namespace detail {

// Indices of the k nearest neighbors of point i (self excluded), ties
// broken by point index for determinism.
inline std::vector<int> knn_indices(const std::vector<Vec>& pts, int i, int k) {
    std::vector<std::pair<double, int>> dists;
    dists.reserve(pts.size() - 1);
    for (int j = 0; j < static_cast<int>(pts.size()); ++j) {
        if (j == i) continue;
        dists.emplace_back(std::sqrt(sqdist(pts[i], pts[j])), j);
    }
    std::partial_sort(dists.begin(), dists.begin() + k, dists.end());
    std::vector<int> out(k);
    for (int m = 0; m < k; ++m) out[m] = dists[m].second;
    return out;
}

}  // namespace detail

// Mean Euclidean distance to the k nearest neighbors; higher means the
// point lies in a lower-density region.
inline Vec avg_knn(const SampleBatch& points, int k) {
    int n = static_cast<int>(points.points.size());
    check(k >= 1 && k < n, "avg_knn: need 1 <= k < n");
    Vec out(n);
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
        auto nbrs = detail::knn_indices(points.points, static_cast<int>(i), k);
        double s = 0.0;
        for (int j : nbrs) s += std::sqrt(sqdist(points.points[i], points.points[j]));
        out[i] = s / k;
    });
    return out;
}

// Local Outlier Factor after Breunig et al.: k-distance, reachability
// distance, local reachability density, then the mean density ratio.
// Duplicate-point degeneracy is handled by a 1e-12 floor on reachability
// sums, which forces LOF = 1 for fully duplicated batches.
inline Vec lof(const SampleBatch& points, int k) {
    int n = static_cast<int>(points.points.size());
    check(k >= 1 && k < n, "lof: need 1 <= k < n");
    const auto& pts = points.points;
    std::vector<std::vector<int>> nbrs(n);
    Vec kdist(n);
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
        nbrs[i] = detail::knn_indices(pts, static_cast<int>(i), k);
        kdist[i] = std::sqrt(sqdist(pts[i], pts[nbrs[i].back()]));
    });
    Vec lrd(n);
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
        double sum = 0.0;
        for (int j : nbrs[i])
            sum += std::max(kdist[j], std::sqrt(sqdist(pts[i], pts[j])));
        lrd[i] = k / std::max(sum, 1e-12);
    });
    Vec out(n);
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
        double s = 0.0;
        for (int j : nbrs[i]) s += lrd[j];
        out[i] = s / (k * lrd[i]);
    });
    return out;
}

// Manifold-ball precision/recall: a generated point counts for precision
// when it falls inside some real point's k-th-nearest-neighbor ball (self
// excluded); recall swaps the roles.
inline std::pair<double, double> improved_precision_recall(const SampleBatch& real,
                                                           const SampleBatch& generated,
                                                           int k) {
    int nr = static_cast<int>(real.points.size());
    int ng = static_cast<int>(generated.points.size());
    check(k >= 1 && k < nr && k < ng, "improved_precision_recall: need k < set sizes");

    auto radii = [&](const std::vector<Vec>& pts) {
        Vec r(pts.size());
        parallel_for(pts.size(), [&](std::size_t i) {
            auto nb = detail::knn_indices(pts, static_cast<int>(i), k);
            r[i] = std::sqrt(sqdist(pts[i], pts[nb.back()]));
        });
        return r;
    };
    auto covered_fraction = [&](const std::vector<Vec>& queries,
                                const std::vector<Vec>& manifold, const Vec& radii) {
        std::vector<char> hit(queries.size(), 0);
        parallel_for(queries.size(), [&](std::size_t i) {
            for (std::size_t j = 0; j < manifold.size(); ++j) {
                if (std::sqrt(sqdist(queries[i], manifold[j])) <= radii[j]) {
                    hit[i] = 1;
                    break;
                }
            }
        });
        double s = 0.0;
        for (char h : hit) s += h;
        return s / queries.size();
    };

    Vec real_radii = radii(real.points);
    Vec gen_radii = radii(generated.points);
    double precision = covered_fraction(generated.points, real.points, real_radii);
    double recall = covered_fraction(real.points, generated.points, gen_radii);
    return {precision, recall};
}

struct Histogram {
    Vec edges;      // bins + 1 ascending edges
    Vec densities;  // densities integrate to 1
};

inline Histogram histogram(const Vec& values, int bins) {
    check(bins >= 1, "histogram: bins must be >= 1");
    check(!values.empty(), "histogram: empty input");
    double lo = values[0], hi = values[0];
    for (double v : values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (hi == lo) {  // degenerate span: one unit-width bin cluster around lo
        lo -= 0.5;
        hi += 0.5;
    }
    double width = (hi - lo) / bins;
    Histogram h;
    h.edges.resize(bins + 1);
    for (int b = 0; b <= bins; ++b) h.edges[b] = lo + width * b;
    h.densities.assign(bins, 0.0);
    for (double v : values) {
        int b = static_cast<int>((v - lo) / width);
        if (b >= bins) b = bins - 1;
        if (b < 0) b = 0;
        h.densities[b] += 1.0;
    }
    double norm = 1.0 / (values.size() * width);
    for (double& d : h.densities) d *= norm;
    return h;
}

struct MetricReport {
    Vec avg_knn;
    Vec lof;
    double precision = 0.0;
    double recall = 0.0;
    Histogram lof_histogram;
};

inline MetricReport evaluate_batch(const SampleBatch& real, const SampleBatch& generated,
                                   int k_avgknn, int k_lof, int k_precision, int bins) {
    MetricReport r;
    r.avg_knn = avg_knn(generated, k_avgknn);
    r.lof = lof(generated, k_lof);
    auto pr = improved_precision_recall(real, generated, k_precision);
    r.precision = pr.first;
    r.recall = pr.second;
    r.lof_histogram = histogram(r.lof, bins);
    return r;
}

}  // namespace mgd
