#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "clear/cf_search.hpp"
#include "clear/dataset.hpp"
#include "clear/error.hpp"
#include "clear/synthgen.hpp"

namespace clear {

struct NeighbourhoodDataset {
    std::vector<Observation> points;
    std::vector<double> responses;  // target-class probability from m
    std::vector<double> weights;
    std::vector<int> band_of;       // 0, 1, 2; -1 when the response is outside every band
    std::vector<bool> counterfactual;
    bool balanced = false;
    int target_class = 0;

    std::size_t size() const { return points.size(); }

    void push(Observation p, double response, double weight, int band, bool cf) {
        points.push_back(std::move(p));
        responses.push_back(response);
        weights.push_back(weight);
        band_of.push_back(band);
        counterfactual.push_back(cf);
    }
};

/// Euclidean distance in standardized units; a categorical mismatch
/// contributes 1.
inline double distance(const Observation& a, const Observation& b,
                       const std::vector<FeatureSpec>& features) {
    double s = 0.0;
    for (std::size_t j = 0; j < features.size(); ++j) {
        if (features[j].is_numeric()) {
            const double d = (a[j] - b[j]) / features[j].scale();
            s += d * d;
        } else if (a[j] != b[j]) {
            s += 1.0;
        }
    }
    return std::sqrt(s);
}

/// Band of a target-class probability: (0,b1] -> 0, (b1,b2] -> 1, (b2,1] -> 2.
inline int band_index(double y, double b1, double b2) {
    if (y <= 0.0 || y > 1.0) return -1;
    if (y <= b1) return 0;
    if (y <= b2) return 1;
    return 2;
}

/// Per-band quota: floor(n/3) each, remainder handed out to the low bands first.
inline std::array<std::size_t, 3> band_quotas(std::size_t n) {
    std::array<std::size_t, 3> q{n / 3, n / 3, n / 3};
    for (std::size_t b = 0; b < n % 3; ++b) ++q[b];
    return q;
}

namespace detail {

/// Indices of the `k` smallest distances; ties keep pool order.
inline std::vector<std::size_t> nearest(std::vector<std::size_t> idx, const std::vector<double>& dist,
                                        std::size_t k) {
    k = std::min(k, idx.size());
    auto less = [&](std::size_t a, std::size_t b) {
        return dist[a] < dist[b] || (dist[a] == dist[b] && a < b);
    };
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), less);
    idx.resize(k);
    return idx;
}

inline std::vector<double> distances_to(const SyntheticPool& pool, const Observation& x,
                                        const std::vector<FeatureSpec>& features) {
    std::vector<double> d(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) d[i] = distance(pool.observations[i], x, features);
    return d;
}

}  // namespace detail

/// For each target-probability band, the pool points nearest to x. A band
/// holding fewer points than its quota contributes all it has; an empty
/// band is an error.
inline NeighbourhoodDataset balanced_neighbourhood(const SyntheticPool& pool, const Observation& x,
                                                   const std::vector<FeatureSpec>& features,
                                                   int target_class, double b1, double b2,
                                                   std::size_t n) {
    if (!(0.0 < b1 && b1 < b2 && b2 < 1.0))
        throw PreconditionError("band margins must satisfy 0 < b1 < b2 < 1");
    if (n < 3) throw PreconditionError("neighbourhood size must be >= 3");
    const auto dist = detail::distances_to(pool, x, features);
    std::array<std::vector<std::size_t>, 3> members;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        const int b = band_index(pool.probability(i, target_class), b1, b2);
        if (b >= 0) members[static_cast<std::size_t>(b)].push_back(i);
    }
    static const char* names[3] = {"(0, b1]", "(b1, b2]", "(b2, 1]"};
    for (int b = 0; b < 3; ++b)
        if (members[static_cast<std::size_t>(b)].empty())
            throw BandStarvationError(b, 0,
                                      std::string("band ") + names[b] +
                                          " holds 0 pool points; enlarge the synthetic pool");

    const auto quota = band_quotas(n);
    NeighbourhoodDataset nbd;
    nbd.balanced = true;
    nbd.target_class = target_class;
    for (std::size_t b = 0; b < 3; ++b) {
        for (std::size_t i : detail::nearest(members[b], dist, quota[b]))
            nbd.push(pool.observations[i], pool.probability(i, target_class), 1.0,
                     static_cast<int>(b), false);
    }
    return nbd;
}

/// The n pool points nearest to x, whatever their band.
inline NeighbourhoodDataset imbalanced_neighbourhood(const SyntheticPool& pool, const Observation& x,
                                                     const std::vector<FeatureSpec>& features,
                                                     int target_class, std::size_t n,
                                                     double b1 = 0.4, double b2 = 0.6) {
    if (n > pool.size())
        throw PreconditionError("neighbourhood size " + std::to_string(n) + " exceeds pool size " +
                                std::to_string(pool.size()));
    const auto dist = detail::distances_to(pool, x, features);
    std::vector<std::size_t> all(pool.size());
    std::iota(all.begin(), all.end(), 0);
    NeighbourhoodDataset nbd;
    nbd.balanced = false;
    nbd.target_class = target_class;
    for (std::size_t i : detail::nearest(std::move(all), dist, n)) {
        const double y = pool.probability(i, target_class);
        nbd.push(pool.observations[i], y, 1.0, band_index(y, b1, b2), false);
    }
    return nbd;
}

/// Appends every perturbation's counterfactual point, labelled by m, with
/// the given weight.
inline NeighbourhoodDataset augment_with_counterfactuals(NeighbourhoodDataset nbd,
                                                         const std::vector<BPerturbation>& perturbations,
                                                         const Classifier& m, double weight,
                                                         double b1 = 0.4, double b2 = 0.6) {
    if (perturbations.empty()) return nbd;
    std::vector<Observation> points;
    for (const auto& bp : perturbations) {
        if (bp.target_class != nbd.target_class)
            throw PreconditionError("perturbation target class does not match the neighbourhood");
        points.push_back(bp.counterfactual_point);
    }
    const auto p = m.predict_proba(points);
    for (std::size_t i = 0; i < points.size(); ++i) {
        const double y = p(static_cast<Eigen::Index>(i), nbd.target_class);
        nbd.push(std::move(points[i]), y, weight, band_index(y, b1, b2), true);
    }
    return nbd;
}

/// Audit export: feature columns, response, weight, band, counterfactual flag.
inline void write_neighbourhood_csv(std::ostream& out, const NeighbourhoodDataset& nbd,
                                    const std::vector<FeatureSpec>& features) {
    for (const auto& f : features) out << f.name << ',';
    out << "response,weight,band,counterfactual\n";
    out.precision(17);
    for (std::size_t i = 0; i < nbd.size(); ++i) {
        for (std::size_t j = 0; j < features.size(); ++j) {
            if (features[j].is_numeric())
                out << nbd.points[i][j];
            else
                out << features[j].levels[static_cast<std::size_t>(nbd.points[i][j])];
            out << ',';
        }
        out << nbd.responses[i] << ',' << nbd.weights[i] << ',' << nbd.band_of[i] << ','
            << (nbd.counterfactual[i] ? 1 : 0) << '\n';
    }
}

}  // namespace clear
