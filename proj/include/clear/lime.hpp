#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "clear/dataset.hpp"
#include "clear/error.hpp"
#include "clear/models.hpp"
#include "clear/neighbourhood.hpp"
#include "clear/surrogate.hpp"
#include "clear/synthgen.hpp"

namespace clear {

struct KernelConfig {
    double kernel_width = 2.0;
    std::size_t sample_count = 15000;
};

/// sqrt(exp(-d^2 / width^2)).
inline double kernel_weight(double d, double width) {
    if (!(width > 0.0)) throw PreconditionError("kernel width must be positive");
    if (d < 0.0) throw PreconditionError("distance must be non-negative");
    return std::sqrt(std::exp(-(d * d) / (width * width)));
}

/// Tabular sampling without discretization: numeric features drawn from
/// N(mean, stddev) of the training data, categorical features in
/// proportion to their training frequencies.
inline SyntheticPool lime_samples(const Dataset& ds, const Classifier& m, std::size_t count,
                                  std::uint64_t seed) {
    if (count < 1) throw PreconditionError("sample_count must be >= 1");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<std::discrete_distribution<int>> discrete;
    for (const auto& f : ds.features)
        discrete.emplace_back(f.level_frequencies.begin(), f.level_frequencies.end());
    SyntheticPool pool;
    pool.seed = seed;
    pool.observations.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        Observation obs(std::vector<double>(ds.feature_count()));
        for (std::size_t j = 0; j < ds.feature_count(); ++j) {
            const auto& f = ds.features[j];
            if (f.is_numeric())
                obs[j] = f.mean + f.stddev * normal(rng);
            else
                obs[j] = discrete[j](rng);
        }
        pool.observations.push_back(std::move(obs));
    }
    pool.probabilities = label(m, pool.observations);
    return pool;
}

/// Kernel-weighted linear regression over every pool point: no
/// neighbourhood selection, no constraint through x.
inline SurrogateModel lime_fit(const SyntheticPool& pool, const Observation& x, int target_class,
                               double y_x, const std::vector<FeatureSpec>& features, double width,
                               std::size_t max_terms) {
    std::vector<double> y(pool.size()), w(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) {
        y[i] = pool.probability(i, target_class);
        w[i] = kernel_weight(distance(pool.observations[i], x, features), width);
    }
    FitOptions opts;
    opts.family = Family::multiple;
    opts.max_terms = max_terms;
    opts.centering = false;
    opts.linear_only = true;
    return fit_surrogate(pool.observations, y, w, x, y_x, features, opts);
}

/// Complete LIME run for one observation and target class.
inline SurrogateModel lime_explain(const Observation& x, const Classifier& m, const Dataset& ds,
                                   const KernelConfig& cfg, std::size_t max_terms, int target_class,
                                   std::uint64_t seed = 1) {
    if (!(cfg.kernel_width > 0.0)) throw PreconditionError("kernel width must be positive");
    const auto pool = lime_samples(ds, m, cfg.sample_count, seed);
    const double y_x = m.probability(x, target_class);
    return lime_fit(pool, x, target_class, y_x, ds.features, cfg.kernel_width, max_terms);
}

}  // namespace clear
