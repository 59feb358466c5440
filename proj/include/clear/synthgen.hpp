#pragma once

#include <cstdint>
#include <ostream>
#include <random>
#include <vector>

#include "clear/dataset.hpp"
#include "clear/models.hpp"

namespace clear {

struct SyntheticPool {
    std::vector<Observation> observations;
    ProbabilityMatrix probabilities;  // one row per observation
    std::uint64_t seed = 0;

    std::size_t size() const { return observations.size(); }
    double probability(std::size_t i, int cls) const {
        return probabilities(static_cast<Eigen::Index>(i), cls);
    }
};

/// Labels `observations` through m in chunks of `chunk` rows.
inline ProbabilityMatrix label(const Classifier& m, const std::vector<Observation>& observations,
                               std::size_t chunk = 1000) {
    ProbabilityMatrix out(static_cast<Eigen::Index>(observations.size()),
                          static_cast<Eigen::Index>(m.class_count()));
    for (std::size_t start = 0; start < observations.size(); start += chunk) {
        const std::size_t len = std::min(chunk, observations.size() - start);
        out.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(len)) =
            m.predict_proba(std::span<const Observation>(observations.data() + start, len));
    }
    return out;
}

/// Uniform draws on [train_min, train_max] for numeric features, draws in
/// proportion to the training frequencies for categorical ones; labelled by m.
inline SyntheticPool generate(const Dataset& ds, const Classifier& m, std::size_t count,
                              std::uint64_t seed, std::size_t chunk = 1000) {
    if (count < 1) throw PreconditionError("synthetic pool needs at least one observation");
    std::mt19937_64 rng(seed);
    std::vector<std::uniform_real_distribution<double>> uniform;
    std::vector<std::discrete_distribution<int>> discrete;
    for (const auto& f : ds.features) {
        if (f.is_numeric()) {
            uniform.emplace_back(f.train_min, f.range() > 0.0 ? f.train_max : f.train_min + 1.0);
            discrete.emplace_back();
        } else {
            uniform.emplace_back();
            discrete.emplace_back(f.level_frequencies.begin(), f.level_frequencies.end());
        }
    }
    SyntheticPool pool;
    pool.seed = seed;
    pool.observations.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        Observation obs(std::vector<double>(ds.feature_count()));
        for (std::size_t j = 0; j < ds.feature_count(); ++j) {
            const auto& f = ds.features[j];
            if (f.is_numeric())
                obs[j] = f.range() > 0.0 ? uniform[j](rng) : f.train_min;
            else
                obs[j] = discrete[j](rng);
        }
        pool.observations.push_back(std::move(obs));
    }
    pool.probabilities = label(m, pool.observations, chunk);
    return pool;
}

/// Audit export: feature columns, then one `p_<class>` column per class.
inline void write_pool_csv(std::ostream& out, const SyntheticPool& pool, const Dataset& ds) {
    for (const auto& f : ds.features) out << f.name << ',';
    for (std::size_t k = 0; k < ds.class_count(); ++k)
        out << "p_" << ds.class_names[k] << (k + 1 < ds.class_count() ? "," : "\n");
    out.precision(17);
    for (std::size_t i = 0; i < pool.size(); ++i) {
        const auto& obs = pool.observations[i];
        for (std::size_t j = 0; j < obs.size(); ++j) {
            const auto& f = ds.features[j];
            if (f.is_numeric())
                out << obs[j];
            else
                out << f.levels[static_cast<std::size_t>(obs[j])];
            out << ',';
        }
        for (Eigen::Index k = 0; k < pool.probabilities.cols(); ++k)
            out << pool.probabilities(static_cast<Eigen::Index>(i), k)
                << (k + 1 < pool.probabilities.cols() ? "," : "\n");
    }
}

}  // namespace clear
