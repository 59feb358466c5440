#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "clear/cf_search.hpp"
#include "clear/dataset.hpp"
#include "clear/estimator.hpp"
#include "clear/lime.hpp"
#include "clear/models.hpp"
#include "clear/neighbourhood.hpp"
#include "clear/standardized.hpp"
#include "clear/surrogate.hpp"
#include "clear/synthgen.hpp"

namespace clear {

enum class Method { clear, lime };

inline const char* to_string(Method m) { return m == Method::clear ? "clear" : "lime"; }

/// Everything that shapes a single explanation.
struct ExplainConfig {
    Method method = Method::clear;
    SearchConfig search;
    std::size_t pool_size = 50000;
    std::size_t neighbourhood_size = 200;
    double b1 = 0.4;
    double b2 = 0.6;
    bool balanced = true;
    bool augmentation = false;
    double cf_weight = 10.0;
    bool centering = true;
    Family family = Family::logistic;
    std::size_t max_terms = 14;
    TermPool terms;
    double threshold_T = 0.25;
    KernelConfig lime;
};

/// Explanation for one target class: actual b-perturbations (w), their
/// estimates (w'), the regression (r) and the fidelity records (e).
struct TargetExplanation {
    int target_class = 0;
    std::vector<BPerturbation> actual;
    std::vector<LevelSwap> level_swaps;
    std::vector<EstimatedPerturbation> estimated;
    SurrogateModel regression;
    std::vector<FidelityRecord> fidelity;
    NeighbourhoodDataset neighbourhood;  // empty for LIME
    double model_probability = 0.0;      // m's target-class probability at x
    double regression_at_x = 0.0;        // surrogate's estimate at x
};

struct Explanation {
    Method method = Method::clear;
    Observation x;               // raw units
    Observation x_standardized;  // units of every number below
    std::vector<double> probabilities;
    int predicted_class = 0;
    std::vector<TargetExplanation> targets;

    std::vector<FidelityRecord> fidelity_records() const {
        std::vector<FidelityRecord> out;
        for (const auto& t : targets) out.insert(out.end(), t.fidelity.begin(), t.fidelity.end());
        return out;
    }
};

/// Synthetic data for one seed: CLEAR draws uniformly over the training
/// range, LIME draws from the training Gaussians.
inline SyntheticPool make_pool(const StandardizedProblem& problem, const ExplainConfig& cfg,
                               std::uint64_t seed) {
    if (cfg.method == Method::lime)
        return lime_samples(problem.train, *problem.model, cfg.lime.sample_count, seed);
    return generate(problem.train, *problem.model, cfg.pool_size, seed);
}

/// Classes other than the predicted one.
inline std::vector<int> target_classes(const std::vector<double>& probs) {
    int best = 0;
    for (std::size_t k = 1; k < probs.size(); ++k)
        if (probs[k] > probs[static_cast<std::size_t>(best)]) best = static_cast<int>(k);
    std::vector<int> out;
    for (std::size_t k = 0; k < probs.size(); ++k)
        if (static_cast<int>(k) != best) out.push_back(static_cast<int>(k));
    return out;
}

/// Neighbourhood, surrogate fit (optionally augmented), estimation and
/// fidelity for one target class, given its boundary search result. `z` is in standardized units.
inline TargetExplanation explain_target(const StandardizedProblem& problem, const Observation& z,
                                        int target_class, const SearchResult& search,
                                        const SyntheticPool& pool, const ExplainConfig& cfg) {
    const auto& features = problem.train.features;
    const auto& m = *problem.model;
    TargetExplanation te;
    te.target_class = target_class;
    te.actual = search.perturbations;
    te.level_swaps = search.level_swaps;
    te.model_probability = m.probability(z, target_class);

    if (cfg.method == Method::lime) {
        te.regression = lime_fit(pool, z, target_class, te.model_probability, features,
                                 cfg.lime.kernel_width, cfg.max_terms);
    } else {
        te.neighbourhood =
            cfg.balanced
                ? balanced_neighbourhood(pool, z, features, target_class, cfg.b1, cfg.b2,
                                         cfg.neighbourhood_size)
                : imbalanced_neighbourhood(pool, z, features, target_class, cfg.neighbourhood_size,
                                           cfg.b1, cfg.b2);
        if (cfg.augmentation)
            te.neighbourhood = augment_with_counterfactuals(std::move(te.neighbourhood), te.actual,
                                                            m, cfg.cf_weight, cfg.b1, cfg.b2);
        FitOptions opts;
        opts.family = cfg.family;
        opts.max_terms = cfg.max_terms;
        opts.pool = cfg.terms;
        opts.centering = cfg.centering;
        te.regression = fit(te.neighbourhood, z, te.model_probability, features, opts);
    }
    te.regression_at_x = te.regression.evaluate(z);

    for (const auto& bp : te.actual) {
        auto est = estimate_b_perturbation(te.regression, bp, cfg.search.threshold);
        te.fidelity.push_back(fidelity_error(bp, est, cfg.threshold_T));
        te.estimated.push_back(std::move(est));
    }
    return te;
}

/// Full explanation of a raw-unit observation against a prepared pool.
/// `searches`, when given, supplies the boundary search results per target class (in
/// `target_classes` order) instead of recomputing them.
inline Explanation explain(const StandardizedProblem& problem, const Observation& raw_x,
                           const SyntheticPool& pool, const ExplainConfig& cfg,
                           const std::vector<SearchResult>* searches = nullptr) {
    check_arity(raw_x, problem.train);
    Explanation ex;
    ex.method = cfg.method;
    ex.x = raw_x;
    ex.x_standardized = problem.to_standard(raw_x);
    const auto p = problem.model->predict_proba(ex.x_standardized);
    ex.probabilities.assign(p.data(), p.data() + p.size());
    ex.predicted_class = predicted_class(p.row(0));
    const auto targets = target_classes(ex.probabilities);
    for (std::size_t i = 0; i < targets.size(); ++i) {
        const int tc = targets[i];
        SearchResult local;
        const SearchResult* sr = searches ? &(*searches)[i] : nullptr;
        if (!sr) {
            local = find_b_perturbations(ex.x_standardized, *problem.model, problem.train, tc,
                                         cfg.search);
            sr = &local;
        }
        ex.targets.push_back(explain_target(problem, ex.x_standardized, tc, *sr, pool, cfg));
    }
    return ex;
}

/// Boundary search for every target class of a raw-unit observation.
inline std::vector<SearchResult> search_all_targets(const StandardizedProblem& problem,
                                                    const Observation& raw_x,
                                                    const SearchConfig& cfg) {
    const auto z = problem.to_standard(raw_x);
    const auto p = problem.model->predict_proba(z);
    std::vector<double> probs(p.data(), p.data() + p.size());
    std::vector<SearchResult> out;
    for (int tc : target_classes(probs))
        out.push_back(find_b_perturbations(z, *problem.model, problem.train, tc, cfg));
    return out;
}

}  // namespace clear
