#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "clear/cf_search.hpp"
#include "clear/error.hpp"
#include "clear/surrogate.hpp"

namespace clear {

enum class EstimateStatus { ok, no_real_root, no_term_for_feature };

inline const char* to_string(EstimateStatus s) {
    switch (s) {
        case EstimateStatus::ok: return "ok";
        case EstimateStatus::no_real_root: return "no_real_root";
        case EstimateStatus::no_term_for_feature: return "no_term_for_feature";
    }
    return "";
}

struct EstimatedPerturbation {
    std::size_t feature = 0;
    std::string feature_name;
    int target_class = 0;
    double original_value = 0.0;
    double estimated_boundary_value = std::numeric_limits<double>::quiet_NaN();
    double estimated_delta = std::numeric_limits<double>::quiet_NaN();
    int root_multiplicity = 0;  // multiplicity of the chosen root
    std::vector<double> roots;  // every real root of the boundary equation
    EstimateStatus status = EstimateStatus::ok;
};

struct FidelityRecord {
    std::size_t feature = 0;
    std::string feature_name;
    int target_class = 0;
    double actual_delta = 0.0;
    double estimated_delta = std::numeric_limits<double>::quiet_NaN();
    double error = std::numeric_limits<double>::infinity();
    bool feasible = true;
    bool within_threshold = false;
    EstimateStatus status = EstimateStatus::ok;
};

/// Real roots of a*v^2 + b*v + c = 0, ascending. |a| < 1e-12 is treated as
/// linear. Uses the cancellation-free form q = -(b + sign(b) sqrt(disc)) / 2.
/// A repeated root appears twice.
inline std::vector<double> solve_quadratic(double a, double b, double c) {
    if (std::abs(a) < 1e-12) {
        if (b == 0.0) return {};
        return {-c / b};
    }
    double disc = b * b - 4.0 * a * c;
    if (disc < 0.0) {
        if (disc > -1e-14 * b * b) disc = 0.0;
        else return {};
    }
    const double sq = std::sqrt(disc);
    const double q = -0.5 * (b + std::copysign(sq, b));
    double r1 = q / a;
    double r2 = q != 0.0 ? c / q : r1;
    if (r1 > r2) std::swap(r1, r2);
    return {r1, r2};
}

/// Solves the surrogate's boundary equation for `bp.feature` with every
/// other feature held at its value in the counterfactual point (equal to
/// x's). The equation is score = logit(boundary) for the logistic family
/// and score = boundary for the multiple family; the real root nearest the
/// original value is chosen.
inline EstimatedPerturbation estimate_b_perturbation(const SurrogateModel& s, const BPerturbation& bp,
                                                     double boundary = 0.5) {
    EstimatedPerturbation e;
    e.feature = bp.feature;
    e.feature_name = bp.feature_name;
    e.target_class = bp.target_class;
    e.original_value = bp.original_value;
    if (!s.uses_feature(bp.feature)) {
        e.status = EstimateStatus::no_term_for_feature;
        return e;
    }
    const auto poly =
        expand(s).substitute([&](std::size_t f) { return f != bp.feature; }, bp.counterfactual_point);
    const Var v{bp.feature, -1};
    const double a = poly.coefficient({v, v});
    const double b = poly.coefficient({v});
    const double target = s.family == Family::logistic ? logit(boundary) : boundary;
    const double c = poly.coefficient({}) - target;
    e.roots = solve_quadratic(a, b, c);
    if (e.roots.empty()) {
        e.status = EstimateStatus::no_real_root;
        return e;
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < e.roots.size(); ++i)
        if (std::abs(e.roots[i] - bp.original_value) < std::abs(e.roots[best] - bp.original_value))
            best = i;
    e.estimated_boundary_value = e.roots[best];
    e.estimated_delta = e.estimated_boundary_value - bp.original_value;
    e.root_multiplicity = (e.roots.size() == 2 && e.roots[0] == e.roots[1]) ? 2 : 1;
    return e;
}

/// |estimated delta - actual delta|. Failed estimates carry an infinite
/// error and are never within threshold.
inline FidelityRecord fidelity_error(const BPerturbation& actual, const EstimatedPerturbation& est,
                                     double threshold = 0.25) {
    if (actual.feature != est.feature || actual.target_class != est.target_class)
        throw PreconditionError("fidelity_error needs matching feature and target class");
    FidelityRecord r;
    r.feature = actual.feature;
    r.feature_name = actual.feature_name;
    r.target_class = actual.target_class;
    r.actual_delta = actual.delta;
    r.estimated_delta = est.estimated_delta;
    r.feasible = actual.feasible;
    r.status = est.status;
    if (est.status == EstimateStatus::ok) r.error = std::abs(est.estimated_delta - actual.delta);
    r.within_threshold = r.error < threshold;
    return r;
}

/// Feasible records with error < T, over all feasible records.
inline double percent_fidelity(std::span<const FidelityRecord> records, double threshold) {
    if (!(threshold > 0.0)) throw PreconditionError("threshold T must be positive");
    std::size_t feasible = 0, good = 0;
    for (const auto& r : records) {
        if (!r.feasible) continue;
        ++feasible;
        good += r.error < threshold;
    }
    if (feasible == 0) throw UndefinedResultError("no feasible b-perturbations to score");
    return static_cast<double>(good) / static_cast<double>(feasible);
}

}  // namespace clear
