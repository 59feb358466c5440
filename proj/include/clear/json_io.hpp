#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "clear/explain.hpp"

namespace clear {

using json = nlohmann::ordered_json;

/// Version of every JSON document the engine emits (reports, service
/// payloads). Bumped on any breaking field change.
inline constexpr const char* kSchemaVersion = "1.0";

namespace jsonio {

/// Finite reals as numbers, NaN and infinities as null.
inline json real(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json values(const Observation& obs) {
    json a = json::array();
    for (double v : obs.values) a.push_back(real(v));
    return a;
}

/// Observation keyed by feature name; categoricals as level names.
inline json named(const Observation& obs, const std::vector<FeatureSpec>& features) {
    json o = json::object();
    for (std::size_t j = 0; j < features.size(); ++j) {
        const auto& f = features[j];
        if (f.is_numeric())
            o[f.name] = real(obs[j]);
        else
            o[f.name] = f.levels.at(static_cast<std::size_t>(obs[j]));
    }
    return o;
}

inline const char* kind_name(TermKind k) {
    switch (k) {
        case TermKind::linear: return "linear";
        case TermKind::quadratic: return "quadratic";
        case TermKind::interaction: return "interaction";
        case TermKind::indicator: return "indicator";
    }
    return "";
}

}  // namespace jsonio

inline json to_json(const FitStats& s) {
    return {{"points", s.points},
            {"r2", jsonio::real(s.r2)},
            {"adjusted_r2", jsonio::real(s.adjusted_r2)},
            {"deviance", jsonio::real(s.deviance)},
            {"weighted_residual_norm", jsonio::real(s.weighted_residual_norm)}};
}

/// Regression in absolute (unshifted) coordinates plus its fit record.
inline json to_json(const SurrogateModel& s) {
    const auto flat = from_polynomial(expand(s), s);
    json terms = json::array();
    for (std::size_t i = 0; i < flat.terms.size(); ++i) {
        const auto& t = flat.terms[i];
        json features = json::array({s.features[t.a].name});
        if (t.kind == TermKind::interaction) features.push_back(s.features[t.b].name);
        json term = {{"name", term_name(t, s.features)},
                     {"kind", jsonio::kind_name(t.kind)},
                     {"features", features},
                     {"coefficient", jsonio::real(flat.coefficients[i])}};
        if (t.kind == TermKind::indicator)
            term["level"] = s.features[t.a].levels.at(static_cast<std::size_t>(t.level));
        terms.push_back(std::move(term));
    }
    return {{"family", to_string(s.family)},
            {"equation", equation(s)},
            {"intercept", jsonio::real(flat.intercept)},
            {"terms", terms},
            {"centered", s.centered},
            {"center_response", jsonio::real(s.center_response)},
            {"fit_stats", to_json(s.stats)}};
}

inline json to_json(const BPerturbation& bp) {
    return {{"feature", bp.feature_name},
            {"target_class", bp.target_class},
            {"original_value", jsonio::real(bp.original_value)},
            {"boundary_value", jsonio::real(bp.boundary_value)},
            {"delta", jsonio::real(bp.delta)},
            {"feasible", bp.feasible},
            {"target_probability", jsonio::real(bp.target_probability)},
            {"counterfactual_point", jsonio::values(bp.counterfactual_point)}};
}

inline json to_json(const LevelSwap& s, const std::vector<FeatureSpec>& features) {
    const auto& f = features[s.feature];
    return {{"feature", s.feature_name},
            {"target_class", s.target_class},
            {"from_level", f.levels.at(static_cast<std::size_t>(s.from_level))},
            {"to_level", f.levels.at(static_cast<std::size_t>(s.to_level))},
            {"target_probability", jsonio::real(s.target_probability)}};
}

inline json to_json(const EstimatedPerturbation& e) {
    json roots = json::array();
    for (double r : e.roots) roots.push_back(jsonio::real(r));
    return {{"feature", e.feature_name},
            {"target_class", e.target_class},
            {"original_value", jsonio::real(e.original_value)},
            {"estimated_boundary_value", jsonio::real(e.estimated_boundary_value)},
            {"estimated_delta", jsonio::real(e.estimated_delta)},
            {"root_multiplicity", e.root_multiplicity},
            {"roots", roots},
            {"status", to_string(e.status)}};
}

inline json to_json(const FidelityRecord& r) {
    return {{"feature", r.feature_name},
            {"target_class", r.target_class},
            {"actual_delta", jsonio::real(r.actual_delta)},
            {"estimated_delta", jsonio::real(r.estimated_delta)},
            {"error", jsonio::real(r.error)},
            {"feasible", r.feasible},
            {"within_threshold", r.within_threshold},
            {"status", to_string(r.status)}};
}

inline json to_json(const NeighbourhoodDataset& nbd, const std::vector<FeatureSpec>& features) {
    json points = json::array();
    for (std::size_t i = 0; i < nbd.size(); ++i)
        points.push_back({{"values", jsonio::values(nbd.points[i])},
                          {"response", jsonio::real(nbd.responses[i])},
                          {"weight", nbd.weights[i]},
                          {"band", nbd.band_of[i]},
                          {"counterfactual", static_cast<bool>(nbd.counterfactual[i])}});
    json names = json::array();
    for (const auto& f : features) names.push_back(f.name);
    return {{"target_class", nbd.target_class},
            {"balanced", nbd.balanced},
            {"features", names},
            {"units", "standardized"},
            {"points", points}};
}

/// % fidelity of one set of records, null when no record is feasible.
inline json fidelity_or_null(const std::vector<FidelityRecord>& recs, double threshold) {
    try {
        return percent_fidelity(recs, threshold);
    } catch (const UndefinedResultError&) {
        return nullptr;
    }
}

inline json to_json(const TargetExplanation& t, const std::vector<FeatureSpec>& features,
                    const std::vector<std::string>& class_names, double threshold) {
    json actual = json::array(), estimated = json::array(), fidelity = json::array(),
         swaps = json::array();
    for (const auto& a : t.actual) actual.push_back(to_json(a));
    for (const auto& e : t.estimated) estimated.push_back(to_json(e));
    for (const auto& r : t.fidelity) fidelity.push_back(to_json(r));
    for (const auto& s : t.level_swaps) swaps.push_back(to_json(s, features));
    return {{"target_class", t.target_class},
            {"target_class_name", class_names.at(static_cast<std::size_t>(t.target_class))},
            {"model_probability", jsonio::real(t.model_probability)},
            {"regression_at_x", jsonio::real(t.regression_at_x)},
            {"regression", to_json(t.regression)},
            {"actual", actual},
            {"estimated", estimated},
            {"fidelity", fidelity},
            {"level_swaps", swaps},
            {"neighbourhood_size", t.neighbourhood.size()},
            {"percent_fidelity", fidelity_or_null(t.fidelity, threshold)}};
}

inline json to_json(const Explanation& ex, const std::vector<FeatureSpec>& raw_features,
                    const std::vector<std::string>& class_names, double threshold) {
    json targets = json::array();
    for (const auto& t : ex.targets) targets.push_back(to_json(t, raw_features, class_names, threshold));
    json probs = json::array();
    for (double p : ex.probabilities) probs.push_back(jsonio::real(p));
    return {{"method", to_string(ex.method)},
            {"x", jsonio::named(ex.x, raw_features)},
            {"x_standardized", jsonio::values(ex.x_standardized)},
            {"probabilities", probs},
            {"predicted_class", ex.predicted_class},
            {"predicted_class_name", class_names.at(static_cast<std::size_t>(ex.predicted_class))},
            {"threshold_T", threshold},
            {"percent_fidelity", fidelity_or_null(ex.fidelity_records(), threshold)},
            {"targets", targets}};
}

inline json error_json(const std::string& kind, const std::string& message) {
    return {{"schema_version", kSchemaVersion}, {"error", {{"kind", kind}, {"message", message}}}};
}

}  // namespace clear
