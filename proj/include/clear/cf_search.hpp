#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "clear/dataset.hpp"
#include "clear/error.hpp"
#include "clear/models.hpp"

namespace clear {

struct SearchConfig {
    int steps = 200;            // grid spacing is range / steps, per direction
    double refine_tol = 1e-4;   // bisection stops at refine_tol * range
    double threshold = 0.5;     // target-class probability at the boundary
    double range_margin = 0.0;  // widen the search range by this share of the range
};

/// Minimum single-feature change that moves x across the boundary towards
/// `target_class`.
struct BPerturbation {
    std::size_t feature = 0;
    std::string feature_name;
    int target_class = 0;
    double original_value = 0.0;
    double boundary_value = 0.0;
    double delta = 0.0;  // boundary_value - original_value
    bool feasible = true;
    Observation counterfactual_point;
    double target_probability = 0.0;  // m at counterfactual_point
};

/// Categorical flip found by trying the feature's other levels. Not part of
/// the fidelity computation.
struct LevelSwap {
    std::size_t feature = 0;
    std::string feature_name;
    int target_class = 0;
    int from_level = 0;
    int to_level = 0;
    Observation counterfactual_point;
    double target_probability = 0.0;
};

struct SearchResult {
    std::vector<BPerturbation> perturbations;
    std::vector<LevelSwap> level_swaps;
};

/// Candidate values for `feature`, walking outward from x's value: first
/// step down, first step up, second step down, and so on. Spacing is
/// (train_max - train_min) / steps; each direction ends with at most one
/// candidate clamped to the search range.
inline std::vector<double> search_grid(const Observation& x, std::size_t feature, const Dataset& ds,
                                       int steps, double range_margin = 0.0) {
    if (feature >= ds.feature_count()) throw PreconditionError("feature index out of range");
    const auto& f = ds.features[feature];
    if (!f.is_numeric())
        throw PreconditionError("search grid needs a numeric feature, '" + f.name +
                                "' is categorical");
    if (steps < 2) throw PreconditionError("steps must be >= 2");
    const double range = f.range();
    if (!(range > 0.0)) return {};
    const double h = range / steps;
    const double lo = f.train_min - range_margin * range;
    const double hi = f.train_max + range_margin * range;
    const double x0 = x[feature];

    auto walk = [&](int dir) {
        std::vector<double> out;
        // Enough steps to cross the whole range even when x lies outside it.
        const auto limit = static_cast<long>(std::ceil((std::max(hi, x0) - std::min(lo, x0)) / h)) + 2;
        for (long k = 1; k <= limit; ++k) {
            double v = x0 + dir * k * h;
            bool last = false;
            if (dir < 0 && v <= lo) {
                v = lo;
                last = true;
            }
            if (dir > 0 && v >= hi) {
                v = hi;
                last = true;
            }
            if ((v - x0) * dir <= 0.0) break;
            if (v >= lo && v <= hi && (out.empty() || v != out.back())) out.push_back(v);
            if (last) break;
        }
        return out;
    };
    const auto down = walk(-1);
    const auto up = walk(+1);
    std::vector<double> out;
    out.reserve(down.size() + up.size());
    for (std::size_t k = 0; k < std::max(down.size(), up.size()); ++k) {
        if (k < down.size()) out.push_back(down[k]);
        if (k < up.size()) out.push_back(up[k]);
    }
    return out;
}

inline std::vector<double> search_grid(const Observation& x, const std::string& feature,
                                       const Dataset& ds, int steps, double range_margin = 0.0) {
    return search_grid(x, ds.feature_index(feature), ds, steps, range_margin);
}

/// One-dimensional boundary searches for every feature of x towards
/// `target_class` (one-vs-rest probability against cfg.threshold).
///
/// Numeric features: the whole grid is queried in one batch, the nearest
/// flipping candidate is taken and the crossing is bisected against the
/// preceding non-flipping point. `boundary_value` is the flipped end of the
/// final bracket. Features without a flip in range are simply absent.
inline SearchResult find_b_perturbations(const Observation& x, const Classifier& m,
                                         const Dataset& ds, int target_class,
                                         const SearchConfig& cfg = {}) {
    check_arity(x, ds);
    if (target_class < 0 || static_cast<std::size_t>(target_class) >= m.class_count())
        throw PreconditionError("target class out of range");
    const auto px = m.predict_proba(x);
    if (predicted_class(px.row(0)) == target_class || px(0, target_class) >= cfg.threshold)
        throw PreconditionError("observation is already classified as target class " +
                                std::to_string(target_class));
    auto flipped = [&](double p) { return p >= cfg.threshold; };

    struct Pending {
        std::size_t feature;
        std::vector<double> grid;
        std::size_t offset;
    };
    std::vector<Pending> pending;
    std::vector<Observation> batch;
    for (std::size_t j = 0; j < ds.feature_count(); ++j) {
        const auto& f = ds.features[j];
        if (f.is_numeric()) {
            auto grid = search_grid(x, j, ds, cfg.steps, cfg.range_margin);
            if (grid.empty()) continue;
            pending.push_back({j, grid, batch.size()});
            for (double v : grid) {
                Observation c = x;
                c[j] = v;
                batch.push_back(std::move(c));
            }
        } else {
            std::vector<double> levels;
            for (std::size_t l = 0; l < f.levels.size(); ++l)
                if (static_cast<double>(l) != x[j]) levels.push_back(static_cast<double>(l));
            pending.push_back({j, levels, batch.size()});
            for (double v : levels) {
                Observation c = x;
                c[j] = v;
                batch.push_back(std::move(c));
            }
        }
    }
    const auto probs = m.predict_proba(batch);

    SearchResult result;
    struct Bracket {
        std::size_t feature;
        double inside;   // not flipped
        double outside;  // flipped
        double p_outside;
    };
    std::vector<Bracket> brackets;
    for (const auto& pd : pending) {
        const auto& f = ds.features[pd.feature];
        if (!f.is_numeric()) {
            for (std::size_t k = 0; k < pd.grid.size(); ++k) {
                const double p = probs(static_cast<Eigen::Index>(pd.offset + k), target_class);
                if (!flipped(p)) continue;
                LevelSwap s;
                s.feature = pd.feature;
                s.feature_name = f.name;
                s.target_class = target_class;
                s.from_level = static_cast<int>(x[pd.feature]);
                s.to_level = static_cast<int>(pd.grid[k]);
                s.counterfactual_point = batch[pd.offset + k];
                s.target_probability = p;
                result.level_swaps.push_back(std::move(s));
            }
            continue;
        }
        // First flip on each side; the nearer one wins (down on ties).
        const double x0 = x[pd.feature];
        std::optional<Bracket> side[2];
        double last_inside[2] = {x0, x0};
        for (std::size_t k = 0; k < pd.grid.size(); ++k) {
            const double v = pd.grid[k];
            const int s = v < x0 ? 0 : 1;
            if (side[s]) continue;
            const double p = probs(static_cast<Eigen::Index>(pd.offset + k), target_class);
            if (flipped(p))
                side[s] = Bracket{pd.feature, last_inside[s], v, p};
            else
                last_inside[s] = v;
        }
        if (side[0] && side[1])
            brackets.push_back(std::abs(side[1]->outside - x0) < std::abs(side[0]->outside - x0)
                                   ? *side[1]
                                   : *side[0]);
        else if (side[0] || side[1])
            brackets.push_back(side[0] ? *side[0] : *side[1]);
    }

    // Bisect all brackets in lockstep: one model call per round.
    while (true) {
        std::vector<std::size_t> active;
        std::vector<Observation> mids;
        for (std::size_t b = 0; b < brackets.size(); ++b) {
            const auto& br = brackets[b];
            const double tol = cfg.refine_tol * ds.features[br.feature].range();
            if (std::abs(br.outside - br.inside) <= tol) continue;
            const double mid = 0.5 * (br.inside + br.outside);
            if (mid == br.inside || mid == br.outside) continue;
            Observation c = x;
            c[br.feature] = mid;
            mids.push_back(std::move(c));
            active.push_back(b);
        }
        if (active.empty()) break;
        const auto pm = m.predict_proba(mids);
        for (std::size_t i = 0; i < active.size(); ++i) {
            auto& br = brackets[active[i]];
            const double mid = mids[i][br.feature];
            const double p = pm(static_cast<Eigen::Index>(i), target_class);
            if (flipped(p)) {
                br.outside = mid;
                br.p_outside = p;
            } else {
                br.inside = mid;
            }
        }
    }

    for (const auto& br : brackets) {
        const auto& f = ds.features[br.feature];
        BPerturbation bp;
        bp.feature = br.feature;
        bp.feature_name = f.name;
        bp.target_class = target_class;
        bp.original_value = x[br.feature];
        bp.boundary_value = br.outside;
        bp.delta = bp.boundary_value - bp.original_value;
        bp.feasible = bp.boundary_value >= f.train_min && bp.boundary_value <= f.train_max;
        bp.counterfactual_point = x;
        bp.counterfactual_point[br.feature] = br.outside;
        bp.target_probability = br.p_outside;
        result.perturbations.push_back(std::move(bp));
    }
    return result;
}

}  // namespace clear
