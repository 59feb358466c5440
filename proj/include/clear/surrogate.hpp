#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "clear/dataset.hpp"
#include "clear/error.hpp"
#include "clear/models.hpp"
#include "clear/neighbourhood.hpp"

namespace clear {

enum class Family { multiple, logistic };

inline const char* to_string(Family f) { return f == Family::multiple ? "multiple" : "logistic"; }

enum class TermKind { linear, quadratic, interaction, indicator };

/// One regressor. `a` (and `b` for interactions) are feature indices;
/// `level` is the level index of an indicator.
struct Term {
    TermKind kind = TermKind::linear;
    std::size_t a = 0;
    std::size_t b = 0;
    int level = -1;

    static Term linear(std::size_t f) { return {TermKind::linear, f, f, -1}; }
    static Term quadratic(std::size_t f) { return {TermKind::quadratic, f, f, -1}; }
    static Term interaction(std::size_t f, std::size_t g) {
        return {TermKind::interaction, std::min(f, g), std::max(f, g), -1};
    }
    static Term indicator(std::size_t f, int level) { return {TermKind::indicator, f, f, level}; }

    bool involves(std::size_t f) const {
        return a == f || (kind == TermKind::interaction && b == f);
    }

    friend bool operator==(const Term&, const Term&) = default;
};

inline std::string term_name(const Term& t, const std::vector<FeatureSpec>& features) {
    switch (t.kind) {
        case TermKind::linear: return features[t.a].name;
        case TermKind::quadratic: return features[t.a].name + "^2";
        case TermKind::interaction: return features[t.a].name + "*" + features[t.b].name;
        case TermKind::indicator:
            return features[t.a].name + "=" + features[t.a].levels.at(static_cast<std::size_t>(t.level));
    }
    return {};
}

struct FitStats {
    std::size_t points = 0;
    double r2 = std::numeric_limits<double>::quiet_NaN();
    double adjusted_r2 = std::numeric_limits<double>::quiet_NaN();
    double deviance = std::numeric_limits<double>::quiet_NaN();
    double weighted_residual_norm = std::numeric_limits<double>::quiet_NaN();
};

/// Local regression standing in for m around `center`.
///
/// Terms are functions of (value - origin). A fit constrained through x uses
/// origin = x, which makes every term vanish at x so the intercept alone
/// carries m's response there; indicator terms then subtract x's own
/// indicator value. Unshifted models use a zero origin.
///
/// The score is intercept + sum(coefficient * term). The logistic family
/// reports sigmoid(score) = 1 / (1 + exp(-score)).
struct SurrogateModel {
    Family family = Family::multiple;
    std::vector<FeatureSpec> features;
    std::vector<Term> terms;
    std::vector<double> coefficients;
    double intercept = 0.0;
    Observation origin;
    bool shifted = false;
    Observation center;
    double center_response = std::numeric_limits<double>::quiet_NaN();
    bool centered = false;  // fitted under the through-x constraint
    FitStats stats;

    std::size_t term_count() const { return terms.size(); }

    double term_value(const Term& t, const Observation& z) const {
        auto factor = [&](std::size_t f) {
            const double o = origin.size() ? origin[f] : 0.0;
            return z[f] - o;
        };
        switch (t.kind) {
            case TermKind::linear: return factor(t.a);
            case TermKind::quadratic: {
                const double u = factor(t.a);
                return u * u;
            }
            case TermKind::interaction: return factor(t.a) * factor(t.b);
            case TermKind::indicator: {
                const double on = z[t.a] == t.level ? 1.0 : 0.0;
                const double off = shifted && origin[t.a] == t.level ? 1.0 : 0.0;
                return on - off;
            }
        }
        return 0.0;
    }

    double score(const Observation& z) const {
        double s = intercept;
        for (std::size_t i = 0; i < terms.size(); ++i) s += coefficients[i] * term_value(terms[i], z);
        return s;
    }

    /// Regression score for the multiple family, probability for logistic.
    double evaluate(const Observation& z) const {
        const double s = score(z);
        return family == Family::logistic ? sigmoid(s) : s;
    }

    bool uses_feature(std::size_t f) const {
        return std::any_of(terms.begin(), terms.end(), [&](const Term& t) { return t.involves(f); });
    }
};

inline double evaluate(const SurrogateModel& s, const Observation& z) { return s.evaluate(z); }

// ---------------------------------------------------------------------------
// Polynomial form: the model expanded in absolute (unshifted) coordinates.

/// A variable is a numeric feature value (level < 0) or the 0/1 indicator
/// of one categorical level.
struct Var {
    std::size_t feature = 0;
    int level = -1;

    bool is_indicator() const { return level >= 0; }
    auto operator<=>(const Var&) const = default;
};

/// Sorted product of at most two variables; empty means the constant.
using Monomial = std::vector<Var>;

class Polynomial {
public:
    using Map = std::map<Monomial, double>;

    void add(Monomial m, double c) {
        std::sort(m.begin(), m.end());
        // Indicators are idempotent: I * I = I.
        if (m.size() == 2 && m[0] == m[1] && m[0].is_indicator()) m.pop_back();
        coef_[m] += c;
    }

    Polynomial operator*(const Polynomial& other) const {
        Polynomial out;
        for (const auto& [ma, ca] : coef_)
            for (const auto& [mb, cb] : other.coef_) {
                Monomial m = ma;
                m.insert(m.end(), mb.begin(), mb.end());
                out.add(std::move(m), ca * cb);
            }
        return out;
    }

    Polynomial& operator+=(const Polynomial& other) {
        for (const auto& [m, c] : other.coef_) coef_[m] += c;
        return *this;
    }

    Polynomial scaled(double c) const {
        Polynomial out = *this;
        for (auto& [m, v] : out.coef_) v *= c;
        return out;
    }

    double coefficient(const Monomial& m) const {
        auto it = coef_.find(m);
        return it == coef_.end() ? 0.0 : it->second;
    }

    const Map& terms() const { return coef_; }

    static double var_value(const Var& v, const Observation& z) {
        return v.is_indicator() ? (z[v.feature] == v.level ? 1.0 : 0.0) : z[v.feature];
    }

    double evaluate(const Observation& z) const {
        double s = 0.0;
        for (const auto& [m, c] : coef_) {
            double t = c;
            for (const auto& v : m) t *= var_value(v, z);
            s += t;
        }
        return s;
    }

    /// Replaces every variable for which `fix(feature)` holds with its value
    /// in `z`.
    template <class Pred>
    Polynomial substitute(Pred fix, const Observation& z) const {
        Polynomial out;
        for (const auto& [m, c] : coef_) {
            Monomial rest;
            double k = c;
            for (const auto& v : m) {
                if (fix(v.feature))
                    k *= var_value(v, z);
                else
                    rest.push_back(v);
            }
            out.add(std::move(rest), k);
        }
        return out;
    }

private:
    Map coef_;
};

namespace detail {

inline Polynomial factor_polynomial(const SurrogateModel& s, std::size_t f, int level) {
    Polynomial p;
    if (level >= 0) {
        p.add({Var{f, level}}, 1.0);
        if (s.shifted && s.origin[f] == level) p.add({}, -1.0);
    } else {
        p.add({Var{f, -1}}, 1.0);
        const double o = s.origin.size() ? s.origin[f] : 0.0;
        if (o != 0.0) p.add({}, -o);
    }
    return p;
}

}  // namespace detail

/// Expands the model's score into absolute coordinates.
inline Polynomial expand(const SurrogateModel& s) {
    Polynomial poly;
    poly.add({}, s.intercept);
    for (std::size_t i = 0; i < s.terms.size(); ++i) {
        const auto& t = s.terms[i];
        Polynomial p;
        switch (t.kind) {
            case TermKind::linear: p = detail::factor_polynomial(s, t.a, -1); break;
            case TermKind::quadratic:
                p = detail::factor_polynomial(s, t.a, -1) * detail::factor_polynomial(s, t.a, -1);
                break;
            case TermKind::interaction:
                p = detail::factor_polynomial(s, t.a, -1) * detail::factor_polynomial(s, t.b, -1);
                break;
            case TermKind::indicator: p = detail::factor_polynomial(s, t.a, t.level); break;
        }
        poly += p.scaled(s.coefficients[i]);
    }
    return poly;
}

/// Rebuilds an unshifted model from a polynomial, keeping `like`'s family,
/// features, center and statistics. Zero coefficients are dropped.
inline SurrogateModel from_polynomial(const Polynomial& poly, const SurrogateModel& like) {
    SurrogateModel out;
    out.family = like.family;
    out.features = like.features;
    out.origin = Observation(std::vector<double>(like.features.size(), 0.0));
    out.shifted = false;
    out.center = like.center;
    out.center_response = like.center_response;
    out.centered = like.centered;
    out.stats = like.stats;
    for (const auto& [m, c] : poly.terms()) {
        if (m.empty()) {
            out.intercept = c;
            continue;
        }
        if (c == 0.0) continue;
        Term t;
        if (m.size() == 1 && m[0].is_indicator()) {
            t = Term::indicator(m[0].feature, m[0].level);
        } else if (m.size() == 1) {
            t = Term::linear(m[0].feature);
        } else if (m[0].is_indicator() || m[1].is_indicator()) {
            throw FitError("unsupported_term", "indicator products have no term representation");
        } else if (m[0].feature == m[1].feature) {
            t = Term::quadratic(m[0].feature);
        } else {
            t = Term::interaction(m[0].feature, m[1].feature);
        }
        out.terms.push_back(t);
        out.coefficients.push_back(c);
    }
    // First-degree terms ahead of second-degree ones; map order within each.
    std::vector<std::size_t> order(out.terms.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    auto degree = [&](std::size_t i) {
        const auto k = out.terms[i].kind;
        return k == TermKind::linear || k == TermKind::indicator ? 1 : 2;
    };
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return degree(a) < degree(b); });
    std::vector<Term> terms;
    std::vector<double> coefs;
    for (std::size_t i : order) {
        terms.push_back(out.terms[i]);
        coefs.push_back(out.coefficients[i]);
    }
    out.terms = std::move(terms);
    out.coefficients = std::move(coefs);
    return out;
}

/// Re-expresses the model in the `keep` features only, substituting x's
/// values for every other feature. Evaluations at points that agree with x
/// outside `keep` are unchanged.
inline SurrogateModel simplify(const SurrogateModel& s, const std::vector<std::string>& keep,
                               const Observation& x) {
    if (keep.empty()) throw PreconditionError("simplify needs at least one feature to keep");
    std::vector<bool> kept(s.features.size(), false);
    for (const auto& name : keep) {
        auto it = std::find_if(s.features.begin(), s.features.end(),
                               [&](const FeatureSpec& f) { return f.name == name; });
        if (it == s.features.end()) throw PreconditionError("unknown feature '" + name + "'");
        kept[static_cast<std::size_t>(it - s.features.begin())] = true;
    }
    bool needs_substitution = false;
    for (std::size_t f = 0; f < s.features.size(); ++f)
        needs_substitution = needs_substitution || (!kept[f] && s.uses_feature(f));
    if (!needs_substitution) return s;
    auto poly = expand(s).substitute([&](std::size_t f) { return !kept[f]; }, x);
    return from_polynomial(poly, s);
}

/// Human-readable equation in absolute coordinates, e.g.
///     logit(p) = -0.8 + 1.73 Glucose + 0.25 BloodPressure - 0.31 Glucose^2
inline std::string equation(const SurrogateModel& s, int precision = 4) {
    const auto flat = from_polynomial(expand(s), s);
    auto num = [&](double v) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.*g", precision, v);
        return std::string(buf);
    };
    std::string out = s.family == Family::logistic ? "logit(p) = " : "y = ";
    out += num(flat.intercept);
    for (std::size_t i = 0; i < flat.terms.size(); ++i) {
        const double c = flat.coefficients[i];
        out += c < 0 ? " - " : " + ";
        out += num(std::abs(c)) + " " + term_name(flat.terms[i], s.features);
    }
    return out;
}

/// Plain-text model form (absolute coordinates):
///
///     family = logistic
///     intercept = -0.8
///     term Glucose = 1.73
///     term Glucose^2 = -0.31
///     term Glucose*BMI = 0.1
///     term Colour=red = 0.2
inline std::string to_text(const SurrogateModel& s) {
    const auto flat = from_polynomial(expand(s), s);
    std::ostringstream out;
    out.precision(17);
    out << "family = " << to_string(s.family) << '\n';
    out << "intercept = " << flat.intercept << '\n';
    for (std::size_t i = 0; i < flat.terms.size(); ++i)
        out << "term " << term_name(flat.terms[i], s.features) << " = " << flat.coefficients[i]
            << '\n';
    return out.str();
}

inline SurrogateModel parse_model_text(std::istream& in, const std::vector<FeatureSpec>& features) {
    SurrogateModel s;
    s.features = features;
    s.origin = Observation(std::vector<double>(features.size(), 0.0));
    auto feature_of = [&](const std::string& name) {
        for (std::size_t j = 0; j < features.size(); ++j)
            if (features[j].name == name) return j;
        throw DataError("model text names unknown feature '" + name + "'");
    };
    std::string line;
    while (std::getline(in, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto text = detail::trim(line);
        if (text.empty()) continue;
        auto eq = text.rfind('=');
        if (eq == std::string::npos) throw DataError("model text: expected '=' in '" + text + "'");
        auto key = detail::trim(std::string_view(text).substr(0, eq));
        auto value = detail::trim(std::string_view(text).substr(eq + 1));
        if (key == "family") {
            if (value == "logistic")
                s.family = Family::logistic;
            else if (value == "multiple")
                s.family = Family::multiple;
            else
                throw DataError("model text: unknown family '" + value + "'");
            continue;
        }
        auto v = detail::parse_real(value);
        if (!v) throw DataError("model text: bad coefficient '" + value + "'");
        if (key == "intercept") {
            s.intercept = *v;
            continue;
        }
        if (key.rfind("term ", 0) != 0) throw DataError("model text: unknown key '" + key + "'");
        auto name = detail::trim(std::string_view(key).substr(5));
        Term t;
        if (auto p = name.find('*'); p != std::string::npos) {
            t = Term::interaction(feature_of(detail::trim(name.substr(0, p))),
                                  feature_of(detail::trim(name.substr(p + 1))));
        } else if (auto q = name.find("^2"); q != std::string::npos) {
            t = Term::quadratic(feature_of(detail::trim(name.substr(0, q))));
        } else if (auto e = name.find('='); e != std::string::npos) {
            const auto f = feature_of(detail::trim(name.substr(0, e)));
            const int level = features[f].level_index(detail::trim(name.substr(e + 1)));
            if (level < 0) throw DataError("model text: unknown level in '" + name + "'");
            t = Term::indicator(f, level);
        } else {
            t = Term::linear(feature_of(name));
        }
        s.terms.push_back(t);
        s.coefficients.push_back(*v);
    }
    return s;
}

// ---------------------------------------------------------------------------
// Fitting.

struct TermPool {
    bool quadratic = true;
    bool interaction = true;
    bool indicator = true;
};

struct FitOptions {
    Family family = Family::multiple;
    std::size_t max_terms = 14;
    TermPool pool;
    bool centering = true;
    bool linear_only = false;        // linear and indicator terms only
    double min_improvement = 1e-6;   // stop when the criterion improves less
    int max_iterations = 100;        // logistic IRLS cap
    double tolerance = 1e-8;         // logistic coefficient-change convergence
    double clip = 1e-6;              // logistic targets clipped to [clip, 1 - clip]
};

/// All regressors the pool allows, in a fixed order: linear, indicators,
/// quadratics, interactions.
inline std::vector<Term> candidate_terms(const std::vector<FeatureSpec>& features,
                                         const TermPool& pool, bool linear_only = false) {
    std::vector<Term> out;
    for (std::size_t j = 0; j < features.size(); ++j)
        if (features[j].is_numeric()) out.push_back(Term::linear(j));
    if (pool.indicator) {
        for (std::size_t j = 0; j < features.size(); ++j) {
            const auto& f = features[j];
            if (f.is_numeric()) continue;
            const int ref = f.reference_level();
            for (int l = 0; l < static_cast<int>(f.levels.size()); ++l)
                if (l != ref) out.push_back(Term::indicator(j, l));
        }
    }
    if (linear_only) return out;
    if (pool.quadratic)
        for (std::size_t j = 0; j < features.size(); ++j)
            if (features[j].is_numeric()) out.push_back(Term::quadratic(j));
    if (pool.interaction)
        for (std::size_t j = 0; j < features.size(); ++j)
            for (std::size_t k = j + 1; k < features.size(); ++k)
                if (features[j].is_numeric() && features[k].is_numeric())
                    out.push_back(Term::interaction(j, k));
    return out;
}

namespace detail {

/// Design over every candidate column, plus an intercept column in front
/// when the fit is unconstrained.
struct Design {
    Eigen::MatrixXd a;   // n x (intercept? + candidates)
    Eigen::VectorXd w;
    Eigen::VectorXd y;   // response (multiple: y - y_x when centered)
    bool has_intercept = false;
    Eigen::MatrixXd gram;  // A' W A
    Eigen::VectorXd aty;   // A' W y
    double yty = 0.0;

    std::size_t first_candidate() const { return has_intercept ? 1 : 0; }
};

inline bool full_rank(const Eigen::MatrixXd& g) {
    if (g.rows() == 0) return true;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(g);
    qr.setThreshold(1e-12);
    return qr.rank() == g.rows();
}

inline Eigen::MatrixXd sub_gram(const Design& d, const std::vector<Eigen::Index>& cols) {
    const auto p = static_cast<Eigen::Index>(cols.size());
    Eigen::MatrixXd g(p, p);
    for (Eigen::Index i = 0; i < p; ++i)
        for (Eigen::Index j = 0; j < p; ++j) g(i, j) = d.gram(cols[i], cols[j]);
    return g;
}

struct SubsetFit {
    bool ok = false;
    double criterion = std::numeric_limits<double>::infinity();
    Eigen::VectorXd beta;  // aligned with the column list
};

/// Weighted least squares from the precomputed Gram matrix.
inline SubsetFit fit_multiple(const Design& d, const std::vector<Eigen::Index>& cols) {
    SubsetFit r;
    const auto p = static_cast<Eigen::Index>(cols.size());
    if (p == 0) {
        r.ok = true;
        r.criterion = d.yty;
        r.beta = Eigen::VectorXd();
        return r;
    }
    const Eigen::MatrixXd g = sub_gram(d, cols);
    if (!full_rank(g)) return r;
    Eigen::VectorXd b(p);
    for (Eigen::Index i = 0; i < p; ++i) b(i) = d.aty(cols[i]);
    r.beta = g.ldlt().solve(b);
    if (!r.beta.allFinite()) return r;
    r.criterion = std::max(0.0, d.yty - r.beta.dot(b));
    r.ok = true;
    return r;
}

inline double weighted_deviance(const Eigen::VectorXd& t, const Eigen::VectorXd& mu,
                                const Eigen::VectorXd& w) {
    double dev = 0.0;
    for (Eigen::Index i = 0; i < t.size(); ++i) {
        const double m = std::clamp(mu(i), 1e-15, 1.0 - 1e-15);
        const double ti = t(i);
        double term = 0.0;
        if (ti > 0.0) term += ti * std::log(ti / m);
        if (ti < 1.0) term += (1.0 - ti) * std::log((1.0 - ti) / (1.0 - m));
        dev += w(i) * term;
    }
    return 2.0 * dev;
}

/// Newton / IRLS on soft targets with a fixed offset and step halving.
inline SubsetFit fit_logistic(const Design& d, const std::vector<Eigen::Index>& cols, double offset,
                              Eigen::VectorXd beta, const FitOptions& opts) {
    SubsetFit r;
    const auto n = d.a.rows();
    const auto p = static_cast<Eigen::Index>(cols.size());
    Eigen::MatrixXd x(n, p);
    for (Eigen::Index j = 0; j < p; ++j) x.col(j) = d.a.col(cols[j]);
    if (beta.size() != p) beta = Eigen::VectorXd::Zero(p);
    if (p > 0 && !full_rank(sub_gram(d, cols))) return r;

    auto mean = [&](const Eigen::VectorXd& b) {
        Eigen::VectorXd eta = Eigen::VectorXd::Constant(n, offset);
        if (p > 0) eta += x * b;
        return eta.unaryExpr([](double e) { return sigmoid(e); }).eval();
    };
    Eigen::VectorXd mu = mean(beta);
    double dev = weighted_deviance(d.y, mu, d.w);
    if (p == 0) {
        r.ok = true;
        r.criterion = dev;
        r.beta = beta;
        return r;
    }
    for (int it = 0; it < opts.max_iterations; ++it) {
        Eigen::VectorXd v = (mu.array() * (1.0 - mu.array())).max(1e-12).matrix();
        Eigen::VectorXd wv = d.w.cwiseProduct(v);
        Eigen::MatrixXd h = x.transpose() * wv.asDiagonal() * x;
        Eigen::VectorXd grad = x.transpose() * d.w.cwiseProduct(d.y - mu);
        Eigen::LDLT<Eigen::MatrixXd> ldlt(h);
        if (ldlt.info() != Eigen::Success) return r;
        Eigen::VectorXd step = ldlt.solve(grad);
        if (!step.allFinite()) return r;
        double scale = 1.0;
        Eigen::VectorXd next;
        Eigen::VectorXd next_mu;
        double next_dev = dev;
        for (int halving = 0; halving < 40; ++halving) {
            next = beta + scale * step;
            next_mu = mean(next);
            next_dev = weighted_deviance(d.y, next_mu, d.w);
            if (next_dev <= dev + 1e-12 * (1.0 + dev)) break;
            scale *= 0.5;
        }
        const double change = (scale * step).cwiseAbs().maxCoeff();
        beta = std::move(next);
        mu = std::move(next_mu);
        dev = next_dev;
        if (change < opts.tolerance) {
            r.ok = true;
            r.criterion = dev;
            r.beta = beta;
            return r;
        }
    }
    r.beta = beta;
    return r;  // not converged
}

}  // namespace detail

/// Forward-stepwise weighted regression of `y` on the candidate terms.
///
/// With `opts.centering` the model is constrained through (x, y_x): terms are
/// taken relative to x and the intercept is fixed at y_x (multiple) or
/// logit(y_x) (logistic). Each step adds the candidate with the lowest
/// weighted residual sum of squares (multiple) or weighted deviance
/// (logistic); selection stops at `max_terms` or when the improvement drops
/// below `min_improvement`. Candidate columns with zero weighted variance
/// are discarded up front.
inline SurrogateModel fit_surrogate(std::span<const Observation> points, std::span<const double> y,
                                    std::span<const double> w, const Observation& x, double y_x,
                                    const std::vector<FeatureSpec>& features, const FitOptions& opts,
                                    std::vector<Term> candidates = {}) {
    const auto n = static_cast<Eigen::Index>(points.size());
    if (n == 0) throw PreconditionError("cannot fit a surrogate on an empty neighbourhood");
    if (y.size() != points.size() || w.size() != points.size())
        throw PreconditionError("responses and weights must match the points");
    if (opts.max_terms < 1) throw PreconditionError("max_terms must be >= 1");
    if (x.size() != features.size()) throw PreconditionError("x does not match the schema");
    const bool logistic = opts.family == Family::logistic;
    if (logistic)
        for (double v : y)
            if (!(v >= 0.0 && v <= 1.0))
                throw PreconditionError("logistic surrogate needs responses in [0, 1]");

    SurrogateModel model;
    model.family = opts.family;
    model.features = features;
    model.center = x;
    model.center_response = y_x;
    model.centered = opts.centering;
    model.shifted = opts.centering;
    model.origin = opts.centering ? x : Observation(std::vector<double>(features.size(), 0.0));

    if (candidates.empty()) candidates = candidate_terms(features, opts.pool, opts.linear_only);

    detail::Design d;
    d.has_intercept = !opts.centering;
    d.w = Eigen::Map<const Eigen::VectorXd>(w.data(), n);
    Eigen::VectorXd yy = Eigen::Map<const Eigen::VectorXd>(y.data(), n);
    const double clipped_yx = std::clamp(y_x, opts.clip, 1.0 - opts.clip);
    const double offset = logistic && opts.centering ? logit(clipped_yx) : 0.0;
    if (logistic)
        d.y = yy.unaryExpr([&](double v) { return std::clamp(v, opts.clip, 1.0 - opts.clip); });
    else
        d.y = opts.centering ? (yy.array() - y_x).matrix() : yy;

    // Candidate columns, dropping degenerate ones.
    const double wsum = d.w.sum();
    std::vector<Eigen::VectorXd> cols;
    std::vector<Term> kept;
    for (const auto& t : candidates) {
        Eigen::VectorXd c(n);
        for (Eigen::Index i = 0; i < n; ++i) c(i) = model.term_value(t, points[static_cast<std::size_t>(i)]);
        const double mean = d.w.dot(c) / wsum;
        const double var = d.w.dot((c.array() - mean).square().matrix()) / wsum;
        if (var > 1e-12) {
            cols.push_back(std::move(c));
            kept.push_back(t);
        }
    }
    const std::size_t first = d.first_candidate();
    d.a.resize(n, static_cast<Eigen::Index>(first + cols.size()));
    if (d.has_intercept) d.a.col(0).setOnes();
    for (std::size_t k = 0; k < cols.size(); ++k) d.a.col(static_cast<Eigen::Index>(first + k)) = cols[k];
    const Eigen::MatrixXd aw = d.a.transpose() * d.w.asDiagonal();
    d.gram = aw * d.a;
    d.aty = aw * d.y;
    d.yty = d.y.dot(d.w.cwiseProduct(d.y));

    std::vector<Eigen::Index> selected;
    if (d.has_intercept) selected.push_back(0);
    std::vector<bool> used(kept.size(), false);
    Eigen::VectorXd beta;

    auto run = [&](const std::vector<Eigen::Index>& sel, const Eigen::VectorXd& warm) {
        if (!logistic) return detail::fit_multiple(d, sel);
        return detail::fit_logistic(d, sel, offset, warm, opts);
    };
    auto current = run(selected, Eigen::VectorXd());
    if (!current.ok) throw FitError("non_convergent", "baseline surrogate fit failed");
    beta = current.beta;

    while (selected.size() - first < opts.max_terms) {
        std::optional<std::size_t> best;
        detail::SubsetFit best_fit;
        for (std::size_t k = 0; k < kept.size(); ++k) {
            if (used[k]) continue;
            auto trial = selected;
            trial.push_back(static_cast<Eigen::Index>(first + k));
            Eigen::VectorXd warm(beta.size() + 1);
            warm << beta, 0.0;
            auto r = run(trial, warm);
            if (r.ok && r.criterion < best_fit.criterion) {
                best = k;
                best_fit = std::move(r);
            }
        }
        if (!best || current.criterion - best_fit.criterion < opts.min_improvement) break;
        used[*best] = true;
        selected.push_back(static_cast<Eigen::Index>(first + *best));
        current = std::move(best_fit);
        beta = current.beta;
    }

    if (!current.ok) throw FitError("non_convergent", "surrogate fit did not converge");
    if (!beta.allFinite()) throw FitError("singular_design", "non-finite surrogate coefficients");

    std::size_t bi = 0;
    if (d.has_intercept) model.intercept = beta(static_cast<Eigen::Index>(bi++));
    else model.intercept = logistic ? offset : y_x;
    for (std::size_t s = first; s < selected.size(); ++s) {
        model.terms.push_back(kept[static_cast<std::size_t>(selected[s]) - first]);
        model.coefficients.push_back(beta(static_cast<Eigen::Index>(bi++)));
    }

    // Statistics on the response scale.
    double rss = 0.0, tss = 0.0;
    const double ybar = Eigen::Map<const Eigen::VectorXd>(y.data(), n).dot(d.w) / wsum;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double pred = model.evaluate(points[static_cast<std::size_t>(i)]);
        rss += d.w(i) * (yy(i) - pred) * (yy(i) - pred);
        tss += d.w(i) * (yy(i) - ybar) * (yy(i) - ybar);
    }
    model.stats.points = static_cast<std::size_t>(n);
    model.stats.weighted_residual_norm = std::sqrt(rss);
    if (tss > 0.0) {
        model.stats.r2 = 1.0 - rss / tss;
        const double dof = static_cast<double>(n) - static_cast<double>(model.terms.size()) - 1.0;
        if (dof > 0.0)
            model.stats.adjusted_r2 = 1.0 - (1.0 - model.stats.r2) * (static_cast<double>(n) - 1.0) / dof;
    }
    if (logistic) model.stats.deviance = current.criterion;
    return model;
}

inline SurrogateModel fit(const NeighbourhoodDataset& nbd, const Observation& x, double y_x,
                          const std::vector<FeatureSpec>& features, const FitOptions& opts) {
    return fit_surrogate(nbd.points, nbd.responses, nbd.weights, x, y_x, features, opts);
}

}  // namespace clear
