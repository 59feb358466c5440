#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "clear/explain.hpp"
#include "clear/json_io.hpp"

namespace clear {

struct RunConfig {
    ExplainConfig explain;
    std::vector<std::uint64_t> seeds{1};
    std::size_t test_count = 100;
    /// LIME runs try every width here and report the best one. Empty means
    /// use explain.lime.kernel_width only.
    std::vector<double> kernel_widths{1.5, 2.0, 3.0, 4.0};
    bool keep_neighbourhoods = false;

    void validate() const {
        const auto& e = explain;
        if (test_count < 1) throw PreconditionError("test_count must be >= 1");
        if (seeds.empty()) throw PreconditionError("seeds must not be empty");
        if (!(0.0 < e.b1 && e.b1 < e.b2 && e.b2 < 1.0))
            throw PreconditionError("band margins must satisfy 0 < b1 < b2 < 1");
        if (e.neighbourhood_size < 3) throw PreconditionError("neighbourhood_size must be >= 3");
        if (e.pool_size < 1) throw PreconditionError("pool_size must be >= 1");
        if (e.max_terms < 1) throw PreconditionError("max_terms must be >= 1");
        if (!(e.threshold_T > 0.0)) throw PreconditionError("T must be positive");
        if (!(e.cf_weight > 0.0)) throw PreconditionError("cf_weight must be positive");
        if (e.search.steps < 2) throw PreconditionError("search steps must be >= 2");
        if (!(e.search.refine_tol > 0.0)) throw PreconditionError("refine_tol must be positive");
        if (!(e.search.threshold > 0.0 && e.search.threshold < 1.0))
            throw PreconditionError("boundary threshold must lie in (0, 1)");
        if (!(e.lime.kernel_width > 0.0)) throw PreconditionError("kernel width must be positive");
        if (e.lime.sample_count < 1) throw PreconditionError("LIME sample_count must be >= 1");
        for (double w : kernel_widths)
            if (!(w > 0.0)) throw PreconditionError("kernel widths must be positive");
    }
};

struct ObservationFailure {
    std::size_t observation = 0;
    std::uint64_t seed = 0;
    std::string kind;
    std::string message;
};

struct SeedSummary {
    std::uint64_t seed = 0;
    std::size_t records = 0;
    std::size_t feasible = 0;
    std::size_t within = 0;
    double percent_fidelity = std::numeric_limits<double>::quiet_NaN();
    double seconds = 0.0;
};

struct ObservationResult {
    std::size_t index = 0;  // row of the test partition
    Observation x;          // raw units
    std::vector<std::uint64_t> seeds;
    std::vector<Explanation> explanations;  // parallel to `seeds`
};

struct WidthResult {
    double width = 0.0;
    double mean = std::numeric_limits<double>::quiet_NaN();
    double standard_error = std::numeric_limits<double>::quiet_NaN();
};

struct BatchResult {
    RunConfig config;
    std::vector<FeatureSpec> raw_features;
    std::vector<std::string> class_names;
    std::vector<ObservationResult> observations;
    std::vector<SeedSummary> seeds;
    double mean = std::numeric_limits<double>::quiet_NaN();
    double standard_error = std::numeric_limits<double>::quiet_NaN();
    std::vector<ObservationFailure> failures;
    double kernel_width = std::numeric_limits<double>::quiet_NaN();  // LIME only
    std::vector<WidthResult> width_sweep;
    double mean_abs_gap_at_x = std::numeric_limits<double>::quiet_NaN();
    double seconds = 0.0;
};

/// Mean and standard error (sample standard deviation / sqrt(k)) of the
/// finite values. A single value has standard error 0.
inline std::pair<double, double> mean_and_standard_error(const std::vector<double>& values) {
    std::vector<double> v;
    for (double x : values)
        if (std::isfinite(x)) v.push_back(x);
    if (v.empty()) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
    double sum = 0.0;
    for (double x : v) sum += x;
    const double mean = sum / static_cast<double>(v.size());
    if (v.size() == 1) return {mean, 0.0};
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
    return {mean, sd / std::sqrt(static_cast<double>(v.size()))};
}

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

/// One pass over all seeds with a fixed explain config. `searches[i]` holds
/// the boundary searches for observation i, or is empty when the search itself failed.
inline BatchResult run_fixed(const RunConfig& cfg, const StandardizedProblem& problem,
                             const std::vector<Observation>& xs,
                             const std::vector<std::vector<SearchResult>>& searches,
                             const std::vector<ObservationFailure>& search_failures) {
    const auto t0 = Clock::now();
    BatchResult out;
    out.config = cfg;
    out.raw_features = problem.raw_features;
    out.class_names = problem.train.class_names;
    out.observations.resize(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        out.observations[i].index = i;
        out.observations[i].x = xs[i];
    }
    std::vector<bool> search_failed(xs.size(), false);
    for (const auto& f : search_failures) search_failed[f.observation] = true;

    double gap_sum = 0.0;
    std::size_t gap_n = 0;
    std::vector<double> per_seed;
    for (std::uint64_t seed : cfg.seeds) {
        const auto ts = Clock::now();
        SeedSummary summary;
        summary.seed = seed;
        for (const auto& f : search_failures) {
            auto g = f;
            g.seed = seed;
            out.failures.push_back(std::move(g));
        }
        std::vector<FidelityRecord> records;
        SyntheticPool pool;
        bool pool_ok = true;
        try {
            pool = make_pool(problem, cfg.explain, seed);
        } catch (const Error& e) {
            pool_ok = false;
            for (std::size_t i = 0; i < xs.size(); ++i)
                if (!search_failed[i]) out.failures.push_back({i, seed, e.kind(), e.what()});
        }
        for (std::size_t i = 0; pool_ok && i < xs.size(); ++i) {
            if (search_failed[i]) continue;
            try {
                auto ex = explain(problem, xs[i], pool, cfg.explain, &searches[i]);
                if (!cfg.keep_neighbourhoods)
                    for (auto& t : ex.targets) {
                        const auto n = t.neighbourhood.size();
                        t.neighbourhood = NeighbourhoodDataset{};
                        t.neighbourhood.points.resize(n);  // size kept for reporting
                    }
                for (const auto& t : ex.targets) {
                    gap_sum += std::abs(t.regression_at_x - t.model_probability);
                    ++gap_n;
                }
                auto recs = ex.fidelity_records();
                records.insert(records.end(), recs.begin(), recs.end());
                out.observations[i].seeds.push_back(seed);
                out.observations[i].explanations.push_back(std::move(ex));
            } catch (const Error& e) {
                out.failures.push_back({i, seed, e.kind(), e.what()});
            }
        }
        summary.records = records.size();
        for (const auto& r : records) {
            summary.feasible += r.feasible;
            summary.within += r.feasible && r.error < cfg.explain.threshold_T;
        }
        if (summary.feasible > 0) summary.percent_fidelity = percent_fidelity(records, cfg.explain.threshold_T);
        summary.seconds = seconds_since(ts);
        per_seed.push_back(summary.percent_fidelity);
        out.seeds.push_back(summary);
    }
    std::tie(out.mean, out.standard_error) = mean_and_standard_error(per_seed);
    if (gap_n) out.mean_abs_gap_at_x = gap_sum / static_cast<double>(gap_n);
    out.seconds = seconds_since(t0);
    return out;
}

}  // namespace detail

/// Boundary searches for the first `count` observations, keeping failures apart.
inline std::vector<std::vector<SearchResult>> search_batch(const StandardizedProblem& problem,
                                                          const std::vector<Observation>& xs,
                                                          const SearchConfig& cfg,
                                                          std::vector<ObservationFailure>& failures) {
    std::vector<std::vector<SearchResult>> out(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        try {
            out[i] = search_all_targets(problem, xs[i], cfg);
        } catch (const Error& e) {
            failures.push_back({i, 0, e.kind(), e.what()});
        }
    }
    return out;
}

/// Explains the first cfg.test_count test rows (raw units) once per seed.
/// Boundary searches do not depend on the seed and run once per
/// observation. Per-observation errors are collected, not thrown.
///
/// For LIME with a non-empty `kernel_widths`, every width is run and the
/// one with the highest mean % fidelity is reported (first on ties).
inline BatchResult run_batch(const RunConfig& cfg, const StandardizedProblem& problem,
                             const std::vector<Observation>& test_rows,
                             const std::vector<std::vector<SearchResult>>* searches = nullptr) {
    cfg.validate();
    if (test_rows.size() < cfg.test_count)
        throw PreconditionError("test partition has " + std::to_string(test_rows.size()) +
                                " rows, test_count is " + std::to_string(cfg.test_count));
    const auto t0 = detail::Clock::now();
    std::vector<Observation> xs(test_rows.begin(),
                                test_rows.begin() + static_cast<std::ptrdiff_t>(cfg.test_count));
    for (const auto& x : xs) check_arity(x, problem.train);

    std::vector<ObservationFailure> search_failures;
    std::vector<std::vector<SearchResult>> local;
    if (!searches || searches->size() < xs.size()) {
        local = search_batch(problem, xs, cfg.explain.search, search_failures);
        searches = &local;
    }

    if (cfg.explain.method != Method::lime || cfg.kernel_widths.empty()) {
        auto r = detail::run_fixed(cfg, problem, xs, *searches, search_failures);
        if (cfg.explain.method == Method::lime) r.kernel_width = cfg.explain.lime.kernel_width;
        r.seconds = detail::seconds_since(t0);
        return r;
    }
    BatchResult best;
    std::vector<WidthResult> sweep;
    bool have = false;
    for (double w : cfg.kernel_widths) {
        RunConfig c = cfg;
        c.explain.lime.kernel_width = w;
        auto r = detail::run_fixed(c, problem, xs, *searches, search_failures);
        sweep.push_back({w, r.mean, r.standard_error});
        const bool better = !have || (std::isfinite(r.mean) && !(r.mean <= best.mean));
        if (better) {
            best = std::move(r);
            best.kernel_width = w;
            have = true;
        }
    }
    best.config = cfg;
    best.config.explain.lime.kernel_width = best.kernel_width;
    best.width_sweep = std::move(sweep);
    best.seconds = detail::seconds_since(t0);
    return best;
}

// ---------------------------------------------------------------------------
// Configuration grids.

struct NamedConfig {
    std::string name;
    RunConfig config;
};

/// The best configuration plus single-option departures from it, and LIME.
inline std::vector<NamedConfig> ablation_grid(const RunConfig& best) {
    std::vector<NamedConfig> grid;
    grid.push_back({"best", best});
    auto with = [&](const std::string& name, auto change) {
        RunConfig c = best;
        change(c.explain);
        grid.push_back({name, c});
    };
    with("imbalanced_neighbourhood", [](ExplainConfig& e) { e.balanced = false; });
    with("no_centering", [](ExplainConfig& e) { e.centering = false; });
    with("no_quadratic_terms", [](ExplainConfig& e) { e.terms.quadratic = false; });
    with("no_interaction_terms", [](ExplainConfig& e) { e.terms.interaction = false; });
    with("no_quadratic_and_interaction_terms", [](ExplainConfig& e) {
        e.terms.quadratic = false;
        e.terms.interaction = false;
    });
    with(best.explain.augmentation ? "no_counterfactual_augmentation" : "counterfactual_augmentation",
         [](ExplainConfig& e) { e.augmentation = !e.augmentation; });
    with(best.explain.family == Family::logistic ? "multiple_regression" : "logistic_regression",
         [](ExplainConfig& e) {
             e.family = e.family == Family::logistic ? Family::multiple : Family::logistic;
         });
    with("lime", [](ExplainConfig& e) { e.method = Method::lime; });
    return grid;
}

/// The base configuration at each max_terms value.
inline std::vector<NamedConfig> term_sweep(const RunConfig& base, const std::vector<std::size_t>& counts) {
    std::vector<NamedConfig> grid;
    for (std::size_t k : counts) {
        RunConfig c = base;
        c.explain.max_terms = k;
        grid.push_back({"max_terms=" + std::to_string(k), c});
    }
    return grid;
}

struct GridResult {
    std::string name;
    BatchResult result;
};

/// Runs every configuration on the same observations; boundary searches
/// are shared across configurations with the same search settings.
inline std::vector<GridResult> run_grid(const std::vector<NamedConfig>& grid,
                                        const StandardizedProblem& problem,
                                        const std::vector<Observation>& test_rows) {
    std::vector<GridResult> out;
    std::vector<std::vector<SearchResult>> shared;
    std::vector<ObservationFailure> failures;
    bool have_shared = false;
    SearchConfig shared_cfg;
    std::size_t shared_count = 0;
    for (const auto& nc : grid) {
        nc.config.validate();
        const auto& s = nc.config.explain.search;
        const bool reusable = have_shared && failures.empty() && shared_count >= nc.config.test_count &&
                              s.steps == shared_cfg.steps && s.refine_tol == shared_cfg.refine_tol &&
                              s.threshold == shared_cfg.threshold &&
                              s.range_margin == shared_cfg.range_margin;
        if (!reusable && test_rows.size() >= nc.config.test_count) {
            std::vector<Observation> xs(test_rows.begin(),
                                        test_rows.begin() + static_cast<std::ptrdiff_t>(nc.config.test_count));
            failures.clear();
            shared = search_batch(problem, xs, s, failures);
            shared_cfg = s;
            shared_count = nc.config.test_count;
            have_shared = true;
        }
        const bool use = have_shared && failures.empty() && shared_count >= nc.config.test_count;
        out.push_back({nc.name, run_batch(nc.config, problem, test_rows, use ? &shared : nullptr)});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Reports.

enum class ReportFormat { json, csv, html };

inline ReportFormat parse_report_format(const std::string& s) {
    if (s == "json") return ReportFormat::json;
    if (s == "csv") return ReportFormat::csv;
    if (s == "html") return ReportFormat::html;
    throw PreconditionError("unknown report format '" + s + "' (json, csv, html)");
}

inline json config_json(const RunConfig& cfg) {
    const auto& e = cfg.explain;
    json seeds = json::array();
    for (auto s : cfg.seeds) seeds.push_back(s);
    json widths = json::array();
    for (double w : cfg.kernel_widths) widths.push_back(w);
    return {{"method", to_string(e.method)},
            {"family", to_string(e.family)},
            {"balanced", e.balanced},
            {"centering", e.centering},
            {"use_counterfactual_augmentation", e.augmentation},
            {"cf_weight", e.cf_weight},
            {"quadratic", e.terms.quadratic},
            {"interaction", e.terms.interaction},
            {"indicator", e.terms.indicator},
            {"max_terms", e.max_terms},
            {"T", e.threshold_T},
            {"b1", e.b1},
            {"b2", e.b2},
            {"pool_size", e.pool_size},
            {"neighbourhood_size", e.neighbourhood_size},
            {"search_steps", e.search.steps},
            {"refine_tol", e.search.refine_tol},
            {"boundary_threshold", e.search.threshold},
            {"range_margin", e.search.range_margin},
            {"kernel_width", e.lime.kernel_width},
            {"lime_sample_count", e.lime.sample_count},
            {"kernel_widths", widths},
            {"seeds", seeds},
            {"test_count", cfg.test_count}};
}

/// Full machine-readable report. `timing` false omits every wall-clock
/// field so identical runs serialize identically.
inline json to_json(const BatchResult& r, bool timing = true) {
    const double T = r.config.explain.threshold_T;
    json seeds = json::array();
    for (const auto& s : r.seeds) {
        json j = {{"seed", s.seed},
                  {"records", s.records},
                  {"feasible", s.feasible},
                  {"within_threshold", s.within},
                  {"percent_fidelity", jsonio::real(s.percent_fidelity)}};
        if (timing) j["seconds"] = s.seconds;
        seeds.push_back(std::move(j));
    }
    json observations = json::array();
    for (const auto& o : r.observations) {
        json exps = json::array();
        for (std::size_t k = 0; k < o.explanations.size(); ++k) {
            json e = to_json(o.explanations[k], r.raw_features, r.class_names, T);
            e["seed"] = o.seeds[k];
            exps.push_back(std::move(e));
        }
        observations.push_back({{"index", o.index},
                                {"x", jsonio::named(o.x, r.raw_features)},
                                {"explanations", exps}});
    }
    json failures = json::array();
    for (const auto& f : r.failures)
        failures.push_back({{"observation", f.observation},
                            {"seed", f.seed},
                            {"kind", f.kind},
                            {"message", f.message}});
    json sweep = json::array();
    for (const auto& w : r.width_sweep)
        sweep.push_back({{"kernel_width", w.width},
                         {"mean", jsonio::real(w.mean)},
                         {"standard_error", jsonio::real(w.standard_error)}});
    json out = {{"schema_version", kSchemaVersion},
                {"kind", "batch_report"},
                {"config", config_json(r.config)},
                {"summary",
                 {{"percent_fidelity_mean", jsonio::real(r.mean)},
                  {"percent_fidelity_standard_error", jsonio::real(r.standard_error)},
                  {"repeats", r.seeds.size()},
                  {"observations", r.observations.size()},
                  {"failures", r.failures.size()},
                  {"mean_abs_gap_at_x", jsonio::real(r.mean_abs_gap_at_x)},
                  {"kernel_width", jsonio::real(r.kernel_width)}}},
                {"seeds", seeds},
                {"kernel_width_sweep", sweep},
                {"failures", failures},
                {"observations", observations}};
    if (timing) out["timing"] = {{"seconds", r.seconds}};
    return out;
}

inline json grid_json(const std::vector<GridResult>& grid, bool timing = true) {
    json rows = json::array();
    for (const auto& g : grid) {
        json row = {{"name", g.name},
                    {"config", config_json(g.result.config)},
                    {"percent_fidelity_mean", jsonio::real(g.result.mean)},
                    {"percent_fidelity_standard_error", jsonio::real(g.result.standard_error)},
                    {"failures", g.result.failures.size()},
                    {"kernel_width", jsonio::real(g.result.kernel_width)}};
        if (timing) row["seconds"] = g.result.seconds;
        rows.push_back(std::move(row));
    }
    return {{"schema_version", kSchemaVersion}, {"kind", "grid_report"}, {"rows", rows}};
}

namespace detail {

inline std::string csv_real(double v) {
    if (std::isnan(v)) return "";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::ostringstream s;
    s.precision(17);
    s << v;
    return s.str();
}

inline std::string html_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

inline std::string fmt(double v, int digits = 4) {
    if (!std::isfinite(v)) return std::isnan(v) ? "n/a" : "inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

}  // namespace detail

/// One FidelityRecord per row.
inline void write_csv(std::ostream& out, const BatchResult& r) {
    out << "observation,seed,target_class,feature,actual_delta,estimated_delta,error,feasible,"
           "within_threshold,status\n";
    for (const auto& o : r.observations)
        for (std::size_t k = 0; k < o.explanations.size(); ++k)
            for (const auto& rec : o.explanations[k].fidelity_records())
                out << o.index << ',' << o.seeds[k] << ',' << r.class_names.at(static_cast<std::size_t>(rec.target_class))
                    << ',' << rec.feature_name << ',' << detail::csv_real(rec.actual_delta) << ','
                    << detail::csv_real(rec.estimated_delta) << ',' << detail::csv_real(rec.error) << ','
                    << (rec.feasible ? 1 : 0) << ',' << (rec.within_threshold ? 1 : 0) << ','
                    << to_string(rec.status) << '\n';
}

/// Human-readable report: summary, then per observation (first seed) the
/// equation, actual and estimated b-perturbations and fidelity errors.
/// The failure section appears only when there are failures.
inline void write_html(std::ostream& out, const BatchResult& r, bool timing = true) {
    using detail::fmt;
    using detail::html_escape;
    const double T = r.config.explain.threshold_T;
    out << "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>Counterfactual fidelity report</title>\n"
           "<style>body{font-family:sans-serif;margin:2em}table{border-collapse:collapse;margin:.5em 0}"
           "td,th{border:1px solid #bbb;padding:2px 8px;text-align:right}th{background:#eee}"
           ".ok{background:#e3f6e3}.bad{background:#f9e0e0}code{font-size:110%}</style></head><body>\n";
    out << "<h1>Counterfactual fidelity report</h1>\n";
    out << "<p>Method: <b>" << to_string(r.config.explain.method) << "</b>, family "
        << to_string(r.config.explain.family) << ", T = " << fmt(T, 2) << ", "
        << r.observations.size() << " observations, " << r.seeds.size() << " repeats.</p>\n";
    out << "<p>% fidelity: <b>" << fmt(100 * r.mean, 1) << "%</b> &plusmn; "
        << fmt(100 * r.standard_error, 1) << " (standard error across repeats)";
    if (std::isfinite(r.kernel_width)) out << ", kernel width " << fmt(r.kernel_width, 2);
    out << ".</p>\n";
    if (timing) out << "<p>Wall time: " << fmt(r.seconds, 2) << " s.</p>\n";
    out << "<table><tr><th>seed</th><th>records</th><th>feasible</th><th>within T</th><th>% fidelity</th></tr>\n";
    for (const auto& s : r.seeds)
        out << "<tr><td>" << s.seed << "</td><td>" << s.records << "</td><td>" << s.feasible << "</td><td>"
            << s.within << "</td><td>" << fmt(100 * s.percent_fidelity, 1) << "</td></tr>\n";
    out << "</table>\n";

    for (const auto& o : r.observations) {
        out << "<h2>Observation " << o.index << "</h2>\n";
        if (o.explanations.empty()) {
            out << "<p>No explanation (see failures).</p>\n";
            continue;
        }
        const auto& ex = o.explanations.front();
        out << "<p>Seed " << o.seeds.front() << ". Predicted class <b>"
            << html_escape(r.class_names.at(static_cast<std::size_t>(ex.predicted_class))) << "</b>";
        out << " (p = " << fmt(ex.probabilities.at(static_cast<std::size_t>(ex.predicted_class)), 3) << ").</p>\n";
        for (const auto& t : ex.targets) {
            out << "<h3>Target class " << html_escape(r.class_names.at(static_cast<std::size_t>(t.target_class)))
                << "</h3>\n<p><code>" << html_escape(equation(t.regression)) << "</code></p>\n";
            out << "<p>Model probability at x " << fmt(t.model_probability) << ", regression estimate "
                << fmt(t.regression_at_x) << ".</p>\n";
            out << "<table><tr><th>feature</th><th>x value</th><th>b-counterfactual value</th>"
                   "<th>b-perturbation</th><th>estimated value</th><th>estimated b-perturbation</th>"
                   "<th>fidelity error</th><th>feasible</th></tr>\n";
            for (std::size_t i = 0; i < t.actual.size(); ++i) {
                const auto& a = t.actual[i];
                const auto& e = t.estimated[i];
                const auto& f = t.fidelity[i];
                out << "<tr class=\"" << (f.within_threshold ? "ok" : "bad") << "\"><td>"
                    << html_escape(a.feature_name) << "</td><td>" << fmt(a.original_value) << "</td><td>"
                    << fmt(a.boundary_value) << "</td><td>" << fmt(a.delta) << "</td><td>"
                    << (e.status == EstimateStatus::ok ? fmt(e.estimated_boundary_value) : to_string(e.status))
                    << "</td><td>" << fmt(e.estimated_delta) << "</td><td>" << fmt(f.error) << "</td><td>"
                    << (a.feasible ? "yes" : "no") << "</td></tr>\n";
            }
            out << "</table>\n";
        }
    }
    if (!r.failures.empty()) {
        out << "<h2>Failures</h2>\n<table><tr><th>observation</th><th>seed</th><th>kind</th><th>message</th></tr>\n";
        for (const auto& f : r.failures)
            out << "<tr><td>" << f.observation << "</td><td>" << f.seed << "</td><td>" << html_escape(f.kind)
                << "</td><td>" << html_escape(f.message) << "</td></tr>\n";
        out << "</table>\n";
    }
    out << "</body></html>\n";
}

inline void write_report(std::ostream& out, const BatchResult& r, ReportFormat format, bool timing = true) {
    switch (format) {
        case ReportFormat::json: out << to_json(r, timing).dump(2) << '\n'; break;
        case ReportFormat::csv: write_csv(out, r); break;
        case ReportFormat::html: write_html(out, r, timing); break;
    }
}

inline void write_report(const std::string& path, const BatchResult& r, ReportFormat format,
                         bool timing = true) {
    std::ofstream out(path);
    if (!out) throw Error("io_error", "cannot write report to '" + path + "'");
    write_report(out, r, format, timing);
    if (!out) throw Error("io_error", "failed while writing '" + path + "'");
}

}  // namespace clear
