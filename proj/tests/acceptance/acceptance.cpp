// Acceptance run: one PASS/FAIL line per criterion, with timing. Exit code
// is nonzero when any criterion fails.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "clear/batch.hpp"
#include "clear/config.hpp"
#include "../unit/test_support.hpp"

using namespace clear;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void report(const std::string& name, double budget_s, const std::function<Outcome()>& body) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(Clock::now() - t0).count();
    const bool in_time = s < budget_s;
    const bool pass = o.pass && in_time;
    if (!pass) ++failures;
    if (std::isfinite(budget_s))
        std::printf("%s  %-44s %s [%.1fs, budget %.0fs%s]\n", pass ? "PASS" : "FAIL", name.c_str(),
                    o.detail.c_str(), s, budget_s, in_time ? "" : ", over budget");
    else
        std::printf("%s  %-44s %s\n", pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
}

std::string pct(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f%%", 100 * v);
    return buf;
}

std::string num(double v, int digits = 4) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string sci(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1e", v);
    return buf;
}

// Every explanation fitted with centering must reproduce m(x) at x.
double worst_centering_gap = 0.0;
std::size_t centered_models = 0;

void note_centering(const BatchResult& r) {
    if (r.config.explain.method != Method::clear || !r.config.explain.centering) return;
    for (const auto& o : r.observations)
        for (const auto& ex : o.explanations)
            for (const auto& t : ex.targets) {
                worst_centering_gap = std::max(worst_centering_gap, std::abs(t.regression_at_x - t.model_probability));
                ++centered_models;
            }
}

BatchResult run(const RunConfig& cfg, const StandardizedProblem& p, const std::vector<Observation>& xs,
                const std::vector<std::vector<SearchResult>>* searches = nullptr) {
    auto r = run_batch(cfg, p, xs, searches);
    note_centering(r);
    return r;
}

// ---------------------------------------------------------------------------
// Oracles.

struct Oracle {
    StandardizedProblem problem;
    std::vector<Observation> xs;
};

Oracle linear_oracle(std::size_t d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    Eigen::VectorXd w(static_cast<Eigen::Index>(d));
    for (auto& v : w) v = nd(rng);
    if (w.norm() < 0.5) w *= 1.0 / w.norm();
    auto m = AnalyticClassifier::logistic(w, 0.3 * nd(rng));
    Oracle o{standardize_problem(tu::unit_dataset(d, -2.0, 2.0), m), {}};
    for (int i = 0; i < 50; ++i) o.xs.push_back(tu::random_point(rng, d, -1.8, 1.8));
    return o;
}

/// P(class 1) = sigmoid(k (R^2 - |x|^2)) on [-2, 2]^d: a circular (d = 2) or
/// spherical boundary.
Oracle sphere_oracle(std::size_t count, std::uint64_t seed, std::size_t d = 5) {
    const double k = 1.5, radius = 1.5;
    auto m = AnalyticClassifier::quadratic(Eigen::VectorXd::Zero(d), -k * Eigen::MatrixXd::Identity(d, d),
                                           k * radius * radius);
    Oracle o{standardize_problem(tu::unit_dataset(d, -2.0, 2.0), m), {}};
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> r(0.3, 2.4);
    while (o.xs.size() < count) {
        Observation x(std::vector<double>(d, 0.0));
        double norm = 0.0;
        for (auto& v : x.values) {
            v = nd(rng);
            norm += v * v;
        }
        const double scale = r(rng) / std::sqrt(norm);
        bool inside_box = true;
        for (auto& v : x.values) {
            v *= scale;
            inside_box = inside_box && std::abs(v) <= 2.0;
        }
        if (inside_box) o.xs.push_back(x);
    }
    return o;
}

RunConfig sphere_config() {
    RunConfig cfg;
    cfg.explain.family = Family::logistic;
    cfg.seeds = {1, 2, 3};
    cfg.test_count = 50;
    return cfg;
}

Workspace load(const std::string& name) {
    return prepare(load_settings(std::string(CLEAR_DATA_DIR) + "/" + name));
}

/// Standard error of per-seed paired differences b - a.
double paired_standard_error(const BatchResult& a, const BatchResult& b) {
    std::vector<double> diff;
    for (std::size_t i = 0; i < a.seeds.size(); ++i)
        diff.push_back(b.seeds[i].percent_fidelity - a.seeds[i].percent_fidelity);
    return mean_and_standard_error(diff).second;
}

// ---------------------------------------------------------------------------
// Property checks (independent brute-force oracles).

Outcome neighbourhood_property() {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> prob(0.0, 1.0);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t d = 1 + trial % 5;
        SyntheticPool pool;
        const std::size_t size = 80 + trial % 300;
        pool.probabilities.resize(static_cast<Eigen::Index>(size), 2);
        for (std::size_t i = 0; i < size; ++i) {
            pool.observations.push_back(tu::random_point(rng, d, -2, 2));
            double q = prob(rng);
            if (q == 0.0) q = 0.5;
            pool.probabilities(static_cast<Eigen::Index>(i), 1) = q;
            pool.probabilities(static_cast<Eigen::Index>(i), 0) = 1 - q;
        }
        auto fs = tu::unit_dataset(d).features;
        auto x = tu::random_point(rng, d, -2, 2);
        const std::size_t n = 3 + trial % 60;
        NeighbourhoodDataset nbd;
        try {
            nbd = balanced_neighbourhood(pool, x, fs, 1, 0.4, 0.6, n);
        } catch (const BandStarvationError&) {
            continue;
        }
        std::array<std::vector<std::pair<double, std::size_t>>, 3> bands;
        for (std::size_t i = 0; i < size; ++i) {
            const double q = pool.probability(i, 1);
            const std::size_t b = q <= 0.4 ? 0 : q <= 0.6 ? 1 : 2;
            double dist = 0.0;
            for (std::size_t j = 0; j < d; ++j) dist += (pool.observations[i][j] - x[j]) * (pool.observations[i][j] - x[j]);
            bands[b].push_back({std::sqrt(dist), i});
        }
        std::vector<Observation> expected;
        const std::size_t base = n / 3, extra = n % 3;
        for (std::size_t b = 0; b < 3; ++b) {
            std::sort(bands[b].begin(), bands[b].end());
            const std::size_t quota = base + (b < extra ? 1 : 0);
            for (std::size_t k = 0; k < std::min(quota, bands[b].size()); ++k)
                expected.push_back(pool.observations[bands[b][k].second]);
        }
        if (nbd.points.size() != expected.size())
            return {false, "trial " + std::to_string(trial) + ": size mismatch"};
        for (std::size_t i = 0; i < expected.size(); ++i) {
            for (std::size_t j = 0; j < d; ++j)
                if (nbd.points[i][j] != expected[i][j])
                    return {false, "trial " + std::to_string(trial) + ": selection differs from brute force"};
            const double q = nbd.responses[i];
            const int b = q <= 0.4 ? 0 : q <= 0.6 ? 1 : 2;
            if (nbd.band_of[i] != b) return {false, "trial " + std::to_string(trial) + ": band label wrong"};
        }
    }
    return {true, "1000 random pools match brute-force sort"};
}

Outcome root_selection_property() {
    std::mt19937_64 rng(77);
    std::normal_distribution<double> nd;
    auto fs = tu::unit_dataset(3).features;
    int solved = 0;
    for (int trial = 0; trial < 3000; ++trial) {
        SurrogateModel s;
        s.family = trial % 2 ? Family::logistic : Family::multiple;
        s.features = fs;
        s.intercept = nd(rng);
        for (const auto& t : candidate_terms(fs, {})) {
            s.terms.push_back(t);
            s.coefficients.push_back(nd(rng));
        }
        s.origin = Observation(std::vector<double>(3, 0.0));
        BPerturbation bp;
        bp.feature = static_cast<std::size_t>(trial % 3);
        bp.counterfactual_point = tu::random_point(rng, 3, -2, 2);
        bp.original_value = bp.counterfactual_point[bp.feature] + 0.3 * nd(rng);
        auto e = estimate_b_perturbation(s, bp);
        if (e.status != EstimateStatus::ok) continue;
        ++solved;
        // Brute force: every root of the univariate boundary polynomial,
        // recovered by sampling the surrogate on a fine grid.
        Observation at = bp.counterfactual_point;
        auto g = [&](double v) {
            at[bp.feature] = v;
            const double y = s.evaluate(at);
            return y - 0.5;
        };
        const double chosen = std::abs(e.estimated_boundary_value - bp.original_value);
        for (double v = -30.0; v < 30.0; v += 0.001)
            if ((g(v) <= 0) != (g(v + 0.001) <= 0) && std::abs(v - bp.original_value) + 0.001 < chosen)
                return {false, "trial " + std::to_string(trial) + ": a nearer root exists"};
        if (std::abs(g(e.estimated_boundary_value)) > 1e-6)
            return {false, "trial " + std::to_string(trial) + ": chosen root is off the boundary"};
    }
    return {solved > 1000, std::to_string(solved) + " solved instances, chosen root always nearest"};
}

Outcome monotone_property() {
    std::mt19937_64 rng(5);
    std::exponential_distribution<double> ex(3.0);
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<FidelityRecord> recs(1 + trial % 40);
        for (auto& r : recs) {
            r.error = rng() % 7 == 0 ? std::numeric_limits<double>::infinity() : ex(rng);
            r.feasible = rng() % 5 != 0;
        }
        recs[0].feasible = true;
        double prev = -1.0;
        for (double t = 0.005; t < 3.0; t += 0.005) {
            const double f = percent_fidelity(recs, t);
            if (f < prev) return {false, "trial " + std::to_string(trial) + " decreases at T=" + num(t)};
            prev = f;
        }
    }
    return {true, "1000 record sets, T swept 0.005..3"};
}

/// Weighted RSS of the centered least-squares fit on exactly `terms`.
double subset_rss(const std::vector<Observation>& pts, const std::vector<double>& y, const std::vector<double>& w,
                  const Observation& x, double yx, const std::vector<Term>& terms,
                  const std::vector<FeatureSpec>& fs) {
    SurrogateModel shape;
    shape.features = fs;
    shape.origin = x;
    shape.shifted = true;
    const auto n = static_cast<Eigen::Index>(pts.size());
    Eigen::MatrixXd a(n, static_cast<Eigen::Index>(terms.size()));
    Eigen::VectorXd b(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        const double sw = std::sqrt(w[ui]);
        for (std::size_t k = 0; k < terms.size(); ++k)
            a(i, static_cast<Eigen::Index>(k)) = sw * shape.term_value(terms[k], pts[ui]);
        b(i) = sw * (y[ui] - yx);
    }
    Eigen::VectorXd beta = a.colPivHouseholderQr().solve(b);
    return (a * beta - b).squaredNorm();
}

struct StepwiseCounts {
    int instances = 0;
    int step_violations = 0;            // a step that is not the best one-term extension
    std::array<int, 4> subset_mismatch{};  // by k: stepwise RSS above the best subset of size k
};

StepwiseCounts stepwise_instances() {
    StepwiseCounts c;
    std::mt19937_64 rng(4242);
    std::normal_distribution<double> nd;
    auto fs = tu::unit_dataset(2).features;
    const std::vector<Term> cands = {Term::linear(0), Term::linear(1), Term::interaction(0, 1)};
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 6 + trial % 15;  // <= 20 points
        std::vector<Observation> pts;
        std::vector<double> y, w;
        for (std::size_t i = 0; i < n; ++i) {
            pts.push_back(tu::random_point(rng, 2, -2, 2));
            y.push_back(nd(rng));
            w.push_back(1.0 + static_cast<double>(rng() % 3));
        }
        Observation x{0.2 * nd(rng), 0.2 * nd(rng)};
        const double yx = 0.2 * nd(rng);
        ++c.instances;
        std::vector<Term> path;
        for (std::size_t k = 1; k <= 3; ++k) {
            FitOptions opts;
            opts.max_terms = k;
            opts.min_improvement = -1.0;
            auto r = fit_surrogate(pts, y, w, x, yx, fs, opts, cands);
            const double got = subset_rss(pts, y, w, x, yx, r.terms, fs);
            for (const auto& alt : cands) {
                if (std::find(path.begin(), path.end(), alt) != path.end()) continue;
                auto ext = path;
                ext.push_back(alt);
                if (got > subset_rss(pts, y, w, x, yx, ext, fs) + 1e-9 * (1 + got)) {
                    ++c.step_violations;
                    break;
                }
            }
            path = r.terms;
            double best = std::numeric_limits<double>::infinity();
            for (unsigned mask = 1; mask < 8; ++mask) {
                if (static_cast<std::size_t>(__builtin_popcount(mask)) != k) continue;
                std::vector<Term> sub;
                for (unsigned b = 0; b < 3; ++b)
                    if (mask & (1u << b)) sub.push_back(cands[b]);
                best = std::min(best, subset_rss(pts, y, w, x, yx, sub, fs));
            }
            if (got > best + 1e-9 * (1 + best)) ++c.subset_mismatch[k];
        }
    }
    return c;
}

}  // namespace

int main() {
    std::printf("Acceptance run\n");

    // ---- worked example ---------------------------------------------------
    report("worked example (Pima fixture)", 1.0, [] {
        auto fs = tu::pima_features();
        auto s = tu::load_fixture_model("pima_worked_example.model", fs);
        BPerturbation bp;
        bp.feature = 1;
        bp.feature_name = "Glucose";
        bp.original_value = 0.537;
        bp.boundary_value = 0.537 - 0.557;
        bp.delta = -0.557;
        bp.counterfactual_point = tu::pima_point(fs, {{"Glucose", bp.boundary_value}, {"BloodPressure", 3.04}});
        auto e = estimate_b_perturbation(s, bp);
        auto rec = fidelity_error(bp, e);
        const bool ok = e.status == EstimateStatus::ok && std::abs(e.estimated_boundary_value - 0.023) < 5e-4 &&
                        std::abs(e.estimated_delta + 0.512) <= 0.005 && std::abs(rec.error - 0.045) <= 0.005;
        return Outcome{ok, "root " + num(e.estimated_boundary_value) + ", estimated delta " +
                               num(e.estimated_delta) + ", error " + num(rec.error)};
    });

    // ---- linear oracle ------------------------------------------------------
    report("linear oracle, 2-5 dimensions", 60.0, [] {
        bool ok = true;
        std::string detail;
        for (std::size_t d = 2; d <= 5; ++d) {
            auto o = linear_oracle(d, 100 + d);
            RunConfig cfg;
            cfg.explain.family = Family::logistic;
            cfg.explain.terms = {false, false, false};
            cfg.test_count = o.xs.size();
            auto r = run(cfg, o.problem, o.xs);
            double worst = 0.0;
            std::size_t n = 0;
            for (const auto& obs : r.observations)
                for (const auto& ex : obs.explanations)
                    for (const auto& rec : ex.fidelity_records())
                        if (rec.feasible) {
                            worst = std::max(worst, rec.error);
                            ++n;
                        }
            const bool dim_ok = r.failures.empty() && r.mean >= 0.95 && worst <= 0.05;
            ok = ok && dim_ok;
            detail += (detail.empty() ? "" : "; ") + std::to_string(d) + "D " + pct(r.mean) + " of " +
                      std::to_string(n) + ", max error " + num(worst);
        }
        return Outcome{ok, detail};
    });

    // ---- quadratic oracle ---------------------------------------------------
    const auto sphere = sphere_oracle(50, 7);
    std::vector<ObservationFailure> sphere_search_failures;
    const auto sphere_searches =
        search_batch(sphere.problem, sphere.xs, SearchConfig{}, sphere_search_failures);
    BatchResult sphere_best;
    report("quadratic oracle (circle, 5D sphere)", 120.0, [&] {
        auto flat_cfg = sphere_config();
        flat_cfg.explain.terms.quadratic = false;
        flat_cfg.explain.terms.interaction = false;
        const auto circle = sphere_oracle(50, 8, 2);
        auto circle_best = run(sphere_config(), circle.problem, circle.xs);
        auto circle_flat = run(flat_cfg, circle.problem, circle.xs);
        sphere_best = run(sphere_config(), sphere.problem, sphere.xs, &sphere_searches);
        auto flat = run(flat_cfg, sphere.problem, sphere.xs, &sphere_searches);
        const bool ok = circle_best.failures.empty() && circle_best.mean >= 0.80 &&
                        circle_best.mean > circle_flat.mean && sphere_best.failures.empty() &&
                        sphere_best.mean >= 0.80 && sphere_best.mean > flat.mean;
        return Outcome{ok, "2D circle: quadratic " + pct(circle_best.mean) + " vs linear-only " +
                               pct(circle_flat.mean) + "; 5D sphere: " + pct(sphere_best.mean) + " vs " +
                               pct(flat.mean)};
    });

    // ---- CLEAR vs LIME ------------------------------------------------------
    Workspace pima, iris;
    BatchResult pima_best;
    std::vector<std::vector<SearchResult>> pima_searches;
    report("CLEAR vs LIME gap >= 20pp (Iris, Pima)", 900.0, [&] {
        iris = load("iris.conf");
        pima = load("pima.conf");
        std::string detail;
        bool ok = true;
        for (auto* ws : {&iris, &pima}) {
            const auto& cfg = ws->settings.run;
            std::vector<ObservationFailure> sf;
            std::vector<Observation> xs(ws->test.rows.begin(), ws->test.rows.begin() + static_cast<std::ptrdiff_t>(cfg.test_count));
            auto searches = search_batch(ws->problem, xs, cfg.explain.search, sf);
            auto clear_r = run(cfg, ws->problem, ws->test.rows, &searches);
            auto lime_cfg = cfg;
            lime_cfg.explain.method = Method::lime;
            auto lime_r = run(lime_cfg, ws->problem, ws->test.rows, &searches);
            const double gap = clear_r.mean - lime_r.mean;
            ok = ok && gap >= 0.20;
            const std::string name = ws == &iris ? "Iris" : "Pima";
            detail += (detail.empty() ? "" : "; ") + name + " CLEAR " + pct(clear_r.mean) + " +/- " +
                      pct(clear_r.standard_error) + ", LIME " + pct(lime_r.mean) + " (width " +
                      num(lime_r.kernel_width, 1) + "), gap " + num(100 * gap, 1) + "pp";
            if (ws == &pima) {
                pima_best = clear_r;
                pima_searches = std::move(searches);
            }
        }
        return Outcome{ok, detail};
    });

    // ---- counterfactual augmentation ----------------------------------------
    report("augmentation does not lower fidelity", 300.0, [&] {
        auto aug_cfg = sphere_config();
        aug_cfg.explain.augmentation = true;
        auto sphere_aug = run(aug_cfg, sphere.problem, sphere.xs, &sphere_searches);
        const double se_s = paired_standard_error(sphere_best, sphere_aug);
        auto pcfg = pima.settings.run;
        pcfg.explain.augmentation = true;
        auto pima_aug = run(pcfg, pima.problem, pima.test.rows, &pima_searches);
        const double se_p = paired_standard_error(pima_best, pima_aug);
        const bool ok = sphere_aug.mean >= sphere_best.mean - se_s && pima_aug.mean >= pima_best.mean - se_p;
        return Outcome{ok, "sphere " + pct(sphere_best.mean) + " -> " + pct(sphere_aug.mean) + " (paired SE " +
                               pct(se_s) + "); Pima " + pct(pima_best.mean) + " -> " + pct(pima_aug.mean) +
                               " (paired SE " + pct(se_p) + ")"};
    });

    // ---- max_terms trend ----------------------------------------------------
    report("max_terms 8 <= 11 <= 14 (sphere oracle)", 300.0, [&] {
        std::vector<double> means;
        std::string detail;
        for (std::size_t k : {8u, 11u, 14u}) {
            auto cfg = sphere_config();
            cfg.explain.max_terms = k;
            auto r = k == 14 ? sphere_best : run(cfg, sphere.problem, sphere.xs, &sphere_searches);
            means.push_back(r.mean);
            detail += (detail.empty() ? "" : ", ") + std::to_string(k) + ": " + pct(r.mean);
        }
        const bool ok = means[0] <= means[1] && means[1] <= means[2];
        return Outcome{ok, detail};
    });

    // ---- property suites ----------------------------------------------------
    std::printf("Property suites:\n");
    bool props_ok = true;
    auto sub = [&](const std::string& name, double budget, const std::function<Outcome()>& body) {
        const int before = failures;
        report("  " + name, budget, body);
        props_ok = props_ok && failures == before;
        failures = before;  // counted once, on the suite line below
    };
    sub("neighbourhood vs brute force", 120.0, neighbourhood_property);
    sub("centering invariant on every fitted model", 1.0, [] {
        return Outcome{centered_models > 0 && worst_centering_gap <= 1e-9,
                       std::to_string(centered_models) + " models, max |r(x) - m(x)| " +
                           sci(worst_centering_gap)};
    });
    sub("root selection minimality", 120.0, root_selection_property);
    sub("percent fidelity monotone in T", 30.0, monotone_property);
    StepwiseCounts sw;
    sub("stepwise steps are best one-term extensions", 60.0, [&] {
        sw = stepwise_instances();
        return Outcome{sw.step_violations == 0, std::to_string(sw.instances) + " instances (<= 20 points, 3 terms), " +
                                                    std::to_string(sw.step_violations) + " violations"};
    });
    sub("stepwise equals exhaustive best subset", 1.0, [&] {
        const int total = sw.subset_mismatch[1] + sw.subset_mismatch[2] + sw.subset_mismatch[3];
        return Outcome{total == 0, "mismatches k=1: " + std::to_string(sw.subset_mismatch[1]) +
                                       ", k=2: " + std::to_string(sw.subset_mismatch[2]) +
                                       ", k=3: " + std::to_string(sw.subset_mismatch[3]) + " of " +
                                       std::to_string(sw.instances)};
    });
    sub("seed determinism end to end", 120.0, [] {
        auto a = load("pima.conf");
        auto b = load("pima.conf");
        auto cfg = a.settings.run;
        cfg.test_count = 10;
        cfg.seeds = {3, 4};
        const auto ja = to_json(run(cfg, a.problem, a.test.rows), false).dump();
        const auto jb = to_json(run(cfg, b.problem, b.test.rows), false).dump();
        cfg.seeds = {5, 6};
        const auto jc = to_json(run(cfg, a.problem, a.test.rows), false).dump();
        return Outcome{ja == jb && ja != jc, ja == jb ? "identical reports from identical seeds" : "reports differ"};
    });
    report("property suites", std::numeric_limits<double>::infinity(), [&] { return Outcome{props_ok, props_ok ? "all passed" : "see lines above"}; });

    std::printf("%s: %d criterion failure(s)\n", failures ? "FAILED" : "ALL PASSED", failures);
    return failures ? 1 : 0;
}
