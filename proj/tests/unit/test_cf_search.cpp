#include <gtest/gtest.h>

#include <random>

#include "clear/cf_search.hpp"
#include "test_support.hpp"

using namespace clear;

namespace {

Dataset range01() {
    Dataset ds;
    ds.features = {FeatureSpec::numeric("f", 0, 1, 0.5, 0.3)};
    ds.class_names = {"a", "b"};
    return ds;
}

}  // namespace

TEST(SearchGrid, OutwardOrder) {
    auto g = search_grid(Observation{0.5}, 0, range01(), 4);
    EXPECT_EQ(g, (std::vector<double>{0.25, 0.75, 0.0, 1.0}));
}

TEST(SearchGrid, AtMinimumOnlyUpward) {
    auto g = search_grid(Observation{0.0}, "f", range01(), 4);
    EXPECT_EQ(g, (std::vector<double>{0.25, 0.5, 0.75, 1.0}));
}

TEST(SearchGrid, ClampsOffGridEndpoint) {
    auto g = search_grid(Observation{0.3}, 0, range01(), 4);
    // down: 0.05, then 0 clamped; up: 0.55, 0.8, 1 clamped
    ASSERT_EQ(g.size(), 5u);
    EXPECT_NEAR(g[0], 0.05, 1e-15);
    EXPECT_NEAR(g[1], 0.55, 1e-15);
    EXPECT_DOUBLE_EQ(g[2], 0.0);
    EXPECT_NEAR(g[3], 0.8, 1e-15);
    EXPECT_DOUBLE_EQ(g[4], 1.0);
}

TEST(SearchGrid, Preconditions) {
    Dataset ds = range01();
    ds.features.push_back(FeatureSpec::categorical("c", {"x", "y"}, {0.5, 0.5}));
    EXPECT_THROW(search_grid(Observation{0.5, 0.0}, 1, ds, 4), PreconditionError);
    EXPECT_THROW(search_grid(Observation{0.5, 0.0}, 0, ds, 1), PreconditionError);
}

TEST(FindBPerturbations, SigmoidBoundaryAtZero) {
    auto m = AnalyticClassifier::logistic(Eigen::Vector2d(4.0, 0.0));
    auto ds = tu::unit_dataset(2);
    auto r = find_b_perturbations(Observation{-0.5, 0.3}, *m, ds, 1);
    ASSERT_EQ(r.perturbations.size(), 1u);  // f2 has zero weight
    const auto& bp = r.perturbations[0];
    EXPECT_EQ(bp.feature, 0u);
    EXPECT_NEAR(bp.boundary_value, 0.0, 1e-4 * 4);
    EXPECT_NEAR(bp.delta, 0.5, 1e-4 * 4);
    EXPECT_EQ(bp.delta, bp.boundary_value - bp.original_value);
    EXPECT_TRUE(bp.feasible);
    EXPECT_GE(bp.target_probability, 0.5);
    EXPECT_EQ(bp.counterfactual_point[1], 0.3);
}

TEST(FindBPerturbations, GlucoseStyleNegativeDelta) {
    // Boundary at g = -0.020; x at 0.537 sits on the class-1 side.
    Eigen::VectorXd w(1);
    w << 3.0;
    auto m = AnalyticClassifier::logistic(w, 3.0 * 0.020);
    Dataset ds;
    ds.features = {FeatureSpec::numeric("Glucose", -2.5, 2.5, 0, 1)};
    ds.class_names = {"healthy", "diabetic"};
    auto r = find_b_perturbations(Observation{0.537}, *m, ds, 0);
    ASSERT_EQ(r.perturbations.size(), 1u);
    EXPECT_NEAR(r.perturbations[0].boundary_value, -0.020, 5e-4);
    EXPECT_NEAR(r.perturbations[0].delta, -0.557, 5e-4);
}

TEST(FindBPerturbations, AlreadyTargetIsError) {
    auto m = AnalyticClassifier::logistic(Eigen::Vector2d(1.0, 0.0));
    EXPECT_THROW(find_b_perturbations(Observation{1.0, 0.0}, *m, tu::unit_dataset(2), 1),
                 PreconditionError);
}

TEST(FindBPerturbations, NoFlipInRangeIsAbsent) {
    // Boundary at f1 = 3, outside [-2, 2].
    auto m = AnalyticClassifier::logistic(Eigen::Vector2d(1.0, 0.0), -3.0);
    auto r = find_b_perturbations(Observation{0.0, 0.0}, *m, tu::unit_dataset(2), 1);
    EXPECT_TRUE(r.perturbations.empty());
}

TEST(FindBPerturbations, MarginAllowsInfeasibleFlips) {
    auto m = AnalyticClassifier::logistic(Eigen::Vector2d(1.0, 0.0), -2.2);
    SearchConfig cfg;
    cfg.range_margin = 0.25;
    auto r = find_b_perturbations(Observation{0.0, 0.0}, *m, tu::unit_dataset(2), 1, cfg);
    ASSERT_EQ(r.perturbations.size(), 1u);
    EXPECT_NEAR(r.perturbations[0].boundary_value, 2.2, 1e-3);
    EXPECT_FALSE(r.perturbations[0].feasible);
}

TEST(FindBPerturbations, NearerSideWinsWithTwoBoundaries) {
    // score = 1 - f^2: class 1 inside |f| < 1. From f = 1.6, nearest flip is f = 1.
    Eigen::MatrixXd q(1, 1);
    q << -1.0;
    auto m = AnalyticClassifier::quadratic(Eigen::VectorXd::Zero(1), q, 1.0);
    Dataset ds;
    ds.features = {FeatureSpec::numeric("f", -2, 2, 0, 1)};
    ds.class_names = {"out", "in"};
    auto r = find_b_perturbations(Observation{1.6}, *m, ds, 1);
    ASSERT_EQ(r.perturbations.size(), 1u);
    EXPECT_NEAR(r.perturbations[0].boundary_value, 1.0, 1e-3);
}

TEST(FindBPerturbations, CategoricalLevelSwaps) {
    // Class 1 iff colour = blue (indicator weight 10) given f = 0.
    class ColourModel final : public Classifier {
    public:
        std::size_t class_count() const override { return 2; }
        std::size_t feature_count() const override { return 2; }

    protected:
        ProbabilityMatrix predict_batch(std::span<const Observation> b) const override {
            ProbabilityMatrix p(static_cast<Eigen::Index>(b.size()), 2);
            for (std::size_t i = 0; i < b.size(); ++i) {
                const double s = sigmoid(b[i][0] + (b[i][1] == 2.0 ? 10.0 : -1.0));
                p(static_cast<Eigen::Index>(i), 0) = 1 - s;
                p(static_cast<Eigen::Index>(i), 1) = s;
            }
            return p;
        }
    } m;
    Dataset ds;
    ds.features = {FeatureSpec::numeric("f", -2, 2, 0, 1),
                   FeatureSpec::categorical("colour", {"red", "green", "blue"}, {0.4, 0.4, 0.2})};
    ds.class_names = {"a", "b"};
    auto r = find_b_perturbations(Observation{0.0, 0.0}, m, ds, 1);
    ASSERT_EQ(r.level_swaps.size(), 1u);
    EXPECT_EQ(r.level_swaps[0].from_level, 0);
    EXPECT_EQ(r.level_swaps[0].to_level, 2);
    ASSERT_EQ(r.perturbations.size(), 1u);
    EXPECT_NEAR(r.perturbations[0].boundary_value, 1.0, 1e-3);
}

TEST(FindBPerturbations, MinimalityAndFlipProperties) {
    std::mt19937_64 rng(77);
    std::normal_distribution<double> nd;
    SearchConfig cfg;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t d = 2 + trial % 4;
        Eigen::VectorXd w(static_cast<Eigen::Index>(d));
        for (auto& v : w) v = nd(rng);
        Eigen::MatrixXd q = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
        if (trial % 2)
            for (Eigen::Index j = 0; j < q.rows(); ++j) q(j, j) = 0.5 * nd(rng);
        auto m = AnalyticClassifier::quadratic(w, q, 0.3 * nd(rng));
        auto ds = tu::unit_dataset(d);
        auto x = tu::random_point(rng, d, -2, 2);
        const int tc = m->positive_probability(x) >= 0.5 ? 0 : 1;
        auto r = find_b_perturbations(x, *m, ds, tc, cfg);
        for (const auto& bp : r.perturbations) {
            // Flip correctness.
            EXPECT_GE(m->probability(bp.counterfactual_point, tc), cfg.threshold);
            for (std::size_t j = 0; j < d; ++j)
                if (j != bp.feature) EXPECT_EQ(bp.counterfactual_point[j], x[j]);
            // No grid candidate strictly between x and the boundary flips.
            for (double v : search_grid(x, bp.feature, ds, cfg.steps)) {
                const bool between = (v - bp.original_value) * (bp.boundary_value - v) > 0.0;
                if (!between) continue;
                Observation c = x;
                c[bp.feature] = v;
                EXPECT_LT(m->probability(c, tc), cfg.threshold)
                    << "trial " << trial << " feature " << bp.feature << " v " << v;
            }
        }
    }
}

TEST(FindBPerturbations, SymmetryThroughTheBoundary) {
    // Reflecting x through the boundary of sigmoid(w f1) and searching back
    // gives the opposite delta.
    const double tol = 1e-4 * 4.0;
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1.8, -0.2), ws(0.5, 5.0);
    for (int trial = 0; trial < 50; ++trial) {
        auto m = AnalyticClassifier::logistic(Eigen::Vector2d(ws(rng), 0.0));
        auto ds = tu::unit_dataset(2);
        Observation x{u(rng), 0.0};
        auto fwd = find_b_perturbations(x, *m, ds, 1);
        ASSERT_EQ(fwd.perturbations.size(), 1u);
        Observation mirror{-x[0], 0.0};
        auto back = find_b_perturbations(mirror, *m, ds, 0);
        ASSERT_EQ(back.perturbations.size(), 1u);
        EXPECT_NEAR(fwd.perturbations[0].delta, -back.perturbations[0].delta, 2 * tol);
        EXPECT_GT(fwd.perturbations[0].delta, 0.0);
    }
}

TEST(FindBPerturbations, MultiClassOneVsRest) {
    // Three classes along f1: logits (-f1, 0, f1) give class 2 above f1 = ln 2 / ... use threshold 0.5.
    class Three final : public Classifier {
    public:
        std::size_t class_count() const override { return 3; }
        std::size_t feature_count() const override { return 1; }

    protected:
        ProbabilityMatrix predict_batch(std::span<const Observation> b) const override {
            ProbabilityMatrix p(static_cast<Eigen::Index>(b.size()), 3);
            for (std::size_t i = 0; i < b.size(); ++i) {
                Eigen::Vector3d l(-3 * b[i][0], 0.0, 3 * b[i][0]);
                Eigen::Vector3d e = (l.array() - l.maxCoeff()).exp();
                p.row(static_cast<Eigen::Index>(i)) = (e / e.sum()).transpose();
            }
            return p;
        }
    } m;
    Dataset ds;
    ds.features = {FeatureSpec::numeric("f", -2, 2, 0, 1)};
    ds.class_names = {"lo", "mid", "hi"};
    auto r = find_b_perturbations(Observation{-1.0}, m, ds, 2);
    ASSERT_EQ(r.perturbations.size(), 1u);
    const double v = r.perturbations[0].boundary_value;
    // P(hi) = 0.5 where e^{3v} = e^{-3v} + 1.
    const double exact = std::log((1.0 + std::sqrt(5.0)) / 2.0) / 3.0;
    EXPECT_NEAR(v, exact, 1e-3);
}
