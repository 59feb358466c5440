#include <gtest/gtest.h>

#include <random>

#include "clear/lime.hpp"
#include "test_support.hpp"

using namespace clear;

TEST(Kernel, Values) {
    EXPECT_DOUBLE_EQ(kernel_weight(0.0, 2.0), 1.0);
    EXPECT_NEAR(kernel_weight(2.0, 2.0), std::sqrt(std::exp(-1.0)), 1e-15);
    EXPECT_NEAR(kernel_weight(2.0, 2.0), 0.6065, 1e-4);
    EXPECT_LT(kernel_weight(100.0, 2.0), 1e-100);
    EXPECT_THROW(kernel_weight(1.0, 0.0), PreconditionError);
    EXPECT_THROW(kernel_weight(-1.0, 1.0), PreconditionError);
}

TEST(Kernel, StrictlyDecreasing) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 6.0);
    for (int i = 0; i < 1000; ++i) {
        double a = u(rng), b = u(rng);
        if (a == b) continue;
        if (a > b) std::swap(a, b);
        EXPECT_GT(kernel_weight(a, 1.5), kernel_weight(b, 1.5));
    }
}

TEST(LimeSamples, GaussianMarginals) {
    Dataset ds;
    ds.features = {FeatureSpec::numeric("a", 0, 10, 5.0, 2.0)};
    auto m = AnalyticClassifier::logistic(Eigen::VectorXd::Ones(1));
    auto pool = lime_samples(ds, *m, 15000, 3);
    EXPECT_EQ(pool.size(), 15000u);
    double sum = 0, ss = 0;
    for (const auto& o : pool.observations) sum += o[0];
    const double mean = sum / 15000;
    for (const auto& o : pool.observations) ss += (o[0] - mean) * (o[0] - mean);
    EXPECT_NEAR(mean, 5.0, 0.1);
    EXPECT_NEAR(std::sqrt(ss / 15000), 2.0, 0.1);
}

TEST(LimeExplain, RecoversLinearResponse) {
    Eigen::Vector3d w(0.05, -0.08, 0.03);
    auto m = AnalyticClassifier::linear_response(w, 0.5);  // never clamps on N(0,1) draws within 5 sd
    auto ds = tu::unit_dataset(3);
    auto s = lime_explain(Observation{0.2, -0.1, 0.4}, *m, ds, {}, 14, 1, 7);
    EXPECT_EQ(s.family, Family::multiple);
    EXPECT_FALSE(s.centered);
    ASSERT_EQ(s.terms.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
        const double truth = w(static_cast<Eigen::Index>(s.terms[i].a));
        EXPECT_NEAR(s.coefficients[i], truth, 0.01 * std::abs(truth));
    }
    EXPECT_NEAR(s.intercept, 0.5, 0.005);
}

TEST(LimeExplain, WideKernelIsUnweighted) {
    auto m = AnalyticClassifier::logistic(Eigen::Vector2d(1.0, -2.0));
    auto ds = tu::unit_dataset(2);
    auto pool = lime_samples(ds, *m, 2000, 4);
    Observation x{0.3, 0.3};
    auto wide = lime_fit(pool, x, 1, 0.5, ds.features, 1e9, 14);
    std::vector<double> y(pool.size()), ones(pool.size(), 1.0);
    for (std::size_t i = 0; i < pool.size(); ++i) y[i] = pool.probability(i, 1);
    FitOptions opts;
    opts.centering = false;
    opts.linear_only = true;
    auto plain = fit_surrogate(pool.observations, y, ones, x, 0.5, ds.features, opts);
    ASSERT_EQ(wide.terms, plain.terms);
    EXPECT_NEAR(wide.intercept, plain.intercept, 1e-6);
    for (std::size_t i = 0; i < wide.coefficients.size(); ++i)
        EXPECT_NEAR(wide.coefficients[i], plain.coefficients[i], 1e-6);
}

TEST(LimeExplain, ScoreAtXIsNotPinned) {
    auto m = AnalyticClassifier::logistic(Eigen::Vector2d(3.0, 0.0));
    auto ds = tu::unit_dataset(2);
    Observation x{1.0, 0.0};
    auto s = lime_explain(x, *m, ds, {2.0, 3000}, 14, 1, 2);
    EXPECT_GT(std::abs(s.evaluate(x) - m->positive_probability(x)), 1e-3);
}

TEST(LimeExplain, BadConfig) {
    auto m = AnalyticClassifier::logistic(Eigen::Vector2d(3.0, 0.0));
    EXPECT_THROW(lime_explain(Observation{0, 0}, *m, tu::unit_dataset(2), {0.0, 10}, 14, 1),
                 PreconditionError);
    EXPECT_THROW(lime_samples(tu::unit_dataset(2), *m, 0, 1), PreconditionError);
}
