#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "clear/dataset.hpp"
#include "clear/error.hpp"

namespace clear {

/// Rows are observations, columns are classes.
using ProbabilityMatrix = Eigen::MatrixXd;

inline double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

/// The black box m: observations to class-probability rows.
///
/// Implementations provide `predict_batch`; callers go through
/// `predict_proba`, which checks arity and the probability-row invariants.
/// Implementations must be safe to call from several threads at once.
class Classifier {
public:
    virtual ~Classifier() = default;

    virtual std::size_t class_count() const = 0;
    virtual std::size_t feature_count() const = 0;

    ProbabilityMatrix predict_proba(std::span<const Observation> batch) const {
        for (const auto& obs : batch)
            if (obs.size() != feature_count())
                throw PreconditionError("observation has " + std::to_string(obs.size()) +
                                        " values, model expects " +
                                        std::to_string(feature_count()));
        if (batch.empty()) return ProbabilityMatrix(0, static_cast<Eigen::Index>(class_count()));
        ProbabilityMatrix p = predict_batch(batch);
        check_rows(p);
        return p;
    }

    ProbabilityMatrix predict_proba(const Observation& obs) const {
        return predict_proba(std::span<const Observation>(&obs, 1));
    }

    /// Probability of `cls` for a single observation.
    double probability(const Observation& obs, int cls) const {
        return predict_proba(obs)(0, cls);
    }

protected:
    virtual ProbabilityMatrix predict_batch(std::span<const Observation> batch) const = 0;

private:
    void check_rows(const ProbabilityMatrix& p) const {
        if (static_cast<std::size_t>(p.cols()) != class_count())
            throw ModelError("model returned " + std::to_string(p.cols()) + " columns, expected " +
                             std::to_string(class_count()));
        for (Eigen::Index i = 0; i < p.rows(); ++i) {
            for (Eigen::Index k = 0; k < p.cols(); ++k)
                if (!(p(i, k) >= 0.0 && p(i, k) <= 1.0))
                    throw ModelError("probability outside [0, 1] in row " + std::to_string(i));
            if (std::abs(p.row(i).sum() - 1.0) > 1e-6)
                throw ModelError("probability row " + std::to_string(i) + " does not sum to 1");
        }
    }
};

using ClassifierHandle = std::shared_ptr<const Classifier>;

inline int predicted_class(const Eigen::RowVectorXd& probs) {
    Eigen::Index k = 0;
    probs.maxCoeff(&k);
    return static_cast<int>(k);
}

/// Binary classifier with a closed-form score
///     s(x) = bias + w.x + x'Qx
/// mapped to P(class 1) through a sigmoid, or clamped to [0, 1] for the
/// identity link. Known boundaries make it the oracle for tests.
class AnalyticClassifier final : public Classifier {
public:
    enum class Link { logistic, identity };

    AnalyticClassifier(Eigen::VectorXd weights, Eigen::MatrixXd quadratic, double bias,
                       Link link = Link::logistic)
        : w_(std::move(weights)), q_(std::move(quadratic)), bias_(bias), link_(link) {
        if (q_.size() != 0 && (q_.rows() != w_.size() || q_.cols() != w_.size()))
            throw PreconditionError("quadratic form must be square and match the weights");
    }

    static std::shared_ptr<AnalyticClassifier> logistic(Eigen::VectorXd weights, double bias = 0.0) {
        return std::make_shared<AnalyticClassifier>(std::move(weights), Eigen::MatrixXd(), bias);
    }

    static std::shared_ptr<AnalyticClassifier> quadratic(Eigen::VectorXd weights,
                                                         Eigen::MatrixXd q, double bias) {
        return std::make_shared<AnalyticClassifier>(std::move(weights), std::move(q), bias);
    }

    /// P(class 1) = clamp(bias + w.x, 0, 1).
    static std::shared_ptr<AnalyticClassifier> linear_response(Eigen::VectorXd weights,
                                                               double bias) {
        return std::make_shared<AnalyticClassifier>(std::move(weights), Eigen::MatrixXd(), bias,
                                                    Link::identity);
    }

    std::size_t class_count() const override { return 2; }
    std::size_t feature_count() const override { return static_cast<std::size_t>(w_.size()); }

    double score(const Observation& obs) const {
        Eigen::Map<const Eigen::VectorXd> x(obs.values.data(), static_cast<Eigen::Index>(obs.size()));
        double s = bias_ + w_.dot(x);
        if (q_.size() != 0) s += x.dot(q_ * x);
        return s;
    }

    double positive_probability(const Observation& obs) const {
        const double s = score(obs);
        return link_ == Link::logistic ? sigmoid(s) : std::clamp(s, 0.0, 1.0);
    }

protected:
    ProbabilityMatrix predict_batch(std::span<const Observation> batch) const override {
        ProbabilityMatrix p(static_cast<Eigen::Index>(batch.size()), 2);
        for (std::size_t i = 0; i < batch.size(); ++i) {
            const double p1 = positive_probability(batch[i]);
            p(static_cast<Eigen::Index>(i), 0) = 1.0 - p1;
            p(static_cast<Eigen::Index>(i), 1) = p1;
        }
        return p;
    }

private:
    Eigen::VectorXd w_;
    Eigen::MatrixXd q_;
    double bias_;
    Link link_;
};

struct BuiltinModelConfig {
    enum class Family { logistic_linear, mlp_softmax };
    Family family = Family::mlp_softmax;
    int hidden_units = 16;
    int epochs = 3000;
    double learning_rate = 0.1;
    double momentum = 0.9;
    std::uint64_t seed = 1;
};

/// Softmax network over standardized numerics and one-hot categoricals:
/// either a single softmax layer or one tanh hidden layer.
class NeuralClassifier final : public Classifier {
public:
    struct Encoding {
        std::vector<FeatureSpec> features;
        std::size_t width = 0;

        explicit Encoding(std::vector<FeatureSpec> fs) : features(std::move(fs)) {
            for (const auto& f : features) width += f.is_numeric() ? 1 : f.levels.size();
        }

        Eigen::MatrixXd encode(std::span<const Observation> batch) const {
            Eigen::MatrixXd x = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(batch.size()),
                                                      static_cast<Eigen::Index>(width));
            for (std::size_t i = 0; i < batch.size(); ++i) {
                Eigen::Index col = 0;
                for (std::size_t j = 0; j < features.size(); ++j) {
                    const auto& f = features[j];
                    if (f.is_numeric()) {
                        x(static_cast<Eigen::Index>(i), col++) = (batch[i][j] - f.mean) / f.scale();
                    } else {
                        x(static_cast<Eigen::Index>(i), col + static_cast<Eigen::Index>(batch[i][j])) = 1.0;
                        col += static_cast<Eigen::Index>(f.levels.size());
                    }
                }
            }
            return x;
        }
    };

    NeuralClassifier(Encoding enc, Eigen::MatrixXd w1, Eigen::VectorXd b1, Eigen::MatrixXd w2,
                     Eigen::VectorXd b2)
        : enc_(std::move(enc)), w1_(std::move(w1)), b1_(std::move(b1)), w2_(std::move(w2)),
          b2_(std::move(b2)) {}

    std::size_t class_count() const override { return static_cast<std::size_t>(b2_.size()); }
    std::size_t feature_count() const override { return enc_.features.size(); }

    /// Forward pass on already-encoded inputs; returns softmax rows and, if
    /// requested, the hidden activations.
    ProbabilityMatrix forward(const Eigen::MatrixXd& x, Eigen::MatrixXd* hidden = nullptr) const {
        Eigen::MatrixXd logits;
        if (w1_.size() == 0) {
            logits = (x * w2_.transpose()).rowwise() + b2_.transpose();
        } else {
            Eigen::MatrixXd h = ((x * w1_.transpose()).rowwise() + b1_.transpose()).array().tanh();
            logits = (h * w2_.transpose()).rowwise() + b2_.transpose();
            if (hidden) *hidden = std::move(h);
        }
        Eigen::VectorXd mx = logits.rowwise().maxCoeff();
        Eigen::MatrixXd e = (logits.colwise() - mx).array().exp();
        Eigen::VectorXd sums = e.rowwise().sum();
        return e.array().colwise() / sums.array();
    }

    const Encoding& encoding() const { return enc_; }

protected:
    ProbabilityMatrix predict_batch(std::span<const Observation> batch) const override {
        return forward(enc_.encode(batch));
    }

private:
    friend ClassifierHandle train_builtin(const Dataset&, const BuiltinModelConfig&);

    Encoding enc_;
    Eigen::MatrixXd w1_;
    Eigen::VectorXd b1_;
    Eigen::MatrixXd w2_;
    Eigen::VectorXd b2_;
};

/// Full-batch gradient descent with momentum on mean cross-entropy.
/// Seed-deterministic.
inline ClassifierHandle train_builtin(const Dataset& ds, const BuiltinModelConfig& cfg) {
    const std::size_t k = ds.class_count();
    if (k < 2) throw PreconditionError("training needs at least two classes");
    std::vector<std::size_t> per_class(k, 0);
    for (int y : ds.labels) ++per_class[static_cast<std::size_t>(y)];
    for (std::size_t c = 0; c < k; ++c)
        if (per_class[c] == 0)
            throw PreconditionError("class '" + ds.class_names[c] + "' has no training rows");
    if (cfg.epochs < 1) throw PreconditionError("epochs must be >= 1");
    const bool mlp = cfg.family == BuiltinModelConfig::Family::mlp_softmax;
    if (mlp && cfg.hidden_units < 1) throw PreconditionError("hidden_units must be >= 1");

    NeuralClassifier::Encoding enc(ds.features);
    const Eigen::MatrixXd x = enc.encode(ds.rows);
    const auto n = x.rows();
    const auto in = x.cols();
    const auto kk = static_cast<Eigen::Index>(k);
    Eigen::MatrixXd y = Eigen::MatrixXd::Zero(n, kk);
    for (Eigen::Index i = 0; i < n; ++i) y(i, ds.labels[static_cast<std::size_t>(i)]) = 1.0;

    std::mt19937_64 rng(cfg.seed);
    auto init = [&](Eigen::Index rows, Eigen::Index cols) {
        std::normal_distribution<double> nd(0.0, 1.0 / std::sqrt(static_cast<double>(cols)));
        Eigen::MatrixXd m(rows, cols);
        for (Eigen::Index i = 0; i < rows; ++i)
            for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = nd(rng);
        return m;
    };
    const Eigen::Index h = mlp ? cfg.hidden_units : 0;
    Eigen::MatrixXd w1 = mlp ? init(h, in) : Eigen::MatrixXd();
    Eigen::VectorXd b1 = Eigen::VectorXd::Zero(h);
    Eigen::MatrixXd w2 = init(kk, mlp ? h : in);
    Eigen::VectorXd b2 = Eigen::VectorXd::Zero(kk);

    Eigen::MatrixXd vw1 = Eigen::MatrixXd::Zero(w1.rows(), w1.cols());
    Eigen::VectorXd vb1 = Eigen::VectorXd::Zero(h);
    Eigen::MatrixXd vw2 = Eigen::MatrixXd::Zero(w2.rows(), w2.cols());
    Eigen::VectorXd vb2 = Eigen::VectorXd::Zero(kk);

    NeuralClassifier net(enc, w1, b1, w2, b2);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        net.w1_ = w1;
        net.b1_ = b1;
        net.w2_ = w2;
        net.b2_ = b2;
        Eigen::MatrixXd hidden;
        ProbabilityMatrix p = net.forward(x, &hidden);
        const double loss =
            -(y.array() * p.array().max(1e-300).log()).sum() / static_cast<double>(n);
        if (!std::isfinite(loss))
            throw ModelError("non-finite training loss at epoch " + std::to_string(epoch));

        Eigen::MatrixXd dz = (p - y) / static_cast<double>(n);
        const Eigen::MatrixXd& inputs = mlp ? hidden : x;
        Eigen::MatrixXd gw2 = dz.transpose() * inputs;
        Eigen::VectorXd gb2 = dz.colwise().sum().transpose();
        vw2 = cfg.momentum * vw2 - cfg.learning_rate * gw2;
        vb2 = cfg.momentum * vb2 - cfg.learning_rate * gb2;
        if (mlp) {
            Eigen::MatrixXd dh = (dz * w2).array() * (1.0 - hidden.array().square());
            Eigen::MatrixXd gw1 = dh.transpose() * x;
            Eigen::VectorXd gb1 = dh.colwise().sum().transpose();
            vw1 = cfg.momentum * vw1 - cfg.learning_rate * gw1;
            vb1 = cfg.momentum * vb1 - cfg.learning_rate * gb1;
            w1 += vw1;
            b1 += vb1;
        }
        w2 += vw2;
        b2 += vb2;
    }
    return std::make_shared<NeuralClassifier>(std::move(enc), std::move(w1), std::move(b1),
                                              std::move(w2), std::move(b2));
}

/// Share of rows whose argmax matches the label.
inline double accuracy(const Classifier& m, const Dataset& ds) {
    if (ds.size() == 0) return 0.0;
    ProbabilityMatrix p = m.predict_proba(ds.rows);
    std::size_t hits = 0;
    for (Eigen::Index i = 0; i < p.rows(); ++i)
        hits += predicted_class(p.row(i)) == ds.labels[static_cast<std::size_t>(i)];
    return static_cast<double>(hits) / static_cast<double>(ds.size());
}

}  // namespace clear
