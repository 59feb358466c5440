#pragma once

#include <memory>
#include <vector>

#include "clear/dataset.hpp"
#include "clear/models.hpp"

namespace clear {

// The explanation pipeline runs in standardized units: numeric features are
// shifted by the training mean and divided by the training standard
// deviation (unit scale for constant features). Categorical cells are left
// alone.

inline Observation to_standard(const Observation& raw, const std::vector<FeatureSpec>& features) {
    Observation z = raw;
    for (std::size_t j = 0; j < features.size(); ++j)
        if (features[j].is_numeric()) z[j] = (raw[j] - features[j].mean) / features[j].scale();
    return z;
}

inline Observation from_standard(const Observation& z, const std::vector<FeatureSpec>& features) {
    Observation raw = z;
    for (std::size_t j = 0; j < features.size(); ++j)
        if (features[j].is_numeric()) raw[j] = z[j] * features[j].scale() + features[j].mean;
    return raw;
}

/// Feature specs describing the same data in standardized units.
inline std::vector<FeatureSpec> standardized_features(const std::vector<FeatureSpec>& features) {
    auto out = features;
    for (auto& f : out) {
        if (!f.is_numeric()) continue;
        const double s = f.scale();
        f.train_min = (f.train_min - f.mean) / s;
        f.train_max = (f.train_max - f.mean) / s;
        f.mean = 0.0;
        f.stddev = f.stddev > 0.0 ? 1.0 : 0.0;
    }
    return out;
}

/// Presents a raw-unit classifier as one that accepts standardized input.
class StandardizedClassifier final : public Classifier {
public:
    StandardizedClassifier(ClassifierHandle inner, std::vector<FeatureSpec> raw_features)
        : inner_(std::move(inner)), raw_(std::move(raw_features)) {}

    std::size_t class_count() const override { return inner_->class_count(); }
    std::size_t feature_count() const override { return inner_->feature_count(); }

protected:
    ProbabilityMatrix predict_batch(std::span<const Observation> batch) const override {
        std::vector<Observation> raw;
        raw.reserve(batch.size());
        for (const auto& z : batch) raw.push_back(from_standard(z, raw_));
        return inner_->predict_proba(raw);
    }

private:
    ClassifierHandle inner_;
    std::vector<FeatureSpec> raw_;
};

/// Training data and model re-expressed in standardized units.
struct StandardizedProblem {
    Dataset train;              // rows and statistics in standardized units
    ClassifierHandle model;     // accepts standardized observations
    std::vector<FeatureSpec> raw_features;

    Observation to_standard(const Observation& raw) const {
        return clear::to_standard(raw, raw_features);
    }
    Observation from_standard(const Observation& z) const {
        return clear::from_standard(z, raw_features);
    }
};

inline StandardizedProblem standardize_problem(const Dataset& train, ClassifierHandle model) {
    StandardizedProblem p;
    p.raw_features = train.features;
    p.train.features = standardized_features(train.features);
    p.train.class_names = train.class_names;
    p.train.label_column = train.label_column;
    p.train.labels = train.labels;
    p.train.rows.reserve(train.size());
    for (const auto& r : train.rows) p.train.rows.push_back(to_standard(r, train.features));
    p.model = std::make_shared<StandardizedClassifier>(std::move(model), train.features);
    return p;
}

}  // namespace clear
