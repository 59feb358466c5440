#pragma once

#include <stdexcept>
#include <string>

namespace clear {

/// Base class for every error raised by the engine. `kind()` is a stable
/// machine-readable tag used in CLI and HTTP error payloads.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& message)
        : std::runtime_error(message), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

/// Malformed input data: CSV cells, schema files, config files.
class DataError : public Error {
public:
    explicit DataError(const std::string& message) : Error("data_error", message) {}
};

/// A caller violated an operation's precondition.
class PreconditionError : public Error {
public:
    explicit PreconditionError(const std::string& message)
        : Error("precondition_error", message) {}
};

class ConstantFeatureError : public Error {
public:
    explicit ConstantFeatureError(const std::string& feature)
        : Error("constant_feature", "feature '" + feature + "' has zero standard deviation"),
          feature_(feature) {}

    const std::string& feature() const noexcept { return feature_; }

private:
    std::string feature_;
};

class ModelError : public Error {
public:
    using Error::Error;
    explicit ModelError(const std::string& message) : Error("model_error", message) {}
};

/// The external model process died or its pipes failed.
class TransportError : public ModelError {
public:
    explicit TransportError(const std::string& message)
        : ModelError("transport_error", message) {}
};

/// The external model process answered with something that is not a
/// well-formed probability batch.
class ProtocolError : public ModelError {
public:
    explicit ProtocolError(const std::string& message)
        : ModelError("protocol_error", message) {}
};

class NormalizationError : public ModelError {
public:
    explicit NormalizationError(const std::string& message)
        : ModelError("normalization_error", message) {}
};

class BandStarvationError : public Error {
public:
    BandStarvationError(int band, std::size_t pool_count, const std::string& message)
        : Error("band_starvation", message), band_(band), pool_count_(pool_count) {}

    int band() const noexcept { return band_; }
    std::size_t pool_count() const noexcept { return pool_count_; }

private:
    int band_;
    std::size_t pool_count_;
};

class FitError : public Error {
public:
    using Error::Error;
};

class UndefinedResultError : public Error {
public:
    explicit UndefinedResultError(const std::string& message)
        : Error("undefined_result", message) {}
};

}  // namespace clear
