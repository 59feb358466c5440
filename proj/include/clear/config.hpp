#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "clear/batch.hpp"
#include "clear/external_model.hpp"
#include "clear/models.hpp"

namespace clear {

/// Where the data and model come from.
struct DataConfig {
    std::string csv;     // resolved against the config file's directory
    std::string schema;
    double test_fraction = 0.2;
    std::uint64_t split_seed = 1;
    enum class ModelSource { builtin, external } model_source = ModelSource::builtin;
    BuiltinModelConfig builtin;
    std::string model_command;
};

struct Settings {
    DataConfig data;
    RunConfig run;
};

namespace detail {

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw DataError("setting '" + key + "' expects true or false, got '" + v + "'");
}

inline double parse_number(const std::string& key, const std::string& v) {
    auto r = parse_real(v);
    if (!r) throw DataError("setting '" + key + "' expects a number, got '" + v + "'");
    return *r;
}

inline std::uint64_t parse_count(const std::string& key, const std::string& v) {
    const double d = parse_number(key, v);
    if (d < 0 || d != std::floor(d) || d > 9.0e15)
        throw DataError("setting '" + key + "' expects a non-negative integer, got '" + v + "'");
    return static_cast<std::uint64_t>(d);
}

}  // namespace detail

/// Keys understood by apply_setting, in documentation order.
inline const std::vector<std::string>& setting_keys() {
    static const std::vector<std::string> keys{
        "csv", "schema", "test_fraction", "split_seed", "model", "model_command",
        "model_hidden_units", "model_epochs", "model_learning_rate", "model_momentum", "model_seed",
        "method", "family", "balanced", "centering", "use_counterfactual_augmentation", "cf_weight",
        "quadratic", "interaction", "indicator", "max_terms", "T", "b1", "b2", "pool_size",
        "neighbourhood_size", "search_steps", "refine_tol", "boundary_threshold", "range_margin",
        "kernel_width", "kernel_widths", "lime_sample_count", "seeds", "test_count",
        "keep_neighbourhoods"};
    return keys;
}

/// Sets one key. Unknown keys and malformed values raise DataError; range
/// checks are left to RunConfig::validate.
inline void apply_setting(Settings& s, const std::string& key, const std::string& value) {
    using namespace detail;
    auto& d = s.data;
    auto& r = s.run;
    auto& e = r.explain;
    const std::string v = trim(value);
    if (key == "csv") d.csv = v;
    else if (key == "schema") d.schema = v;
    else if (key == "test_fraction") d.test_fraction = parse_number(key, v);
    else if (key == "split_seed") d.split_seed = parse_count(key, v);
    else if (key == "model") {
        using F = BuiltinModelConfig::Family;
        if (v == "mlp") { d.model_source = DataConfig::ModelSource::builtin; d.builtin.family = F::mlp_softmax; }
        else if (v == "logistic") { d.model_source = DataConfig::ModelSource::builtin; d.builtin.family = F::logistic_linear; }
        else if (v == "external") d.model_source = DataConfig::ModelSource::external;
        else throw DataError("setting 'model' expects mlp, logistic or external, got '" + v + "'");
    }
    else if (key == "model_command") d.model_command = v;
    else if (key == "model_hidden_units") d.builtin.hidden_units = static_cast<int>(parse_count(key, v));
    else if (key == "model_epochs") d.builtin.epochs = static_cast<int>(parse_count(key, v));
    else if (key == "model_learning_rate") d.builtin.learning_rate = parse_number(key, v);
    else if (key == "model_momentum") d.builtin.momentum = parse_number(key, v);
    else if (key == "model_seed") d.builtin.seed = parse_count(key, v);
    else if (key == "method") {
        if (v == "clear") e.method = Method::clear;
        else if (v == "lime") e.method = Method::lime;
        else throw DataError("setting 'method' expects clear or lime, got '" + v + "'");
    }
    else if (key == "family") {
        if (v == "logistic") e.family = Family::logistic;
        else if (v == "multiple") e.family = Family::multiple;
        else throw DataError("setting 'family' expects logistic or multiple, got '" + v + "'");
    }
    else if (key == "balanced") e.balanced = parse_bool(key, v);
    else if (key == "centering") e.centering = parse_bool(key, v);
    else if (key == "use_counterfactual_augmentation" || key == "augmentation") e.augmentation = parse_bool(key, v);
    else if (key == "cf_weight") e.cf_weight = parse_number(key, v);
    else if (key == "quadratic") e.terms.quadratic = parse_bool(key, v);
    else if (key == "interaction") e.terms.interaction = parse_bool(key, v);
    else if (key == "indicator") e.terms.indicator = parse_bool(key, v);
    else if (key == "max_terms") e.max_terms = parse_count(key, v);
    else if (key == "T") e.threshold_T = parse_number(key, v);
    else if (key == "b1") e.b1 = parse_number(key, v);
    else if (key == "b2") e.b2 = parse_number(key, v);
    else if (key == "pool_size") e.pool_size = parse_count(key, v);
    else if (key == "neighbourhood_size") e.neighbourhood_size = parse_count(key, v);
    else if (key == "search_steps") e.search.steps = static_cast<int>(parse_count(key, v));
    else if (key == "refine_tol") e.search.refine_tol = parse_number(key, v);
    else if (key == "boundary_threshold") e.search.threshold = parse_number(key, v);
    else if (key == "range_margin") e.search.range_margin = parse_number(key, v);
    else if (key == "kernel_width") e.lime.kernel_width = parse_number(key, v);
    else if (key == "kernel_widths") {
        r.kernel_widths.clear();
        for (const auto& w : split_list(v)) r.kernel_widths.push_back(parse_number(key, w));
    }
    else if (key == "lime_sample_count") e.lime.sample_count = parse_count(key, v);
    else if (key == "seeds") {
        r.seeds.clear();
        for (const auto& item : split_list(v)) {
            const auto dash = item.find('-');
            if (dash != std::string::npos && dash > 0) {
                const auto lo = parse_count(key, item.substr(0, dash));
                const auto hi = parse_count(key, item.substr(dash + 1));
                if (hi < lo) throw DataError("setting 'seeds' has an empty range '" + item + "'");
                for (auto k = lo; k <= hi; ++k) r.seeds.push_back(k);
            } else {
                r.seeds.push_back(parse_count(key, item));
            }
        }
    }
    else if (key == "test_count") r.test_count = parse_count(key, v);
    else if (key == "keep_neighbourhoods") r.keep_neighbourhoods = parse_bool(key, v);
    else throw DataError("unknown setting '" + key + "'");
}

/// `key = value` lines; `#` starts a comment. Relative csv/schema paths
/// are resolved against `base_dir`.
inline Settings parse_settings(std::istream& in, const std::string& base_dir = "", Settings s = {}) {
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const auto t = detail::trim(line);
        if (t.empty()) continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw DataError("config line " + std::to_string(lineno) + ": expected key = value");
        try {
            apply_setting(s, detail::trim(t.substr(0, eq)), t.substr(eq + 1));
        } catch (const DataError& err) {
            throw DataError("config line " + std::to_string(lineno) + ": " + err.what());
        }
    }
    namespace fs = std::filesystem;
    auto resolve = [&](std::string& p) {
        if (!p.empty() && !base_dir.empty() && fs::path(p).is_relative()) p = (fs::path(base_dir) / p).string();
    };
    resolve(s.data.csv);
    resolve(s.data.schema);
    return s;
}

inline Settings load_settings(const std::string& path, Settings s = {}) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config file '" + path + "'");
    return parse_settings(in, std::filesystem::path(path).parent_path().string(), std::move(s));
}

/// Everything a run needs: raw partitions plus the standardized problem.
struct Workspace {
    Settings settings;
    Dataset train;  // raw units
    Dataset test;   // raw units
    ClassifierHandle model;  // raw units
    StandardizedProblem problem;
    double test_accuracy = 0.0;
};

/// Loads and splits the data, trains or launches the model and builds
/// the standardized problem.
inline Workspace prepare(const Settings& s) {
    if (s.data.csv.empty()) throw DataError("no 'csv' given");
    if (s.data.schema.empty()) throw DataError("no 'schema' given");
    s.run.validate();
    Workspace w;
    w.settings = s;
    const auto schema = load_schema(s.data.schema);
    const auto all = load_dataset(s.data.csv, schema);
    std::tie(w.train, w.test) = split(all, s.data.test_fraction, s.data.split_seed);
    if (s.data.model_source == DataConfig::ModelSource::external) {
        if (s.data.model_command.empty()) throw DataError("model = external needs 'model_command'");
        w.model = wrap_external(s.data.model_command, w.train.features, w.train.class_count());
    } else {
        w.model = train_builtin(w.train, s.data.builtin);
    }
    w.test_accuracy = accuracy(*w.model, w.test);
    w.problem = standardize_problem(w.train, w.model);
    return w;
}

}  // namespace clear
