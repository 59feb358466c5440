#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "clear/error.hpp"

namespace clear {

enum class FeatureKind { numeric, categorical };

/// Schema entry plus the training statistics that bound sampling and
/// searching for this feature.
struct FeatureSpec {
    std::string name;
    FeatureKind kind = FeatureKind::numeric;
    std::vector<std::string> levels;          // categorical only
    std::vector<double> level_frequencies;    // parallel to `levels`
    double train_min = 0.0;
    double train_max = 0.0;
    double mean = 0.0;
    double stddev = 0.0;

    bool is_numeric() const { return kind == FeatureKind::numeric; }
    double range() const { return train_max - train_min; }

    /// Scale used when moving into standardized units. Constant features
    /// keep unit scale so they map to a single point.
    double scale() const { return stddev > 0.0 ? stddev : 1.0; }

    int level_index(std::string_view level) const {
        auto it = std::find(levels.begin(), levels.end(), level);
        return it == levels.end() ? -1 : static_cast<int>(it - levels.begin());
    }

    /// Most frequent level; ties resolve to the earliest declared level.
    int reference_level() const {
        if (levels.empty()) return -1;
        auto it = std::max_element(level_frequencies.begin(), level_frequencies.end());
        return static_cast<int>(it - level_frequencies.begin());
    }

    static FeatureSpec numeric(std::string name, double lo, double hi, double mean, double sd) {
        FeatureSpec f;
        f.name = std::move(name);
        f.train_min = lo;
        f.train_max = hi;
        f.mean = mean;
        f.stddev = sd;
        return f;
    }

    static FeatureSpec categorical(std::string name, std::vector<std::string> levels,
                                   std::vector<double> freqs) {
        FeatureSpec f;
        f.name = std::move(name);
        f.kind = FeatureKind::categorical;
        f.levels = std::move(levels);
        f.level_frequencies = std::move(freqs);
        return f;
    }
};

/// One feature vector in schema order. Categorical cells hold the level
/// index (0-based) as a double.
struct Observation {
    std::vector<double> values;

    Observation() = default;
    explicit Observation(std::vector<double> v) : values(std::move(v)) {}
    Observation(std::initializer_list<double> v) : values(v) {}

    std::size_t size() const { return values.size(); }
    double& operator[](std::size_t i) { return values[i]; }
    double operator[](std::size_t i) const { return values[i]; }

    friend bool operator==(const Observation&, const Observation&) = default;
};

struct Dataset {
    std::vector<FeatureSpec> features;
    std::vector<Observation> rows;
    std::vector<int> labels;
    std::vector<std::string> class_names;
    std::string label_column;

    std::size_t feature_count() const { return features.size(); }
    std::size_t size() const { return rows.size(); }
    std::size_t class_count() const { return class_names.size(); }

    std::size_t feature_index(std::string_view name) const {
        for (std::size_t i = 0; i < features.size(); ++i)
            if (features[i].name == name) return i;
        throw PreconditionError("unknown feature '" + std::string(name) + "'");
    }
};

/// Schema sidecar contents.
struct Schema {
    std::vector<FeatureSpec> features;
    std::string label_column;
    std::vector<std::string> class_names;
};

namespace detail {

inline std::string trim(std::string_view s) {
    const auto* ws = " \t\r\n";
    auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(ws);
    return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_list(std::string_view s, char sep = ',') {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        auto pos = s.find(sep, start);
        auto tok = trim(s.substr(start, pos == std::string_view::npos ? pos : pos - start));
        if (!tok.empty()) out.push_back(tok);
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

/// Splits one CSV record; double quotes group fields and `""` escapes a quote.
inline std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(trim(cur));
    return out;
}

inline std::optional<double> parse_real(std::string_view s) {
    std::string str(s);
    if (str.empty()) return std::nullopt;
    char* end = nullptr;
    double v = std::strtod(str.c_str(), &end);
    if (end != str.c_str() + str.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

}  // namespace detail

/// Recomputes every feature's training statistics from `rows`.
inline void compute_statistics(std::vector<FeatureSpec>& features,
                               const std::vector<Observation>& rows) {
    for (std::size_t j = 0; j < features.size(); ++j) {
        auto& f = features[j];
        if (f.is_numeric()) {
            if (rows.empty()) continue;
            double lo = rows.front()[j], hi = lo, sum = 0.0;
            for (const auto& r : rows) {
                lo = std::min(lo, r[j]);
                hi = std::max(hi, r[j]);
                sum += r[j];
            }
            double mean = sum / static_cast<double>(rows.size());
            double ss = 0.0;
            for (const auto& r : rows) ss += (r[j] - mean) * (r[j] - mean);
            f.train_min = lo;
            f.train_max = hi;
            f.mean = mean;
            f.stddev = std::sqrt(ss / static_cast<double>(rows.size()));
        } else {
            std::vector<double> counts(f.levels.size(), 0.0);
            for (const auto& r : rows) counts[static_cast<std::size_t>(r[j])] += 1.0;
            const double n = std::max<double>(1.0, static_cast<double>(rows.size()));
            for (auto& c : counts) c /= n;
            f.level_frequencies = std::move(counts);
        }
    }
}

/// Schema sidecar format, one directive per line, `#` starts a comment:
///
///     label = Outcome
///     classes = healthy, diabetic
///     numeric = Glucose
///     categorical = Colour : red, green, blue
///
/// Features keep file order. `classes` is optional; when absent the class
/// names are the sorted distinct label values.
inline Schema parse_schema(std::istream& in) {
    Schema schema;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto text = detail::trim(line);
        if (text.empty()) continue;
        auto eq = text.find('=');
        if (eq == std::string::npos)
            throw DataError("schema line " + std::to_string(lineno) + ": expected 'key = value'");
        auto key = detail::trim(std::string_view(text).substr(0, eq));
        auto value = detail::trim(std::string_view(text).substr(eq + 1));
        if (key == "label") {
            schema.label_column = value;
        } else if (key == "classes") {
            schema.class_names = detail::split_list(value);
        } else if (key == "numeric") {
            FeatureSpec f;
            f.name = value;
            schema.features.push_back(std::move(f));
        } else if (key == "categorical") {
            auto colon = value.find(':');
            if (colon == std::string::npos)
                throw DataError("schema line " + std::to_string(lineno) +
                                ": categorical feature needs ': level, level, ...'");
            FeatureSpec f;
            f.kind = FeatureKind::categorical;
            f.name = detail::trim(std::string_view(value).substr(0, colon));
            f.levels = detail::split_list(std::string_view(value).substr(colon + 1));
            if (f.levels.empty())
                throw DataError("schema line " + std::to_string(lineno) + ": no levels for '" +
                                f.name + "'");
            f.level_frequencies.assign(f.levels.size(), 1.0 / f.levels.size());
            schema.features.push_back(std::move(f));
        } else {
            throw DataError("schema line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        }
    }
    if (schema.label_column.empty()) throw DataError("schema has no 'label' entry");
    if (schema.features.empty()) throw DataError("schema declares no features");
    return schema;
}

inline Schema load_schema(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open schema file '" + path + "'");
    return parse_schema(in);
}

/// Reads a CSV with a header row. Columns are matched by name; the header
/// must hold exactly the schema features plus `label_column`.
inline Dataset load_csv(std::istream& in, std::vector<FeatureSpec> schema,
                        const std::string& label_column,
                        std::vector<std::string> class_names = {}) {
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty CSV input");
    auto header = detail::split_csv_line(line);

    auto find_col = [&](const std::string& name) -> std::size_t {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw DataError("missing column '" + name + "'");
        return static_cast<std::size_t>(it - header.begin());
    };
    std::vector<std::size_t> col_of(schema.size());
    for (std::size_t j = 0; j < schema.size(); ++j) col_of[j] = find_col(schema[j].name);
    const std::size_t label_col = find_col(label_column);
    if (header.size() != schema.size() + 1) {
        for (const auto& h : header) {
            bool known = h == label_column;
            for (const auto& f : schema) known = known || f.name == h;
            if (!known) throw DataError("unexpected column '" + h + "'");
        }
        throw DataError("duplicate columns in header");
    }

    const bool infer_classes = class_names.empty();
    std::vector<std::string> raw_labels;
    std::vector<Observation> rows;
    std::size_t rowno = 1;
    while (std::getline(in, line)) {
        ++rowno;
        if (detail::trim(line).empty()) continue;
        auto cells = detail::split_csv_line(line);
        if (cells.size() != header.size())
            throw DataError("row " + std::to_string(rowno) + ": expected " +
                            std::to_string(header.size()) + " cells, found " +
                            std::to_string(cells.size()));
        Observation obs(std::vector<double>(schema.size()));
        for (std::size_t j = 0; j < schema.size(); ++j) {
            const auto& cell = cells[col_of[j]];
            const auto& f = schema[j];
            if (f.is_numeric()) {
                auto v = detail::parse_real(cell);
                if (!v)
                    throw DataError("row " + std::to_string(rowno) + ", column '" + f.name +
                                    "': unparseable numeric value '" + cell + "'");
                obs[j] = *v;
            } else {
                int idx = f.level_index(cell);
                if (idx < 0)
                    throw DataError("row " + std::to_string(rowno) + ", column '" + f.name +
                                    "': unknown level '" + cell + "'");
                obs[j] = idx;
            }
        }
        rows.push_back(std::move(obs));
        raw_labels.push_back(cells[label_col]);
    }

    if (infer_classes) {
        class_names = raw_labels;
        std::sort(class_names.begin(), class_names.end());
        class_names.erase(std::unique(class_names.begin(), class_names.end()), class_names.end());
    }
    Dataset ds;
    ds.labels.reserve(raw_labels.size());
    for (std::size_t i = 0; i < raw_labels.size(); ++i) {
        auto it = std::find(class_names.begin(), class_names.end(), raw_labels[i]);
        if (it == class_names.end())
            throw DataError("row " + std::to_string(i + 2) + ", column '" + label_column +
                            "': unknown class '" + raw_labels[i] + "'");
        ds.labels.push_back(static_cast<int>(it - class_names.begin()));
    }
    compute_statistics(schema, rows);
    ds.features = std::move(schema);
    ds.rows = std::move(rows);
    ds.class_names = std::move(class_names);
    ds.label_column = label_column;
    return ds;
}

inline Dataset load_csv(const std::string& path, std::vector<FeatureSpec> schema,
                        const std::string& label_column,
                        std::vector<std::string> class_names = {}) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open CSV file '" + path + "'");
    return load_csv(in, std::move(schema), label_column, std::move(class_names));
}

inline Dataset load_dataset(const std::string& csv_path, const Schema& schema) {
    return load_csv(csv_path, schema.features, schema.label_column, schema.class_names);
}

inline void check_arity(const Observation& obs, const Dataset& ds) {
    if (obs.size() != ds.feature_count())
        throw PreconditionError("observation has " + std::to_string(obs.size()) +
                                " values, schema has " + std::to_string(ds.feature_count()));
}

/// Numeric values map to (v - mean) / stddev; categorical values pass through.
inline Observation standardize(const Observation& obs, const Dataset& ds) {
    check_arity(obs, ds);
    Observation out = obs;
    for (std::size_t j = 0; j < ds.feature_count(); ++j) {
        const auto& f = ds.features[j];
        if (!f.is_numeric()) continue;
        if (!(f.stddev > 0.0)) throw ConstantFeatureError(f.name);
        out[j] = (obs[j] - f.mean) / f.stddev;
    }
    return out;
}

inline Observation unstandardize(const Observation& obs, const Dataset& ds) {
    check_arity(obs, ds);
    Observation out = obs;
    for (std::size_t j = 0; j < ds.feature_count(); ++j) {
        const auto& f = ds.features[j];
        if (!f.is_numeric()) continue;
        if (!(f.stddev > 0.0)) throw ConstantFeatureError(f.name);
        out[j] = obs[j] * f.stddev + f.mean;
    }
    return out;
}

/// Seeded shuffle, then the first round(n * test_fraction) rows become the
/// test partition. Both partitions carry the training partition's statistics.
inline std::pair<Dataset, Dataset> split(const Dataset& ds, double test_fraction,
                                         std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw PreconditionError("test_fraction must lie in (0, 1), got " +
                                std::to_string(test_fraction));
    std::vector<std::size_t> order(ds.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    auto n_test = static_cast<std::size_t>(std::llround(test_fraction * ds.size()));
    n_test = std::clamp<std::size_t>(n_test, 1, ds.size() > 1 ? ds.size() - 1 : 1);

    Dataset train, test;
    for (auto* part : {&train, &test}) {
        part->features = ds.features;
        part->class_names = ds.class_names;
        part->label_column = ds.label_column;
    }
    for (std::size_t k = 0; k < order.size(); ++k) {
        auto& part = k < n_test ? test : train;
        part.rows.push_back(ds.rows[order[k]]);
        part.labels.push_back(ds.labels[order[k]]);
    }
    compute_statistics(train.features, train.rows);
    test.features = train.features;
    return {std::move(train), std::move(test)};
}

}  // namespace clear
