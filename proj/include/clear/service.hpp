#pragma once

#include <atomic>
#include <cstdio>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "clear/batch.hpp"
#include "clear/config.hpp"
#include "clear/json_io.hpp"

// After Eigen: <resolv.h>, pulled in here, defines a `_res` macro.
#include <httplib.h>

namespace clear {

/// A handler's answer before it is put on the wire.
struct Reply {
    int status = 200;
    std::string body;
    std::string content_type = "application/json";
    std::map<std::string, std::string> headers;
};

/// Raised inside handlers to answer with a given status.
class HttpError : public Error {
public:
    HttpError(int status, std::string kind, const std::string& message)
        : Error(std::move(kind), message), status_(status) {}
    int status() const noexcept { return status_; }

private:
    int status_;
};

namespace service_detail {

inline std::string real_key(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string search_key(const std::string& obs_key, const SearchConfig& s) {
    return obs_key + "|" + std::to_string(s.steps) + "|" + real_key(s.refine_tol) + "|" +
           real_key(s.threshold) + "|" + real_key(s.range_margin);
}

inline std::string pool_key(const ExplainConfig& e, std::uint64_t seed) {
    if (e.method == Method::lime)
        return "lime|" + std::to_string(seed) + "|" + std::to_string(e.lime.sample_count);
    return "clear|" + std::to_string(seed) + "|" + std::to_string(e.pool_size);
}

inline bool is_data_key(const std::string& k) {
    static const std::set<std::string> keys{"csv", "schema", "test_fraction", "split_seed",
                                            "model", "model_command", "model_hidden_units",
                                            "model_epochs", "model_learning_rate",
                                            "model_momentum", "model_seed"};
    return keys.count(k) > 0;
}

/// JSON scalar or array rendered in the key = value syntax.
inline std::string setting_text(const std::string& key, const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    if (v.is_number()) return real_key(v.get<double>());
    if (v.is_array()) {
        std::string out;
        for (const auto& item : v) {
            if (!out.empty()) out += ",";
            out += setting_text(key, item);
        }
        return out;
    }
    throw DataError("setting '" + key + "' has an unsupported JSON type");
}

inline void apply_overrides(Settings& s, const json& overrides, bool allow_data) {
    if (overrides.is_null()) return;
    if (!overrides.is_object()) throw DataError("'config' must be a JSON object");
    for (const auto& [key, value] : overrides.items()) {
        if (!allow_data && is_data_key(key))
            throw DataError("setting '" + key + "' is fixed for the session; create a new session to change it");
        apply_setting(s, key, setting_text(key, value));
    }
}

inline Reply json_reply(const json& body, int status = 200) {
    Reply r;
    r.status = status;
    r.body = body.dump(2);
    return r;
}

}  // namespace service_detail

/// One loaded dataset and model plus the caches that make re-explaining
/// an observation under a new regression configuration cheap.
struct Session {
    std::string id;
    Workspace workspace;
    RunConfig last_config;

    std::mutex mutex;
    std::map<std::string, std::shared_ptr<const SyntheticPool>> pools;
    std::map<std::string, std::shared_ptr<const std::vector<SearchResult>>> searches;

    struct Stored {
        Explanation explanation;
        RunConfig config;
        std::uint64_t seed = 0;
    };
    std::map<std::size_t, Stored> explanations;  // by test-row index
    std::map<std::string, std::string> reports;  // by config and format

    std::size_t pool_hits = 0, pool_misses = 0, search_hits = 0, search_misses = 0;
};

class Service {
public:
    Service() = default;
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;
    ~Service() { stop(); }

    /// Registers an already prepared workspace; returns the session id.
    std::string add_session(Workspace w) {
        auto s = std::make_shared<Session>();
        s->workspace = std::move(w);
        s->last_config = s->workspace.settings.run;
        std::lock_guard lock(sessions_mutex_);
        s->id = "s" + std::to_string(++next_id_);
        sessions_[s->id] = s;
        return s->id;
    }

    std::shared_ptr<Session> session(const std::string& id) const {
        std::lock_guard lock(sessions_mutex_);
        auto it = sessions_.find(id);
        if (it == sessions_.end()) throw HttpError(404, "unknown_session", "no session '" + id + "'");
        return it->second;
    }

    // ---- handlers, callable without HTTP --------------------------------

    /// Body: {"config": {key: value, ...}} or {"config_file": path, "config": {...}}.
    Reply post_sessions(const std::string& body) {
        return guarded([&] {
            const json req = parse_body(body);
            Settings s;
            try {
                if (req.contains("config_file")) s = load_settings(req.at("config_file").get<std::string>());
                service_detail::apply_overrides(s, req.value("config", json()), true);
                s.run.validate();
            } catch (const Error& e) {
                throw HttpError(422, e.kind(), e.what());
            }
            Workspace w;
            try {
                w = prepare(s);
            } catch (const DataError& e) {
                throw HttpError(422, e.kind(), e.what());
            }
            const auto id = add_session(std::move(w));
            return service_detail::json_reply(session_summary(*session(id)), 201);
        });
    }

    /// Body: {"observation": index} or {"x": {feature: value} | [values]},
    /// optional "config" overrides of the session's run settings and "seed".
    Reply post_explain(const std::string& id, const std::string& body) {
        return guarded([&] {
            auto s = session(id);
            const json req = parse_body(body);
            std::lock_guard lock(s->mutex);
            const auto& ws = s->workspace;
            RunConfig cfg = run_config(*s, req);
            std::uint64_t seed = cfg.seeds.front();
            if (req.contains("seed")) {
                if (!req["seed"].is_number_unsigned()) throw HttpError(422, "data_error", "'seed' must be a non-negative integer");
                seed = req["seed"].get<std::uint64_t>();
            }
            auto [obs_key, index, raw] = observation(*s, req);

            Reply reply;
            const auto searches = cached_searches(*s, obs_key, raw, cfg.explain.search, reply);
            const auto pool = cached_pool(*s, cfg.explain, seed, reply);
            Explanation ex;
            try {
                ex = explain(ws.problem, raw, *pool, cfg.explain, searches.get());
            } catch (const Error& e) {
                throw HttpError(500, e.kind(), e.what());
            }
            s->last_config = cfg;
            json out = {{"schema_version", kSchemaVersion}, {"kind", "explanation"}};
            out["observation"] = index ? json(*index) : json(nullptr);
            out["seed"] = seed;
            out["config"] = config_json(cfg);
            const json payload = to_json(ex, ws.problem.raw_features, ws.problem.train.class_names,
                                           cfg.explain.threshold_T);
            for (const auto& [k, v] : payload.items())
                out[k] = v;
            if (index) s->explanations[*index] = Session::Stored{std::move(ex), cfg, seed};
            auto headers = std::move(reply.headers);
            reply = service_detail::json_reply(out);
            reply.headers = std::move(headers);
            return reply;
        });
    }

    /// Body: {"observation": index, "keep": [feature names]}. Works on the
    /// last explanation of that observation.
    Reply post_simplify(const std::string& id, const std::string& body) {
        return guarded([&] {
            auto s = session(id);
            const json req = parse_body(body);
            std::lock_guard lock(s->mutex);
            const auto index = observation_index(*s, req);
            auto it = s->explanations.find(index);
            if (it == s->explanations.end())
                throw HttpError(404, "not_explained", "observation " + std::to_string(index) + " has no explanation yet");
            if (!req.contains("keep") || !req["keep"].is_array())
                throw HttpError(422, "data_error", "'keep' must be an array of feature names");
            std::vector<std::string> keep;
            for (const auto& k : req["keep"]) {
                if (!k.is_string()) throw HttpError(422, "data_error", "'keep' must hold feature names");
                keep.push_back(k.get<std::string>());
            }
            if (keep.empty()) throw HttpError(422, "precondition_error", "'keep' must name at least one feature");
            const auto& stored = it->second;
            const auto& ex = stored.explanation;
            const auto& e = stored.config.explain;
            const auto& ws = s->workspace;
            json targets = json::array();
            std::vector<FidelityRecord> all_before, all_after;
            for (const auto& t : ex.targets) {
                SurrogateModel simple;
                try {
                    simple = simplify(t.regression, keep, ex.x_standardized);
                } catch (const PreconditionError& err) {
                    throw HttpError(422, err.kind(), err.what());
                }
                json estimated = json::array(), fidelity = json::array();
                std::vector<FidelityRecord> recs;
                for (const auto& bp : t.actual) {
                    auto est = estimate_b_perturbation(simple, bp, e.search.threshold);
                    recs.push_back(fidelity_error(bp, est, e.threshold_T));
                    estimated.push_back(to_json(est));
                    fidelity.push_back(to_json(recs.back()));
                }
                all_before.insert(all_before.end(), t.fidelity.begin(), t.fidelity.end());
                all_after.insert(all_after.end(), recs.begin(), recs.end());
                targets.push_back(
                    {{"target_class", t.target_class},
                     {"target_class_name", ws.problem.train.class_names.at(static_cast<std::size_t>(t.target_class))},
                     {"original", to_json(t.regression)},
                     {"simplified", to_json(simple)},
                     {"estimated", estimated},
                     {"fidelity", fidelity},
                     {"original_percent_fidelity", fidelity_or_null(t.fidelity, e.threshold_T)},
                     {"percent_fidelity", fidelity_or_null(recs, e.threshold_T)}});
            }
            json out = {{"schema_version", kSchemaVersion},
                        {"kind", "simplification"},
                        {"observation", index},
                        {"keep", keep},
                        {"threshold_T", e.threshold_T},
                        {"original_percent_fidelity", fidelity_or_null(all_before, e.threshold_T)},
                        {"percent_fidelity", fidelity_or_null(all_after, e.threshold_T)},
                        {"targets", targets}};
            return service_detail::json_reply(out);
        });
    }

    Reply get_neighbourhood(const std::string& id, const std::string& obs) {
        return guarded([&] {
            auto s = session(id);
            std::lock_guard lock(s->mutex);
            const auto index = parse_index(*s, obs);
            auto it = s->explanations.find(index);
            if (it == s->explanations.end())
                throw HttpError(404, "not_explained", "observation " + std::to_string(index) + " has no explanation yet");
            const auto& stored = it->second;
            if (stored.explanation.method == Method::lime)
                throw HttpError(404, "no_neighbourhood", "LIME explanations have no neighbourhood");
            json targets = json::array();
            for (const auto& t : stored.explanation.targets)
                targets.push_back(to_json(t.neighbourhood, s->workspace.problem.train.features));
            json out = {{"schema_version", kSchemaVersion},
                        {"kind", "neighbourhood"},
                        {"observation", index},
                        {"seed", stored.seed},
                        {"x_standardized", jsonio::values(stored.explanation.x_standardized)},
                        {"b1", stored.config.explain.b1},
                        {"b2", stored.config.explain.b2},
                        {"targets", targets}};
            return service_detail::json_reply(out);
        });
    }

    /// Batch report over the first `test_count` test rows under the
    /// session's last run configuration. Wall-clock fields are omitted so
    /// repeated requests return identical bodies.
    Reply get_report(const std::string& id, const std::string& format_text,
                     const std::string& test_count_text) {
        return guarded([&] {
            auto s = session(id);
            std::lock_guard lock(s->mutex);
            ReportFormat format;
            try {
                format = parse_report_format(format_text.empty() ? "json" : format_text);
            } catch (const Error& e) {
                throw HttpError(422, e.kind(), e.what());
            }
            RunConfig cfg = s->last_config;
            if (!test_count_text.empty()) {
                Settings tmp;
                tmp.run = cfg;
                try {
                    apply_setting(tmp, "test_count", test_count_text);
                    tmp.run.validate();
                } catch (const Error& e) {
                    throw HttpError(422, e.kind(), e.what());
                }
                cfg = tmp.run;
            }
            const auto& ws = s->workspace;
            if (cfg.test_count > ws.test.size())
                throw HttpError(422, "precondition_error",
                                "test_count " + std::to_string(cfg.test_count) + " exceeds the " +
                                    std::to_string(ws.test.size()) + " test rows");
            const auto key = config_json(cfg).dump() + "|" + format_text;
            auto hit = s->reports.find(key);
            Reply reply;
            reply.content_type = format == ReportFormat::json ? "application/json"
                                 : format == ReportFormat::csv ? "text/csv"
                                                               : "text/html";
            if (hit != s->reports.end()) {
                reply.body = hit->second;
                return reply;
            }
            std::vector<Observation> xs(ws.test.rows.begin(),
                                        ws.test.rows.begin() + static_cast<std::ptrdiff_t>(cfg.test_count));
            std::vector<std::vector<SearchResult>> searches(xs.size());
            for (std::size_t i = 0; i < xs.size(); ++i) {
                Reply ignored;
                try {
                    searches[i] = *cached_searches(*s, "i:" + std::to_string(i), xs[i], cfg.explain.search, ignored);
                } catch (const HttpError&) {
                    searches.clear();  // let run_batch record the failure
                    break;
                }
            }
            BatchResult result;
            try {
                result = run_batch(cfg, ws.problem, ws.test.rows, searches.empty() ? nullptr : &searches);
            } catch (const Error& e) {
                throw HttpError(500, e.kind(), e.what());
            }
            std::ostringstream out;
            write_report(out, result, format, false);
            reply.body = out.str();
            s->reports[key] = reply.body;
            return reply;
        });
    }

    // ---- HTTP --------------------------------------------------------------

    /// Binds to host:port (port 0 picks a free port) and returns the port.
    int bind(const std::string& host = "127.0.0.1", int port = 0) {
        install_routes();
        if (port == 0) port = server_.bind_to_any_port(host);
        else if (!server_.bind_to_port(host, port)) port = -1;
        if (port < 0) throw Error("io_error", "cannot bind " + host + ":" + std::to_string(port));
        return port;
    }

    /// Serves until stop(); call after bind().
    void listen() { server_.listen_after_bind(); }

    /// bind() + listen() on a background thread.
    int start(const std::string& host = "127.0.0.1", int port = 0) {
        const int p = bind(host, port);
        thread_ = std::thread([this] { listen(); });
        server_.wait_until_ready();
        return p;
    }

    void stop() {
        if (server_.is_running()) server_.stop();
        if (thread_.joinable()) thread_.join();
    }

private:
    template <class F>
    Reply guarded(F&& f) {
        try {
            return f();
        } catch (const HttpError& e) {
            return service_detail::json_reply(error_json(e.kind(), e.what()), e.status());
        } catch (const Error& e) {
            return service_detail::json_reply(error_json(e.kind(), e.what()), 500);
        } catch (const std::exception& e) {
            return service_detail::json_reply(error_json("internal_error", e.what()), 500);
        }
    }

    static json parse_body(const std::string& body) {
        if (body.empty()) return json::object();
        try {
            auto j = json::parse(body);
            if (!j.is_object()) throw HttpError(400, "bad_request", "request body must be a JSON object");
            return j;
        } catch (const json::parse_error& e) {
            throw HttpError(400, "bad_request", std::string("malformed JSON: ") + e.what());
        }
    }

    static json session_summary(const Session& s) {
        const auto& ws = s.workspace;
        json features = json::array();
        for (const auto& f : ws.problem.raw_features) {
            json j = {{"name", f.name}, {"kind", f.is_numeric() ? "numeric" : "categorical"}};
            if (f.is_numeric()) {
                j["min"] = f.train_min;
                j["max"] = f.train_max;
                j["mean"] = f.mean;
                j["stddev"] = f.stddev;
            } else {
                j["levels"] = f.levels;
            }
            features.push_back(std::move(j));
        }
        return {{"schema_version", kSchemaVersion},
                {"kind", "session"},
                {"session_id", s.id},
                {"features", features},
                {"class_names", ws.problem.train.class_names},
                {"train_rows", ws.train.size()},
                {"test_rows", ws.test.size()},
                {"test_accuracy", ws.test_accuracy},
                {"config", config_json(ws.settings.run)}};
    }

    /// The session's base run settings with this request's overrides.
    static RunConfig run_config(const Session& s, const json& req) {
        Settings tmp;
        tmp.run = s.workspace.settings.run;
        try {
            service_detail::apply_overrides(tmp, req.value("config", json()), false);
            tmp.run.validate();
        } catch (const Error& e) {
            throw HttpError(422, e.kind(), e.what());
        }
        return tmp.run;
    }

    static std::size_t parse_index(const Session& s, const std::string& text) {
        std::size_t pos = 0;
        unsigned long long v = 0;
        try {
            v = std::stoull(text, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos == 0 || pos != text.size() || text.front() == '-')
            throw HttpError(404, "unknown_observation", "no observation '" + text + "'");
        if (v >= s.workspace.test.size())
            throw HttpError(404, "unknown_observation",
                            "observation " + text + " is outside the " +
                                std::to_string(s.workspace.test.size()) + " test rows");
        return static_cast<std::size_t>(v);
    }

    static std::size_t observation_index(const Session& s, const json& req) {
        if (!req.contains("observation")) throw HttpError(422, "data_error", "'observation' is required");
        const auto& o = req["observation"];
        if (o.is_number_integer()) return parse_index(s, std::to_string(o.get<long long>()));
        if (o.is_string()) return parse_index(s, o.get<std::string>());
        throw HttpError(422, "data_error", "'observation' must be a test-row index");
    }

    static std::tuple<std::string, std::optional<std::size_t>, Observation> observation(const Session& s,
                                                                                       const json& req) {
        const auto& features = s.workspace.problem.raw_features;
        if (req.contains("x")) {
            const auto& x = req["x"];
            Observation raw(std::vector<double>(features.size(), 0.0));
            if (x.is_array()) {
                if (x.size() != features.size())
                    throw HttpError(422, "arity_error", "'x' has " + std::to_string(x.size()) + " values, expected " +
                                                           std::to_string(features.size()));
                for (std::size_t j = 0; j < x.size(); ++j) {
                    if (!x[j].is_number()) throw HttpError(422, "data_error", "'x' values must be numbers");
                    raw[j] = x[j].get<double>();
                }
            } else if (x.is_object()) {
                for (std::size_t j = 0; j < features.size(); ++j) {
                    const auto& f = features[j];
                    if (!x.contains(f.name)) throw HttpError(422, "arity_error", "'x' lacks feature '" + f.name + "'");
                    const auto& v = x[f.name];
                    if (v.is_number()) raw[j] = v.get<double>();
                    else if (v.is_string() && !f.is_numeric()) {
                        auto it = std::find(f.levels.begin(), f.levels.end(), v.get<std::string>());
                        if (it == f.levels.end())
                            throw HttpError(422, "data_error", "unknown level for '" + f.name + "'");
                        raw[j] = static_cast<double>(it - f.levels.begin());
                    } else {
                        throw HttpError(422, "data_error", "bad value for '" + f.name + "'");
                    }
                }
                if (x.size() != features.size())
                    throw HttpError(422, "arity_error", "'x' names features outside the schema");
            } else {
                throw HttpError(422, "data_error", "'x' must be an object or array");
            }
            std::string key = "x:";
            for (double v : raw.values) key += service_detail::real_key(v) + ",";
            return {key, std::nullopt, raw};
        }
        const auto index = observation_index(s, req);
        return {"i:" + std::to_string(index), index, s.workspace.test.rows[index]};
    }

    static std::shared_ptr<const std::vector<SearchResult>> cached_searches(Session& s, const std::string& obs_key,
                                                                            const Observation& raw,
                                                                            const SearchConfig& cfg, Reply& reply) {
        const auto key = service_detail::search_key(obs_key, cfg);
        if (auto it = s.searches.find(key); it != s.searches.end()) {
            ++s.search_hits;
            reply.headers["X-Clear-Search-Cache"] = "hit";
            return it->second;
        }
        std::shared_ptr<const std::vector<SearchResult>> out;
        try {
            out = std::make_shared<const std::vector<SearchResult>>(
                search_all_targets(s.workspace.problem, raw, cfg));
        } catch (const PreconditionError& e) {
            throw HttpError(422, e.kind(), e.what());
        } catch (const Error& e) {
            throw HttpError(500, e.kind(), e.what());
        }
        ++s.search_misses;
        reply.headers["X-Clear-Search-Cache"] = "miss";
        s.searches[key] = out;
        return out;
    }

    static std::shared_ptr<const SyntheticPool> cached_pool(Session& s, const ExplainConfig& cfg,
                                                            std::uint64_t seed, Reply& reply) {
        const auto key = service_detail::pool_key(cfg, seed);
        if (auto it = s.pools.find(key); it != s.pools.end()) {
            ++s.pool_hits;
            reply.headers["X-Clear-Pool-Cache"] = "hit";
            return it->second;
        }
        std::shared_ptr<const SyntheticPool> pool;
        try {
            pool = std::make_shared<const SyntheticPool>(make_pool(s.workspace.problem, cfg, seed));
        } catch (const Error& e) {
            throw HttpError(500, e.kind(), e.what());
        }
        ++s.pool_misses;
        reply.headers["X-Clear-Pool-Cache"] = "miss";
        s.pools[key] = pool;
        return pool;
    }

    void install_routes() {
        if (routes_installed_) return;
        routes_installed_ = true;
        auto send = [](httplib::Response& res, const Reply& r) {
            res.status = r.status;
            for (const auto& [k, v] : r.headers) res.set_header(k, v);
            res.set_content(r.body, r.content_type);
        };
        server_.Post("/sessions", [this, send](const httplib::Request& req, httplib::Response& res) {
            send(res, post_sessions(req.body));
        });
        server_.Post(R"(/sessions/([^/]+)/explain)", [this, send](const httplib::Request& req, httplib::Response& res) {
            send(res, post_explain(req.matches[1], req.body));
        });
        server_.Post(R"(/sessions/([^/]+)/simplify)", [this, send](const httplib::Request& req, httplib::Response& res) {
            send(res, post_simplify(req.matches[1], req.body));
        });
        server_.Get(R"(/sessions/([^/]+)/neighbourhood/([^/]+))",
                    [this, send](const httplib::Request& req, httplib::Response& res) {
                        send(res, get_neighbourhood(req.matches[1], req.matches[2]));
                    });
        server_.Get(R"(/sessions/([^/]+)/report)", [this, send](const httplib::Request& req, httplib::Response& res) {
            send(res, get_report(req.matches[1], req.get_param_value("format"), req.get_param_value("test_count")));
        });
        server_.set_error_handler([](const httplib::Request&, httplib::Response& res) {
            if (res.status == 404 && res.body.empty())
                res.set_content(error_json("not_found", "no such endpoint").dump(2), "application/json");
        });
    }

    mutable std::mutex sessions_mutex_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
    std::size_t next_id_ = 0;
    httplib::Server server_;
    std::thread thread_;
    bool routes_installed_ = false;
};

}  // namespace clear
