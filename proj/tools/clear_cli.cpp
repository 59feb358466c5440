#include <csignal>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "clear/batch.hpp"
#include "clear/config.hpp"
#include "clear/service.hpp"

using namespace clear;

namespace {

struct Common {
    std::string config_path;
    std::map<std::string, std::string> flags;
    std::vector<std::string> sets;
};

/// --config, then one flag per setting key, then repeated --set key=value.
void add_common(CLI::App* app, Common& c) {
    app->add_option("-c,--config", c.config_path, "key = value config file");
    for (const auto& key : setting_keys())
        app->add_option("--" + key, c.flags[key], "setting '" + key + "'");
    app->add_option("--set", c.sets, "extra key=value setting (repeatable)");
}

Settings settings_from(const Common& c) {
    Settings s;
    if (!c.config_path.empty()) s = load_settings(c.config_path);
    for (const auto& key : setting_keys()) {
        auto it = c.flags.find(key);
        if (it != c.flags.end() && !it->second.empty()) apply_setting(s, key, it->second);
    }
    for (const auto& kv : c.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw DataError("--set expects key=value, got '" + kv + "'");
        apply_setting(s, detail::trim(kv.substr(0, eq)), kv.substr(eq + 1));
    }
    s.run.validate();
    return s;
}

void emit(const std::string& text, const std::string& out_path) {
    if (out_path.empty() || out_path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(out_path);
    if (!out) throw Error("io_error", "cannot write '" + out_path + "'");
    out << text;
}

int fail(const std::string& kind, const std::string& message, int code = 1) {
    std::cerr << error_json(kind, message).dump(2) << '\n';
    return code;
}

Service* g_service = nullptr;

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Counterfactual local explanations with fidelity checks"};
    app.require_subcommand(1);

    Common ex_c, batch_c, ablate_c, serve_c;

    auto* ex = app.add_subcommand("explain", "explain one test observation");
    add_common(ex, ex_c);
    std::size_t obs_index = 0;
    std::string x_text, ex_out;
    std::uint64_t seed = 0;
    ex->add_option("-o,--observation", obs_index, "test-row index");
    ex->add_option("-x,--x", x_text, "raw observation as comma-separated values");
    ex->add_option("--seed", seed, "synthetic data seed (default: first of seeds)");
    ex->add_option("--out", ex_out, "output path (default stdout)");

    auto* batch = app.add_subcommand("batch", "explain test_count observations for every seed");
    add_common(batch, batch_c);
    std::string format = "json", batch_out;
    bool no_timing = false;
    batch->add_option("-f,--format", format, "json, csv or html")->check(CLI::IsMember({"json", "csv", "html"}));
    batch->add_option("--out", batch_out, "output path (default stdout)");
    batch->add_flag("--no-timing", no_timing, "omit wall-clock fields");

    auto* ablate = app.add_subcommand("ablate", "run a configuration grid");
    add_common(ablate, ablate_c);
    std::string grid = "configurations", ablate_out;
    std::vector<std::size_t> term_counts{8, 11, 14, 17, 20};
    bool ablate_no_timing = false;
    ablate->add_option("-g,--grid", grid, "configurations or max_terms")
        ->check(CLI::IsMember({"configurations", "max_terms"}));
    ablate->add_option("--term-counts", term_counts, "max_terms values for the max_terms grid")->delimiter(',');
    ablate->add_option("--out", ablate_out, "output path (default stdout)");
    ablate->add_flag("--no-timing", ablate_no_timing, "omit wall-clock fields");

    auto* serve = app.add_subcommand("serve", "start the HTTP service");
    add_common(serve, serve_c);
    std::string host = "127.0.0.1";
    int port = 8080;
    serve->add_option("--host", host, "bind address");
    serve->add_option("--port", port, "port (0 picks a free one)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return fail("usage_error", e.what(), 2);
    }

    try {
        if (ex->parsed()) {
            auto ws = prepare(settings_from(ex_c));
            const auto& cfg = ws.settings.run;
            Observation raw;
            std::optional<std::size_t> index;
            if (!x_text.empty()) {
                for (const auto& v : detail::split_list(x_text)) {
                    auto r = detail::parse_real(v);
                    if (!r) throw DataError("--x value '" + v + "' is not a number");
                    raw.values.push_back(*r);
                }
            } else {
                if (obs_index >= ws.test.size())
                    throw PreconditionError("observation " + std::to_string(obs_index) + " is outside the " +
                                            std::to_string(ws.test.size()) + " test rows");
                raw = ws.test.rows[obs_index];
                index = obs_index;
            }
            const std::uint64_t s = ex->count("--seed") ? seed : cfg.seeds.front();
            const auto pool = make_pool(ws.problem, cfg.explain, s);
            const auto e = explain(ws.problem, raw, pool, cfg.explain);
            json out = {{"schema_version", kSchemaVersion}, {"kind", "explanation"}};
            out["observation"] = index ? json(*index) : json(nullptr);
            out["seed"] = s;
            out["config"] = config_json(cfg);
            const json body = to_json(e, ws.problem.raw_features, ws.problem.train.class_names,
                                        cfg.explain.threshold_T);
            for (const auto& [k, v] : body.items())
                out[k] = v;
            emit(out.dump(2) + "\n", ex_out);
        } else if (batch->parsed()) {
            auto ws = prepare(settings_from(batch_c));
            const auto result = run_batch(ws.settings.run, ws.problem, ws.test.rows);
            if (batch_out.empty() || batch_out == "-")
                write_report(std::cout, result, parse_report_format(format), !no_timing);
            else
                write_report(batch_out, result, parse_report_format(format), !no_timing);
            std::cerr << "% fidelity " << 100 * result.mean << " +/- " << 100 * result.standard_error
                      << " (standard error, " << result.seeds.size() << " repeats), " << result.failures.size()
                      << " failures\n";
        } else if (ablate->parsed()) {
            auto ws = prepare(settings_from(ablate_c));
            const auto configs = grid == "max_terms" ? term_sweep(ws.settings.run, term_counts)
                                                     : ablation_grid(ws.settings.run);
            const auto results = run_grid(configs, ws.problem, ws.test.rows);
            emit(grid_json(results, !ablate_no_timing).dump(2) + "\n", ablate_out);
            for (const auto& g : results)
                std::cerr << g.name << ": " << 100 * g.result.mean << " +/- " << 100 * g.result.standard_error << "\n";
        } else if (serve->parsed()) {
            Service service;
            if (!serve_c.config_path.empty() || std::any_of(serve_c.flags.begin(), serve_c.flags.end(),
                                                             [](const auto& kv) { return !kv.second.empty(); })) {
                const auto id = service.add_session(prepare(settings_from(serve_c)));
                std::cerr << "session " << id << " ready\n";
            }
            const int bound = service.bind(host, port);
            std::cerr << "listening on http://" << host << ":" << bound << "\n";
            g_service = &service;
            std::signal(SIGINT, [](int) { if (g_service) g_service->stop(); });
            std::signal(SIGTERM, [](int) { if (g_service) g_service->stop(); });
            service.listen();
            g_service = nullptr;
        }
    } catch (const Error& e) {
        return fail(e.kind(), e.what());
    } catch (const std::exception& e) {
        return fail("internal_error", e.what());
    }
    return 0;
}
