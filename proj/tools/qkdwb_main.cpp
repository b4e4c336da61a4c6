// qkdwb — command-line front end of the QKD implementation-security
// workbench. Every subcommand is a thin wrapper over the shared C API
// (include/qkdwb.h); process exit codes are the library's status codes,
// so scripts can tell a protocol abort (4) from a bad config (2).

#include <cstdio>
#include <functional>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "qkdwb.h"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Owns a string allocated by the library.
struct cstr {
    char* p = nullptr;
    ~cstr() { qkdwb_string_free(p); }
    std::string str() const { return p ? std::string(p) : std::string(); }
};

struct ledger_guard {
    qkdwb_ledger* p = nullptr;
    ~ledger_guard() { qkdwb_ledger_close(p); }
};

int report_error(int status) {
    std::fprintf(stderr, "error (%s): %s\n", qkdwb_status_name(status), qkdwb_last_error());
    return status;
}

void write_file(const std::string& path, const std::string& content) {
    fs::path p = path;
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    out << content;
    if (!out.good()) {
        std::fprintf(stderr, "error (io): cannot write '%s'\n", path.c_str());
        std::exit(QKDWB_E_IO);
    }
}

// Scenario-declared outputs resolve relative to the scenario file, so paths
// given on the command line are pinned to the caller's working directory
// before they are handed to the engine.
std::optional<std::string> output_override(const std::string& csv, const std::string& bin,
                                           const std::string& rep) {
    if (csv.empty() && bin.empty() && rep.empty()) return std::nullopt;
    json o = json::object();
    if (!csv.empty()) o["session_csv"] = fs::absolute(csv).string();
    if (!bin.empty()) o["session_binary"] = fs::absolute(bin).string();
    if (!rep.empty()) o["report"] = fs::absolute(rep).string();
    return o.dump();
}

// Run one stage of a scenario and print the named report section.
int run_one_stage(const std::string& scenario, const char* stage,
                  const std::optional<std::string>& output, const char* section) {
    cstr report;
    int rc = qkdwb_run_stages(scenario.c_str(), stage, output ? output->c_str() : nullptr,
                              &report.p);
    if (rc != QKDWB_OK) return report_error(rc);
    std::cout << json::parse(report.str()).at(section).dump(2) << "\n";
    return 0;
}

int do_budget(const std::string& scenario) {
    cstr report;
    // The stage list is cut down to the budget evaluation alone, so any
    // outputs the scenario declares for later stages are dropped with it.
    int rc = qkdwb_run_stages(scenario.c_str(), "budget", "{}", &report.p);
    if (rc != QKDWB_OK) return report_error(rc);
    json b = json::parse(report.str()).at("budget");
    json record{{"total_loss_db", b.at("total_loss_db")},
                {"delivered_power_w", b.at("delivered_power_w")},
                {"mean_photons_out", b.at("mean_photons_out")}};
    std::cout << record.dump(2) << "\n";
    return 0;
}

int do_postproc(const std::string& scenario, const std::string& log, const std::string& out,
                const std::string& key) {
    cstr report, keys;
    int rc = qkdwb_postprocess(scenario.c_str(), log.c_str(), &report.p, &keys.p);
    if (rc != QKDWB_OK && rc != QKDWB_E_ABORT_BLOCK) return report_error(rc);
    if (!out.empty()) write_file(out, report.str());
    if (!key.empty()) write_file(key, keys.str());
    std::cout << json::parse(report.str()).at("postproc").dump(2) << "\n";
    if (rc != QKDWB_OK) return report_error(rc); // aborted blocks: outputs stay, code says so
    return 0;
}

int do_report(const std::string& scenario, const std::string& out) {
    cstr report;
    int rc = qkdwb_run_scenario(scenario.c_str(), &report.p);
    if (rc != QKDWB_OK && rc != QKDWB_E_ABORT_BLOCK) return report_error(rc);
    if (!out.empty()) write_file(out, report.str());
    std::fputs(report.str().c_str(), stdout);
    if (rc != QKDWB_OK) return report_error(rc);
    return 0;
}

int do_series(const std::string& report_path, const std::string& metric,
              const std::string& out) {
    if (metric.empty()) {
        cstr names;
        int rc = qkdwb_list_series(report_path.c_str(), &names.p);
        if (rc != QKDWB_OK) return report_error(rc);
        for (const json& name : json::parse(names.str()))
            std::cout << name.get<std::string>() << "\n";
        return 0;
    }
    cstr text;
    int rc = qkdwb_emit_series(report_path.c_str(), metric.c_str(),
                               out.empty() ? nullptr : out.c_str(), &text.p);
    if (rc != QKDWB_OK) return report_error(rc);
    if (out.empty()) std::fputs(text.str().c_str(), stdout);
    return 0;
}

int do_check(bool quick, int threads) {
    cstr text;
    size_t unexpected = 0;
    int rc = qkdwb_self_check(quick ? 0 : 1, threads, &text.p, &unexpected);
    std::fputs(text.str().c_str(), stdout);
    if (rc != QKDWB_OK && text.p == nullptr) return report_error(rc);
    return unexpected == 0 ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Desk-scale analysis workbench for decoy-state BB84 implementation security:\n"
                 "light-injection loss budgets, a stochastic link and detector-attack\n"
                 "simulator, the finite-key post-processing stack, and a graded ledger of\n"
                 "implementation-security issues."};
    app.footer("examples:\n"
               "  qkdwb budget data/scenarios/trojan_operating.json\n"
               "  qkdwb report data/scenarios/honest_10db.json --out report.json\n"
               "  qkdwb series report.json secret_bits_vs_loss_db --out curve.txt\n"
               "  qkdwb risk seed --ledger issues.jsonl\n"
               "  qkdwb --check");
    app.require_subcommand(0, 1);

    bool check = false, quick = false;
    int threads = 0;
    app.add_flag("--check", check, "run the golden-number self check and exit");
    app.add_flag("--quick", quick, "with --check: closed-form subset only");
    app.add_option("--threads", threads, "worker threads for --check (0 = all cores)");
    app.set_version_flag("--version", qkdwb_version());

    std::function<int()> action;

    auto* budget = app.add_subcommand(
        "budget", "evaluate a light-injection loss budget from a scenario file");
    {
        auto scenario = std::make_shared<std::string>();
        budget->add_option("scenario", *scenario, "scenario file (JSON)")->required();
        budget->callback([&action, scenario] {
            action = [scenario] { return do_budget(*scenario); };
        });
    }

    auto* simulate =
        app.add_subcommand("simulate", "run an honest Monte-Carlo link session");
    {
        auto scenario = std::make_shared<std::string>();
        auto csv = std::make_shared<std::string>();
        auto bin = std::make_shared<std::string>();
        auto rep = std::make_shared<std::string>();
        simulate->add_option("scenario", *scenario, "scenario file (JSON)")->required();
        simulate->add_option("--csv", *csv, "write the session log as CSV");
        simulate->add_option("--bin", *bin, "write the session log as compact binary");
        simulate->add_option("--report", *rep, "write the full report");
        simulate->callback([&action, scenario, csv, bin, rep] {
            action = [scenario, csv, bin, rep] {
                return run_one_stage(*scenario, "simulate", output_override(*csv, *bin, *rep),
                                     "simulation");
            };
        });
    }

    auto* attack = app.add_subcommand(
        "attack", "run the scenario's detector attack against the simulated link");
    {
        auto scenario = std::make_shared<std::string>();
        auto csv = std::make_shared<std::string>();
        auto bin = std::make_shared<std::string>();
        auto rep = std::make_shared<std::string>();
        attack->add_option("scenario", *scenario, "scenario file (JSON)")->required();
        attack->add_option("--csv", *csv, "write the attacked session log as CSV");
        attack->add_option("--bin", *bin, "write the attacked session log as compact binary");
        attack->add_option("--report", *rep, "write the full report");
        attack->callback([&action, scenario, csv, bin, rep] {
            action = [scenario, csv, bin, rep] {
                return run_one_stage(*scenario, "attack", output_override(*csv, *bin, *rep),
                                     "attack");
            };
        });
    }

    auto* postproc = app.add_subcommand(
        "postproc", "replay post-processing over a saved session log");
    {
        auto scenario = std::make_shared<std::string>();
        auto log = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        auto key = std::make_shared<std::string>();
        postproc->add_option("scenario", *scenario,
                             "scenario file carrying the protocol config")->required();
        postproc->add_option("--log", *log, "session log to consume (CSV or binary)")
            ->required();
        postproc->add_option("--out", *out, "write the full report");
        postproc->add_option("--key", *key, "write distilled key material (hex, one block per line)");
        postproc->callback([&action, scenario, log, out, key] {
            action = [scenario, log, out, key] {
                return do_postproc(*scenario, *log, *out, *key);
            };
        });
    }

    auto* report = app.add_subcommand(
        "report", "run the scenario's full stage chain and print the report");
    {
        auto scenario = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        report->add_option("scenario", *scenario, "scenario file (JSON)")->required();
        report->add_option("--out", *out, "also write the report to this path");
        report->callback([&action, scenario, out] {
            action = [scenario, out] { return do_report(*scenario, *out); };
        });
    }

    auto* series = app.add_subcommand(
        "series", "extract a plot-ready two-column series from a report");
    {
        auto report_path = std::make_shared<std::string>();
        auto metric = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        series->add_option("report", *report_path, "report file (JSON)")->required();
        series->add_option("metric", *metric, "series name (omit to list the available ones)");
        series->add_option("--out", *out, "write the series to this path instead of stdout");
        series->callback([&action, report_path, metric, out] {
            action = [report_path, metric, out] {
                return do_series(*report_path, *metric, *out);
            };
        });
    }

    auto* risk = app.add_subcommand(
        "risk", "maintain the graded ledger of implementation-security issues");
    risk->require_subcommand(1);
    {
        auto ledger_path = std::make_shared<std::string>();
        auto layer = std::make_shared<int>(0);
        auto record = std::make_shared<std::string>();
        auto format = std::make_shared<std::string>("records");

        auto add_ledger_option = [&](CLI::App* sub) {
            sub->add_option("--ledger", *ledger_path, "ledger file (one record per line)")
                ->required();
        };

        auto* seed = risk->add_subcommand(
            "seed", "add the stock issue list for the reference system");
        add_ledger_option(seed);
        seed->callback([&action, ledger_path] {
            action = [ledger_path] {
                ledger_guard led;
                int rc = qkdwb_ledger_open(ledger_path->c_str(), &led.p);
                if (rc != QKDWB_OK) return report_error(rc);
                size_t added = 0, total = 0;
                rc = qkdwb_ledger_seed_builtin(led.p, &added);
                if (rc != QKDWB_OK) return report_error(rc);
                qkdwb_ledger_size(led.p, &total);
                std::printf("seeded %zu issue(s); ledger now holds %zu\n", added, total);
                return 0;
            };
        });

        auto* add = risk->add_subcommand("add", "append one issue record");
        add_ledger_option(add);
        add->add_option("record", *record, "issue record as a single JSON object")->required();
        add->callback([&action, ledger_path, record] {
            action = [ledger_path, record] {
                ledger_guard led;
                int rc = qkdwb_ledger_open(ledger_path->c_str(), &led.p);
                if (rc != QKDWB_OK) return report_error(rc);
                rc = qkdwb_ledger_add(led.p, record->c_str());
                if (rc != QKDWB_OK) return report_error(rc);
                size_t total = 0;
                qkdwb_ledger_size(led.p, &total);
                std::printf("added 1 issue; ledger now holds %zu\n", total);
                return 0;
            };
        });

        auto* list = risk->add_subcommand("list", "print the ledger as an aligned table");
        add_ledger_option(list);
        list->add_option("--layer", *layer, "restrict to one implementation layer (1-7)");
        list->callback([&action, ledger_path, layer] {
            action = [ledger_path, layer] {
                ledger_guard led;
                int rc = qkdwb_ledger_open(ledger_path->c_str(), &led.p);
                if (rc != QKDWB_OK) return report_error(rc);
                cstr table;
                rc = qkdwb_ledger_table(led.p, *layer, &table.p);
                if (rc != QKDWB_OK) return report_error(rc);
                std::fputs(table.str().c_str(), stdout);
                return 0;
            };
        });

        auto* exp = risk->add_subcommand("export", "print the ledger records");
        add_ledger_option(exp);
        exp->add_option("--layer", *layer, "restrict to one implementation layer (1-7)");
        exp->add_option("--format", *format, "records (one JSON line each) or table")
            ->check(CLI::IsMember({"records", "table"}));
        exp->callback([&action, ledger_path, layer, format] {
            action = [ledger_path, layer, format] {
                ledger_guard led;
                int rc = qkdwb_ledger_open(ledger_path->c_str(), &led.p);
                if (rc != QKDWB_OK) return report_error(rc);
                cstr text;
                rc = *format == "table" ? qkdwb_ledger_table(led.p, *layer, &text.p)
                                        : qkdwb_ledger_records(led.p, *layer, &text.p);
                if (rc != QKDWB_OK) return report_error(rc);
                std::fputs(text.str().c_str(), stdout);
                return 0;
            };
        });
    }

    // The examples footer belongs to the top-level help only.
    for (CLI::App* sub : app.get_subcommands([](const CLI::App*) { return true; })) {
        sub->footer(" ");
        for (CLI::App* nested : sub->get_subcommands([](const CLI::App*) { return true; }))
            nested->footer(" ");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        std::cout << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::CallForVersion&) {
        std::cout << qkdwb_version() << "\n";
        return 0;
    } catch (const CLI::ParseError& e) {
        std::fprintf(stderr, "error (config_invalid): %s\n", e.what());
        return QKDWB_E_CONFIG_INVALID;
    }

    if (check) return do_check(quick, threads);
    if (action) return action();
    std::cout << app.help();
    return QKDWB_E_CONFIG_INVALID;
}
