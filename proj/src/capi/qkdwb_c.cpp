// Implementation of the C interface (include/qkdwb.h): thin translation
// from the C++ core to opaque handles, status codes, and malloc'd strings.
// No domain logic lives here.

#include "qkdwb.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <filesystem>
#include <memory>
#include <new>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "checks/golden_checks.hpp"
#include "risk/risk.hpp"
#include "scenario/scenario.hpp"
#include "support/util.hpp"

using nlohmann::json;

// Opaque handle bodies live in the global namespace to match the C tags.
struct qkdwb_ledger {
    qkd::risk::ledger impl;
};

namespace {

thread_local std::string t_last_error;

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (!out) throw std::bad_alloc();
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

void set_out(char** slot, const std::string& s) {
    if (slot) *slot = dup_string(s);
}

const char* require(const char* p, const char* what) {
    if (!p) qkd::fail(qkd::errc::config_invalid, std::string(what) + " must not be null");
    return p;
}

template <typename T> T* require(T* p, const char* what) {
    if (!p) qkd::fail(qkd::errc::config_invalid, std::string(what) + " must not be null");
    return p;
}

template <typename Fn> int guarded(Fn&& fn) {
    t_last_error.clear();
    try {
        return fn();
    } catch (const qkd::error& e) {
        t_last_error = e.what();
        return static_cast<int>(e.code());
    } catch (const std::bad_alloc&) {
        t_last_error = "out of memory";
        return QKDWB_E_GENERIC;
    } catch (const std::exception& e) {
        t_last_error = e.what();
        return QKDWB_E_GENERIC;
    }
}

// Shared tail of the scenario runners: hand out the report, then map the
// all-blocks-aborted outcome onto its dedicated status while keeping the
// report (the run itself worked; the protocol produced no key).
int finish_run(const qkd::scenario::run_outcome& out, char** report_json) {
    set_out(report_json, qkd::scenario::dump_report(out.report));
    if (out.all_blocks_aborted()) {
        t_last_error = "every completed block aborted without producing key";
        return QKDWB_E_ABORT_BLOCK;
    }
    return QKDWB_OK;
}

} // namespace

extern "C" {

const char* qkdwb_version(void) { return qkd::tool_version; }

const char* qkdwb_status_name(int status) {
    switch (status) {
    case QKDWB_OK: return "ok";
    case QKDWB_E_GENERIC: return "generic";
    case QKDWB_E_CONFIG_INVALID: return "config_invalid";
    case QKDWB_E_MISSING_SPECTRAL_DATA: return "missing_spectral_data";
    case QKDWB_E_ABORT_BLOCK: return "abort_block";
    case QKDWB_E_UNKNOWN_METRIC: return "unknown_metric";
    case QKDWB_E_DUPLICATE_ID: return "duplicate_id";
    case QKDWB_E_IO: return "io";
    case QKDWB_E_NOT_BLINDED: return "not_blinded";
    case QKDWB_E_INTENSITY_ORDER: return "intensity_order";
    default: return "unknown";
    }
}

const char* qkdwb_last_error(void) { return t_last_error.c_str(); }

void qkdwb_string_free(char* s) { std::free(s); }

/* ------------------------------------------------------------- scenarios */

int qkdwb_run_scenario(const char* scenario_path, char** report_json) {
    return guarded([&]() -> int {
        qkd::scenario::run_outcome out =
            qkd::scenario::run_scenario_file(require(scenario_path, "scenario_path"));
        return finish_run(out, report_json);
    });
}

int qkdwb_run_stages(const char* scenario_path, const char* stages, const char* output_json,
                     char** report_json) {
    return guarded([&]() -> int {
        std::filesystem::path p = require(scenario_path, "scenario_path");
        json doc = qkd::scenario::load_json_file(p.string());
        if (stages && *stages) {
            json arr = json::array();
            std::string list = stages;
            std::size_t pos = 0;
            for (;;) {
                std::size_t comma = list.find(',', pos);
                arr.push_back(list.substr(pos, comma == std::string::npos ? std::string::npos
                                                                          : comma - pos));
                if (comma == std::string::npos) break;
                pos = comma + 1;
            }
            doc["stages"] = std::move(arr);
        }
        if (output_json) {
            json replacement = json::parse(output_json, nullptr, /*allow_exceptions=*/false);
            if (replacement.is_discarded() || !replacement.is_object())
                qkd::fail(qkd::errc::config_invalid, "output_json must be a JSON object");
            if (replacement.empty())
                doc.erase("output");
            else
                doc["output"] = std::move(replacement);
        }
        qkd::scenario::scenario_config cfg = qkd::scenario::parse_scenario(
            doc, p.has_parent_path() ? p.parent_path().string() : std::string());
        qkd::scenario::run_outcome out = qkd::scenario::run_scenario(cfg);
        return finish_run(out, report_json);
    });
}

int qkdwb_postprocess(const char* scenario_path, const char* session_log_path,
                      char** report_json, char** key_hex) {
    return guarded([&]() -> int {
        qkd::scenario::scenario_config cfg =
            qkd::scenario::load_scenario_file(require(scenario_path, "scenario_path"));
        qkd::scenario::run_outcome out = qkd::scenario::postprocess_log_file(
            cfg, require(session_log_path, "session_log_path"));
        std::string keys;
        for (const auto& line : out.key_hex) {
            keys += line;
            keys += '\n';
        }
        set_out(key_hex, keys);
        return finish_run(out, report_json);
    });
}

/* --------------------------------------------------------------- series */

int qkdwb_emit_series(const char* report_path, const char* metric, const char* out_path,
                      char** series_text) {
    return guarded([&]() -> int {
        json report = qkd::scenario::load_json_file(require(report_path, "report_path"));
        std::string text = qkd::scenario::series_to_text(report, require(metric, "metric"));
        if (out_path) qkd::scenario::emit_series(report, metric, out_path);
        set_out(series_text, text);
        return QKDWB_OK;
    });
}

int qkdwb_list_series(const char* report_path, char** metrics_json) {
    return guarded([&]() -> int {
        json report = qkd::scenario::load_json_file(require(report_path, "report_path"));
        set_out(metrics_json, json(qkd::scenario::list_series(report)).dump());
        return QKDWB_OK;
    });
}

/* --------------------------------------------------------- risk ledger */

int qkdwb_ledger_open(const char* path, qkdwb_ledger** out) {
    return guarded([&]() -> int {
        require(out, "out");
        auto handle = std::make_unique<qkdwb_ledger>(
            qkdwb_ledger{qkd::risk::ledger(require(path, "path"))});
        *out = handle.release();
        return QKDWB_OK;
    });
}

void qkdwb_ledger_close(qkdwb_ledger* ledger) { delete ledger; }

int qkdwb_ledger_add(qkdwb_ledger* ledger, const char* record_json) {
    return guarded([&]() -> int {
        require(ledger, "ledger")
            ->impl.add(qkd::risk::record_from_json_line(require(record_json, "record_json")));
        return QKDWB_OK;
    });
}

int qkdwb_ledger_seed_builtin(qkdwb_ledger* ledger, size_t* n_added) {
    return guarded([&]() -> int {
        std::size_t added = require(ledger, "ledger")->impl.seed_builtin();
        if (n_added) *n_added = added;
        return QKDWB_OK;
    });
}

int qkdwb_ledger_records(qkdwb_ledger* ledger, int layer, char** records_jsonl) {
    return guarded([&]() -> int {
        set_out(records_jsonl, require(ledger, "ledger")->impl.export_records(layer));
        return QKDWB_OK;
    });
}

int qkdwb_ledger_table(qkdwb_ledger* ledger, int layer, char** table_text) {
    return guarded([&]() -> int {
        set_out(table_text, require(ledger, "ledger")->impl.export_table(layer));
        return QKDWB_OK;
    });
}

int qkdwb_ledger_size(const qkdwb_ledger* ledger, size_t* n) {
    return guarded([&]() -> int {
        std::size_t size = require(ledger, "ledger")->impl.size();
        *require(n, "n") = size;
        return QKDWB_OK;
    });
}

/* ----------------------------------------------------------- self check */

int qkdwb_self_check(int full, int n_threads, char** text, size_t* n_unexpected) {
    return guarded([&]() -> int {
        using namespace qkd::checks;
        std::vector<check_result> results =
            run_checks(full ? check_level::full : check_level::quick, n_threads);
        set_out(text, format_checks(results));
        std::size_t bad = unexpected_failures(results);
        if (n_unexpected) *n_unexpected = bad;
        if (bad > 0) {
            t_last_error = std::to_string(bad) + " golden check(s) failed unexpectedly";
            return QKDWB_E_GENERIC;
        }
        return QKDWB_OK;
    });
}

} // extern "C"
