#pragma once
// Scenario orchestration: loads catalog and scenario documents, runs the
// declared analysis stages (loss budget, link simulation, attack, post
// processing, parameter sweeps) and assembles one machine-readable report.
//
// Scenario and catalog files are strict JSON. Reports embed the tool version
// and a hash of the scenario document, and serialize with sorted keys, so a
// rerun of the same scenario yields a byte-identical report. Quantities are
// SI base units plus dB; field names carry unit suffixes (_db, _w, _nm, _hz,
// _s, _j).

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "attacks/attacks.hpp"
#include "linksim/linksim.hpp"
#include "lossbudget/lossbudget.hpp"
#include "postproc/postproc.hpp"
#include "support/util.hpp"

namespace qkd::scenario {

inline constexpr const char* catalog_schema = "qkdwb.catalog/1";
inline constexpr const char* scenario_schema = "qkdwb.scenario/1";
inline constexpr const char* report_schema = "qkdwb.report/1";
inline constexpr const char* series_schema = "qkdwb.series/1";

// --------------------------------------------------------------- catalogs

// Round-trip between the component catalog and its JSON document form.
// Loss tables serialize as arrays of {wavelength_nm, loss_db} points;
// loss_reverse_db may be omitted for direction-symmetric components.
nlohmann::json catalog_to_json(const lossbudget::catalog& cat);
lossbudget::catalog catalog_from_json(const nlohmann::json& doc);

lossbudget::catalog load_catalog_file(const std::string& path);

// Resolve a catalog reference from a scenario:
//   - a ref containing '/' or ending in ".json" is a file path, resolved
//     against base_dir when relative; the file must exist;
//   - otherwise the directories in the QKDWB_CATALOG_PATH environment
//     variable (colon-separated) are searched for "<ref>.json";
//   - otherwise the ref must name a builtin catalog.
lossbudget::catalog resolve_catalog(const std::string& ref, const std::string& base_dir);

// ---------------------------------------------------------------- scenario

enum class stage_kind : uint8_t {
    budget,
    simulate,
    attack,
    postproc,
    keyrate_sweep,
    blinding_sweep,
};

const char* stage_name(stage_kind s);
stage_kind stage_from_name(const std::string& name);

struct simulation_config {
    uint32_t n_trains = 1;
    bool four_state_bob = false;
    int n_threads = 0; // 0 = hardware concurrency; results are thread-agnostic
    // Replay the hardware deadtime state machine over the raw click stream.
    bool hardware_deadtime = false;
    // Post-processing click filter window; 0 disables the filter.
    uint64_t software_filter_gates = 0;
};

struct keyrate_sweep_config {
    double loss_from_db = 0.0;
    double loss_to_db = 45.0;
    double loss_step_db = 1.0;
    double n_pulses = 4e9; // pulses in each modeled session
};

struct blinding_sweep_config {
    double energy_from_j = 0.0;
    double energy_to_j = 30e-15;
    uint32_t energy_points = 61;
};

struct output_config {
    std::string report;         // report document
    std::string session_csv;    // final click log, text form
    std::string session_binary; // final click log, compact form
    std::string secret_key_hex; // one hex line per distilled block
};

struct scenario_config {
    std::string name;
    std::string description;
    uint64_t seed = 0;
    std::vector<stage_kind> stages;

    std::string catalog_ref;      // empty when no stage needs a catalog
    lossbudget::catalog cat;      // resolved at parse time
    std::string budget_path_name; // one of the standard injection paths, or
                                  // the name of an inline path
    lossbudget::injection_scenario budget;

    linksim::source_config source;
    linksim::channel_config channel;
    linksim::detector_model detector0;
    linksim::detector_model detector1;
    simulation_config simulation;

    attacks::attack_config attack;
    // "resend_probability": "compensating" defers the throttle to
    // compensating_resend_probability at run time.
    bool attack_resend_compensating = false;

    postproc::protocol_config protocol;

    keyrate_sweep_config keyrate;
    blinding_sweep_config blinding;

    output_config output;
    std::string base_dir; // directory of the scenario file; anchors relative paths
    nlohmann::json echo;  // the document as given, embedded in the report
};

// Parse and fully validate a scenario document. base_dir anchors relative
// catalog and output paths. Every error is reported before any output file
// is touched: a scenario that fails here has no side effects.
scenario_config parse_scenario(const nlohmann::json& doc, const std::string& base_dir);
scenario_config load_scenario_file(const std::string& path);

// Load any JSON document (scenario, report, ...) with the module's error
// conventions: config_invalid for a missing or malformed file.
nlohmann::json load_json_file(const std::string& path);

// ------------------------------------------------------------------- report

struct run_outcome {
    nlohmann::json report;
    // Post-processing tally, for mapping to the AbortBlock exit path: the
    // run counts as aborted when blocks were produced and none yielded key.
    bool postproc_ran = false;
    uint32_t n_blocks = 0;
    uint32_t n_aborted = 0;
    // Secret key of each non-aborted block as lowercase hex (LSB-first bit
    // packing), in block order. Key material stays out of the report.
    std::vector<std::string> key_hex;

    bool all_blocks_aborted() const { return postproc_ran && n_blocks > 0 && n_aborted == n_blocks; }
};

// Execute the declared stage chain and write the declared outputs. Stages
// run sequentially; sweep points fan out over worker threads with
// deterministic per-point seeds, so the thread count never changes the
// report.
run_outcome run_scenario(const scenario_config& cfg);
run_outcome run_scenario_file(const std::string& path);

// Replay post-processing over a saved session log (CSV or binary) using the
// scenario's source intensities and protocol configuration. The scenario's
// stage list is not executed and its declared outputs are not written; the
// returned report carries a "session" summary of the loaded log and a
// "postproc" section, and the outcome carries the key material.
run_outcome postprocess_log_file(const scenario_config& cfg, const std::string& log_path);

// Canonical serialization used for files and hashing: sorted keys, 2-space
// indent, trailing newline.
std::string dump_report(const nlohmann::json& report);

// --------------------------------------------------------------- series

// Extract one named series from a report as a two-column text table
// ("x y" rows, '#' comment header). Raises unknown_metric when the report
// carries no series of that name (an empty report has none).
std::string series_to_text(const nlohmann::json& report, const std::string& metric);
void emit_series(const nlohmann::json& report, const std::string& metric,
                 const std::string& out_path);

// Series names available in a report, sorted.
std::vector<std::string> list_series(const nlohmann::json& report);

} // namespace qkd::scenario
