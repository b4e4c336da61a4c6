#ifndef QKDWB_H
#define QKDWB_H
/*
 * C interface to the QKD security workbench.
 *
 * Every entry point returns a qkdwb_status (0 = success); on failure a
 * human-readable message is available from qkdwb_last_error() until the next
 * call on the same thread. Strings returned through char** out-parameters
 * are heap-allocated and must be released with qkdwb_string_free(); on
 * failure out-parameters are left untouched except where noted.
 *
 * All file paths are passed through to the filesystem as-is; relative paths
 * inside a scenario document resolve against the document's own directory.
 */

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

/**
 * Status codes. These mirror the library's error taxonomy one-to-one and
 * double as the CLI's exit codes, so the list is append-only.
 */
typedef enum qkdwb_status {
    QKDWB_OK = 0,
    QKDWB_E_GENERIC = 1,               /**< unexpected failure */
    QKDWB_E_CONFIG_INVALID = 2,        /**< malformed or inconsistent configuration */
    QKDWB_E_MISSING_SPECTRAL_DATA = 3, /**< wavelength outside a component's table */
    QKDWB_E_ABORT_BLOCK = 4,           /**< every processed block aborted without key */
    QKDWB_E_UNKNOWN_METRIC = 5,        /**< report carries no series of that name */
    QKDWB_E_DUPLICATE_ID = 6,          /**< issue id already present in the ledger */
    QKDWB_E_IO = 7,                    /**< file could not be read or written */
    QKDWB_E_NOT_BLINDED = 8,           /**< bright-pulse response of an unblinded detector */
    QKDWB_E_INTENSITY_ORDER = 9        /**< source intensities violate mu > nu1 > nu2 */
} qkdwb_status;

/** Library version string, e.g. "1.0.0". Static storage; do not free. */
const char* qkdwb_version(void);

/** Stable name of a status code ("ok", "config_invalid", ...). Static storage. */
const char* qkdwb_status_name(int status);

/**
 * Message of the most recent failure on the calling thread, or "" when the
 * last call succeeded. Valid until the next qkdwb_* call on this thread.
 */
const char* qkdwb_last_error(void);

/** Release a string returned through a char** out-parameter. NULL is a no-op. */
void qkdwb_string_free(char* s);

/* ------------------------------------------------------------- scenarios */

/**
 * Load, validate, and run a scenario file end to end: executes the declared
 * stage chain, writes the declared output files, and hands back the report
 * document as JSON text in *report_json (may be NULL when the caller only
 * wants the side effects and the status).
 *
 * Returns QKDWB_E_ABORT_BLOCK when post-processing ran and every completed
 * block aborted; the report is still produced and written in that case.
 */
int qkdwb_run_scenario(const char* scenario_path, char** report_json);

/**
 * Like qkdwb_run_scenario, with two optional overrides applied to the
 * document before validation:
 *
 *  - stages: comma-separated stage names (e.g. "budget" or
 *    "simulate,postproc") replacing the scenario's stage list. NULL or ""
 *    keeps the declared stages.
 *  - output_json: JSON object replacing the scenario's "output" section;
 *    "{}" removes all declared outputs. NULL keeps them.
 *
 * The overridden document is validated as a whole, so an override that
 * leaves an output without its producing stage is rejected.
 */
int qkdwb_run_stages(const char* scenario_path, const char* stages, const char* output_json,
                     char** report_json);

/**
 * Replay post-processing over a saved session log (CSV or binary,
 * auto-detected) using the source and protocol sections of the scenario
 * file. The scenario's stage list is not executed and its declared outputs
 * are not written. *report_json (optional) receives a report with the log
 * summary and the per-block results; *key_hex (optional) receives one
 * lowercase-hex secret key per non-aborted block, newline-terminated, empty
 * when no block yielded key.
 *
 * Returns QKDWB_E_ABORT_BLOCK when blocks completed and all of them
 * aborted; the report is still produced.
 */
int qkdwb_postprocess(const char* scenario_path, const char* session_log_path,
                      char** report_json, char** key_hex);

/* --------------------------------------------------------------- series */

/**
 * Extract one named series from a report file as a two-column text table
 * ("x y" rows under '#' comment headers). When out_path is non-NULL the
 * table is also written there. *series_text (optional) receives the text.
 * Returns QKDWB_E_UNKNOWN_METRIC when the report has no such series.
 */
int qkdwb_emit_series(const char* report_path, const char* metric, const char* out_path,
                      char** series_text);

/**
 * List the series available in a report file as a JSON array of names
 * (sorted). An empty report yields "[]".
 */
int qkdwb_list_series(const char* report_path, char** metrics_json);

/* --------------------------------------------------------- risk ledger */

/**
 * Append-only ledger of implementation-security issues, backed by a
 * line-delimited JSON file. Opening a missing file creates an empty ledger;
 * the file appears on the first write.
 */
typedef struct qkdwb_ledger qkdwb_ledger;

/** Open (or create) a ledger. On success *out owns the handle. */
int qkdwb_ledger_open(const char* path, qkdwb_ledger** out);

/** Close a ledger handle. NULL is a no-op. */
void qkdwb_ledger_close(qkdwb_ledger* ledger);

/**
 * Validate and append one issue record given as a single JSON line (the
 * format produced by qkdwb_ledger_records). Fails with
 * QKDWB_E_DUPLICATE_ID when the id is already present.
 */
int qkdwb_ledger_add(qkdwb_ledger* ledger, const char* record_json);

/**
 * Add the stock issue list of the reference system, skipping ids already
 * present. *n_added (optional) receives the number of records appended.
 */
int qkdwb_ledger_seed_builtin(qkdwb_ledger* ledger, size_t* n_added);

/**
 * Export records as line-delimited JSON. layer 0 exports everything;
 * 1..7 restricts to issues touching that implementation layer.
 */
int qkdwb_ledger_records(qkdwb_ledger* ledger, int layer, char** records_jsonl);

/** Export the same selection as an aligned text table. */
int qkdwb_ledger_table(qkdwb_ledger* ledger, int layer, char** table_text);

/** Number of records in the ledger. */
int qkdwb_ledger_size(const qkdwb_ledger* ledger, size_t* n);

/* ----------------------------------------------------------- self check */

/**
 * Run the golden-number battery. full != 0 runs every check (around a
 * minute); full == 0 runs only the closed-form checks (sub-second).
 * n_threads caps the Monte-Carlo worker count, 0 = hardware concurrency.
 *
 * *text (optional) receives the PASS/FAIL listing; *n_unexpected (optional)
 * receives the number of failures that are NOT the documented expected
 * failure (see the listing). Returns QKDWB_OK when that number is zero.
 */
int qkdwb_self_check(int full, int n_threads, char** text, size_t* n_unexpected);

#ifdef __cplusplus
}
#endif

#endif /* QKDWB_H */
