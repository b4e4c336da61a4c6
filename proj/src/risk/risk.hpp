#pragma once
// Three-parameter risk grading of implementation-security issues and a
// persistent append-only ledger of them.
//
// Each open issue is scored by three binary parameters: whether the loophole
// is likely to exist in the system, whether it is exploitable with today's
// technology, and whether a successful exploit yields (nearly) full key
// information. The sum maps to a coarse grade: 0-1 low, 2 medium, 3 high.
// An issue that has been eliminated is graded "Solved" and its parameters
// are ignored.

#include <cstddef>
#include <string>
#include <vector>

#include "support/util.hpp"

namespace qkd::risk {

enum class grade_t { low, medium, high, solved };

struct risk_factors {
    int loophole_likelihood = 0; // 1: confirmed or suspected likely to exist
    int current_technology = 0;  // 1: exploit buildable with components available today
    int key_leakage = 0;         // 1: attack yields full or nearly full key information
    bool solved = false;         // grading ignores the three parameters when set
};

// Pure grading function; permutation-invariant in the three binary parameters.
grade_t grade(const risk_factors& f);

std::string grade_name(grade_t g); // "L", "M", "H", "Solved"
grade_t grade_from_name(const std::string& name);

struct issue_record {
    std::string id;    // stable snake_case identifier, unique within a ledger
    std::string title;
    std::vector<int> layers; // implementation layers involved, subset of {1..7}
    std::string target;      // component(s) the issue lives in
    risk_factors factors;
    grade_t grade = grade_t::low; // must equal grade(factors)
    std::string recommendation;
    std::string note; // free-text addendum (the scale has no fractional grades)
};

// Throws config_invalid unless: id and title non-empty, layers non-empty with
// each value in 1..7 (sorted, duplicates rejected), factors binary, and the
// stored grade equals grade(factors).
void validate_issue(const issue_record& rec);

// "Q1-5,7" style compression of a sorted layer set, and its inverse.
// parse_layers also accepts bare digits ("1,2,5") and lone ranges ("Q1-3").
std::string layers_to_string(const std::vector<int>& layers);
std::vector<int> parse_layers(const std::string& text);

// The stock issue list for the reference system: fifteen records covering
// detector control, efficiency mismatch, deadtime, light-injection attacks,
// source imperfections, calibration, randomness, and supply chain.
std::vector<issue_record> builtin_issues();

// One structured-text line per record (sorted keys, no embedded newlines).
std::string record_to_json_line(const issue_record& rec);
issue_record record_from_json_line(const std::string& line);

// Append-only ledger backed by a line-delimited structured-text file.
// Loading validates every record; add() refuses duplicate ids. Writes are
// single-writer; list/export work on an in-memory snapshot.
class ledger {
  public:
    explicit ledger(std::string path);

    const std::string& path() const { return path_; }
    std::size_t size() const { return records_.size(); }

    void add(const issue_record& rec);
    std::size_t seed_builtin(); // adds stock issues not already present; returns count added

    const issue_record* find(const std::string& id) const;

    // layer == 0 lists everything; otherwise only records whose layer set
    // contains the given layer.
    std::vector<issue_record> list(int layer = 0) const;

    std::string export_table(int layer = 0) const;   // aligned text columns
    std::string export_records(int layer = 0) const; // one structured line per record

  private:
    std::string path_;
    std::vector<issue_record> records_;
};

} // namespace qkd::risk
