#include "risk/risk.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace qkd::risk {

grade_t grade(const risk_factors& f) {
    if (f.solved) return grade_t::solved;
    int sum = f.loophole_likelihood + f.current_technology + f.key_leakage;
    if (sum <= 1) return grade_t::low;
    if (sum == 2) return grade_t::medium;
    return grade_t::high;
}

std::string grade_name(grade_t g) {
    switch (g) {
    case grade_t::low: return "L";
    case grade_t::medium: return "M";
    case grade_t::high: return "H";
    case grade_t::solved: return "Solved";
    }
    fail(errc::generic, "unreachable grade value");
}

grade_t grade_from_name(const std::string& name) {
    if (name == "L") return grade_t::low;
    if (name == "M") return grade_t::medium;
    if (name == "H") return grade_t::high;
    if (name == "Solved") return grade_t::solved;
    fail(errc::config_invalid, "unknown grade '" + name + "' (expected L, M, H or Solved)");
}

void validate_issue(const issue_record& rec) {
    if (rec.id.empty()) fail(errc::config_invalid, "issue record has an empty id");
    if (rec.title.empty()) fail(errc::config_invalid, "issue '" + rec.id + "' has an empty title");
    if (rec.layers.empty())
        fail(errc::config_invalid, "issue '" + rec.id + "' names no implementation layers");
    for (std::size_t i = 0; i < rec.layers.size(); ++i) {
        int q = rec.layers[i];
        if (q < 1 || q > 7)
            fail(errc::config_invalid,
                 "issue '" + rec.id + "': layer Q" + std::to_string(q) + " is outside Q1..Q7");
        if (i > 0 && rec.layers[i - 1] >= q)
            fail(errc::config_invalid,
                 "issue '" + rec.id + "': layers must be sorted without duplicates");
    }
    auto binary = [&](int v, const char* what) {
        if (v != 0 && v != 1)
            fail(errc::config_invalid,
                 "issue '" + rec.id + "': " + what + " must be 0 or 1");
    };
    binary(rec.factors.loophole_likelihood, "loophole_likelihood");
    binary(rec.factors.current_technology, "current_technology");
    binary(rec.factors.key_leakage, "key_leakage");
    if (rec.grade != grade(rec.factors))
        fail(errc::config_invalid, "issue '" + rec.id + "': stored grade " +
                                       grade_name(rec.grade) +
                                       " does not match its factors (expected " +
                                       grade_name(grade(rec.factors)) + ")");
}

std::string layers_to_string(const std::vector<int>& layers) {
    std::string out = "Q";
    std::size_t i = 0;
    while (i < layers.size()) {
        std::size_t j = i;
        while (j + 1 < layers.size() && layers[j + 1] == layers[j] + 1) ++j;
        if (i > 0) out += ",";
        out += std::to_string(layers[i]);
        if (j > i) out += (j == i + 1 ? "," : "-") + std::to_string(layers[j]);
        i = j + 1;
    }
    return out;
}

std::vector<int> parse_layers(const std::string& text) {
    std::vector<int> out;
    std::string token;
    std::istringstream in(text);
    while (std::getline(in, token, ',')) {
        if (!token.empty() && (token[0] == 'Q' || token[0] == 'q')) token.erase(0, 1);
        auto dash = token.find('-');
        try {
            if (dash == std::string::npos) {
                out.push_back(std::stoi(token));
            } else {
                int lo = std::stoi(token.substr(0, dash));
                int hi = std::stoi(token.substr(dash + 1));
                for (int q = lo; q <= hi; ++q) out.push_back(q);
            }
        } catch (const std::exception&) {
            fail(errc::config_invalid, "cannot parse layer list '" + text + "'");
        }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    if (out.empty()) fail(errc::config_invalid, "layer list '" + text + "' is empty");
    return out;
}

namespace {

issue_record make_issue(std::string id, std::string title, std::vector<int> layers,
                        std::string target, risk_factors f, std::string recommendation,
                        std::string note = "") {
    issue_record rec;
    rec.id = std::move(id);
    rec.title = std::move(title);
    rec.layers = std::move(layers);
    rec.target = std::move(target);
    rec.factors = f;
    rec.grade = grade(f);
    rec.recommendation = std::move(recommendation);
    rec.note = std::move(note);
    return rec;
}

constexpr risk_factors solved_f{0, 0, 0, true};

} // namespace

std::vector<issue_record> builtin_issues() {
    std::vector<issue_record> v;
    v.push_back(make_issue(
        "protocol_choice", "Choice of QKD protocol", {5}, "protocol", solved_f, "None."));
    v.push_back(make_issue(
        "superlinear_detector_control", "Superlinear detector control", {1, 2, 3, 4, 5, 7},
        "single-photon detectors", {1, 1, 1, false},
        "Finish the photocurrent-measurement countermeasure and test it against "
        "blinding-class attacks on a stand-alone detector, then in the full system."));
    v.push_back(make_issue(
        "detector_efficiency_mismatch", "Detector efficiency mismatch", {1, 2, 3, 4, 5},
        "single-photon detectors, receiver phase modulator", {1, 1, 1, false},
        "Update the key rate equation, spectrally characterise the receiver "
        "components, and review countermeasures to timing attacks."));
    v.push_back(make_issue(
        "detector_deadtime", "Detector deadtime", {1, 2, 5}, "single-photon detectors",
        {1, 1, 1, false},
        "Supplement the hardware simultaneous deadtime with an equivalent "
        "post-processing filter."));
    v.push_back(make_issue(
        "trojan_horse", "Trojan-horse light injection", {1, 2}, "transmitter optics",
        {0, 0, 0, false},
        "Characterise the transmitter components over a wide spectral range; "
        "install additional isolators and, possibly, spectral filters."));
    v.push_back(make_issue(
        "laser_seeding", "Laser seeding", {1, 2}, "source laser", solved_f, "None."));
    v.push_back(make_issue(
        "power_meter_injection", "Light injection into the transmitter power meter",
        {1, 2, 3}, "intensity modulator", {1, 0, 0, false},
        "Characterise the transmitter components over a wide spectral range; "
        "install additional isolators and, possibly, spectral filters.",
        "A published attack on measurement-device-independent systems exploits "
        "this vulnerability, slightly raising the risk."));
    v.push_back(make_issue(
        "induced_photorefraction", "Induced photorefraction", {1, 2, 3},
        "transmitter intensity and phase modulators", {0, 1, 1, false},
        "Characterise the transmitter components over a wide spectral range and "
        "measure the photorefractive response of the modulators."));
    v.push_back(make_issue(
        "laser_damage", "Laser damage", {1}, "transmitter and receiver optics",
        {1, 0, 1, false},
        "Install an additional sacrificial isolator at the transmitter exit.",
        "Receiver-side evaluation scores (0,1,1): less likely to exist there, but "
        "exploitable with today's technology and potentially high-yield."));
    v.push_back(make_issue(
        "apd_backflash", "APD backflash", {1, 2}, "single-photon detectors",
        {1, 1, 0, false},
        "Characterise the receiver components over a wide spectral range; measure "
        "the backflash photon emission probability of the detectors."));
    v.push_back(make_issue(
        "intersymbol_interference", "Intersymbol interference", {1, 2, 3},
        "transmitter active components", {1, 0, 0, false},
        "Measure pulse correlations optically."));
    v.push_back(make_issue(
        "imperfect_state_preparation", "Imperfect state preparation", {1, 2, 3, 5},
        "transmitter optics", {1, 0, 0, false},
        "Measure the prepared polarisation states optically."));
    v.push_back(make_issue(
        "calibration_via_channel", "Calibration via the public channel", {1, 2, 3, 4, 5},
        "single-photon detectors, intensity and phase modulators", {1, 1, 1, false},
        "Redesign the synchronisation and calibration procedures so they cannot "
        "be steered from the channel."));
    v.push_back(make_issue(
        "qrng", "Quantum random number generator", {5}, "protocol", {1, 0, 0, false},
        "Implement the quantum random number generator and integrate it into the "
        "system."));
    v.push_back(make_issue(
        "supply_chain", "Compromised supply chain", {1, 2, 3, 4, 5, 6, 7}, "any component",
        {0, 1, 1, false},
        "Learn mitigation strategies from the national cryptography licensing "
        "authority."));
    return v;
}

std::string record_to_json_line(const issue_record& rec) {
    nlohmann::json j;
    j["id"] = rec.id;
    j["title"] = rec.title;
    j["layers"] = rec.layers;
    j["target"] = rec.target;
    j["solved"] = rec.factors.solved;
    j["factors"] = {{"loophole_likelihood", rec.factors.loophole_likelihood},
                    {"current_technology", rec.factors.current_technology},
                    {"key_leakage", rec.factors.key_leakage}};
    j["grade"] = grade_name(rec.grade);
    j["recommendation"] = rec.recommendation;
    if (!rec.note.empty()) j["note"] = rec.note;
    return j.dump();
}

issue_record record_from_json_line(const std::string& line) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        fail(errc::config_invalid, std::string("malformed ledger line: ") + e.what());
    }
    issue_record rec;
    try {
        rec.id = j.at("id").get<std::string>();
        rec.title = j.at("title").get<std::string>();
        rec.layers = j.at("layers").get<std::vector<int>>();
        rec.target = j.at("target").get<std::string>();
        rec.factors.solved = j.at("solved").get<bool>();
        const auto& f = j.at("factors");
        rec.factors.loophole_likelihood = f.at("loophole_likelihood").get<int>();
        rec.factors.current_technology = f.at("current_technology").get<int>();
        rec.factors.key_leakage = f.at("key_leakage").get<int>();
        rec.grade = grade_from_name(j.at("grade").get<std::string>());
        rec.recommendation = j.at("recommendation").get<std::string>();
        if (j.contains("note")) rec.note = j.at("note").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        fail(errc::config_invalid, std::string("ledger record is missing fields: ") + e.what());
    }
    validate_issue(rec);
    return rec;
}

ledger::ledger(std::string path) : path_(std::move(path)) {
    std::ifstream in(path_);
    if (!in) {
        // First use: create the backing file so later appends have a target.
        std::ofstream out(path_, std::ios::app);
        if (!out) fail(errc::io, "cannot create ledger file '" + path_ + "'");
        return;
    }
    std::string line;
    std::set<std::string> seen;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        issue_record rec = record_from_json_line(line);
        if (!seen.insert(rec.id).second)
            fail(errc::duplicate_id, "ledger '" + path_ + "' has duplicate id '" + rec.id + "'");
        records_.push_back(std::move(rec));
    }
}

void ledger::add(const issue_record& rec) {
    validate_issue(rec);
    if (find(rec.id) != nullptr)
        fail(errc::duplicate_id, "issue '" + rec.id + "' is already in the ledger");
    std::ofstream out(path_, std::ios::app);
    if (!out) fail(errc::io, "cannot open ledger file '" + path_ + "' for append");
    out << record_to_json_line(rec) << '\n';
    if (!out) fail(errc::io, "failed writing ledger file '" + path_ + "'");
    records_.push_back(rec);
}

std::size_t ledger::seed_builtin() {
    std::size_t added = 0;
    for (const auto& rec : builtin_issues()) {
        if (find(rec.id) != nullptr) continue;
        add(rec);
        ++added;
    }
    return added;
}

const issue_record* ledger::find(const std::string& id) const {
    for (const auto& rec : records_)
        if (rec.id == id) return &rec;
    return nullptr;
}

std::vector<issue_record> ledger::list(int layer) const {
    std::vector<issue_record> out;
    for (const auto& rec : records_) {
        if (layer != 0 &&
            std::find(rec.layers.begin(), rec.layers.end(), layer) == rec.layers.end())
            continue;
        out.push_back(rec);
    }
    return out;
}

std::string ledger::export_table(int layer) const {
    auto rows = list(layer);
    std::vector<std::array<std::string, 5>> cells;
    cells.push_back({"ISSUE", "LAYERS", "TARGET", "RECOMMENDATION", "GRADE"});
    for (const auto& rec : rows)
        cells.push_back({rec.title, layers_to_string(rec.layers), rec.target,
                         rec.recommendation, grade_name(rec.grade)});
    std::array<std::size_t, 5> width{};
    for (const auto& row : cells)
        for (std::size_t c = 0; c < 5; ++c) width[c] = std::max(width[c], row[c].size());
    std::string out;
    for (const auto& row : cells) {
        for (std::size_t c = 0; c < 5; ++c) {
            out += row[c];
            if (c + 1 < 5) out += std::string(width[c] - row[c].size() + 2, ' ');
        }
        out += '\n';
    }
    return out;
}

std::string ledger::export_records(int layer) const {
    std::string out;
    for (const auto& rec : list(layer)) {
        out += record_to_json_line(rec);
        out += '\n';
    }
    return out;
}

} // namespace qkd::risk
