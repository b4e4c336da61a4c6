#include "scenario/scenario.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <initializer_list>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "support/rng.hpp"

namespace qkd::scenario {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

[[noreturn]] void bad(const std::string& msg) { fail(errc::config_invalid, msg); }

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// ------------------------------------------------------- strict JSON access
//
// Scenario and catalog files are configuration contracts, so unknown keys
// and wrong value types are rejected loudly instead of silently ignored.

const json& expect_object(const json& j, const std::string& ctx) {
    if (!j.is_object()) bad(ctx + " must be a JSON object");
    return j;
}

void expect_keys(const json& obj, std::initializer_list<const char*> allowed,
                 const std::string& ctx) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = std::any_of(allowed.begin(), allowed.end(),
                                 [&](const char* k) { return it.key() == k; });
        if (!known) bad("unrecognized key '" + it.key() + "' in " + ctx);
    }
}

const json* find(const json& obj, const char* key) {
    auto it = obj.find(key);
    return it == obj.end() ? nullptr : &*it;
}

double get_num(const json& obj, const char* key, double dflt, const std::string& ctx) {
    const json* v = find(obj, key);
    if (!v) return dflt;
    if (!v->is_number()) bad(ctx + "." + key + " must be a number");
    return v->get<double>();
}

uint64_t get_uint(const json& obj, const char* key, uint64_t dflt, const std::string& ctx) {
    const json* v = find(obj, key);
    if (!v) return dflt;
    if (v->is_number_unsigned()) return v->get<uint64_t>();
    if (v->is_number_integer() && v->get<int64_t>() >= 0)
        return static_cast<uint64_t>(v->get<int64_t>());
    bad(ctx + "." + key + " must be a non-negative integer");
}

bool get_bool(const json& obj, const char* key, bool dflt, const std::string& ctx) {
    const json* v = find(obj, key);
    if (!v) return dflt;
    if (!v->is_boolean()) bad(ctx + "." + key + " must be a boolean");
    return v->get<bool>();
}

std::string get_str(const json& obj, const char* key, const std::string& dflt,
                    const std::string& ctx) {
    const json* v = find(obj, key);
    if (!v) return dflt;
    if (!v->is_string()) bad(ctx + "." + key + " must be a string");
    return v->get<std::string>();
}

json parse_json_text(const std::string& text, const std::string& origin) {
    json doc = json::parse(text, nullptr, /*allow_exceptions=*/false);
    if (doc.is_discarded()) bad("malformed JSON in " + origin);
    return doc;
}

// -------------------------------------------------------------- file paths

fs::path anchored(const std::string& base_dir, const std::string& path) {
    fs::path p = path;
    if (p.is_relative() && !base_dir.empty()) p = fs::path(base_dir) / p;
    return p;
}

void write_text_creating_dirs(const fs::path& p, const std::string& content) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    write_text_file(p.string(), content);
}

// --------------------------------------------------------- parallel sweeps
//
// Sweep points are independent; they fan out over a small worker pool.
// Every point owns a seed derived from the scenario seed and the point
// index, so scheduling and thread count never influence the result. The
// first exception raised by any point is rethrown in the calling thread.

template <class Fn>
void parallel_points(size_t n, int n_threads, uint64_t seed, Fn&& fn) {
    if (n == 0) return;
    unsigned hw = std::thread::hardware_concurrency();
    size_t workers = n_threads > 0 ? size_t(n_threads) : size_t(hw ? hw : 1);
    workers = std::min(workers, n);

    const rng point_base = rng(seed).substream(0x73776565ull); // sweep-point seed family
    std::atomic<size_t> next{0};
    std::mutex err_mutex;
    std::exception_ptr first_error;

    auto work = [&] {
        for (;;) {
            size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i, point_base.substream(i).base_seed());
            } catch (...) {
                std::lock_guard<std::mutex> hold(err_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };

    std::vector<std::thread> pool;
    for (size_t w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

} // namespace

// ------------------------------------------------------------------ catalogs

namespace {

json points_to_json(const std::vector<std::pair<double, double>>& pts) {
    json arr = json::array();
    for (const auto& [nm, db] : pts) arr.push_back(json{{"wavelength_nm", nm}, {"loss_db", db}});
    return arr;
}

std::vector<std::pair<double, double>> points_from_json(const json& arr, const std::string& ctx) {
    if (!arr.is_array() || arr.empty()) bad(ctx + " must be a non-empty array of points");
    std::vector<std::pair<double, double>> pts;
    for (const json& p : arr) {
        expect_object(p, ctx + " entry");
        expect_keys(p, {"wavelength_nm", "loss_db"}, ctx + " entry");
        if (!find(p, "wavelength_nm") || !find(p, "loss_db"))
            bad(ctx + " entries need wavelength_nm and loss_db");
        pts.emplace_back(get_num(p, "wavelength_nm", 0.0, ctx),
                         get_num(p, "loss_db", 0.0, ctx));
    }
    return pts;
}

} // namespace

json catalog_to_json(const lossbudget::catalog& cat) {
    json comps = json::object();
    for (const auto& [id, c] : cat.components) {
        json jc;
        jc["loss_forward_db"] = points_to_json(c.loss_forward);
        if (c.loss_reverse != c.loss_forward)
            jc["loss_reverse_db"] = points_to_json(c.loss_reverse);
        comps[id] = jc;
    }
    json doc;
    doc["schema"] = catalog_schema;
    doc["name"] = cat.name;
    doc["description"] = cat.description;
    doc["components"] = comps;
    return doc;
}

lossbudget::catalog catalog_from_json(const json& doc) {
    expect_object(doc, "catalog");
    expect_keys(doc, {"schema", "name", "description", "components"}, "catalog");
    if (get_str(doc, "schema", "", "catalog") != catalog_schema)
        bad(std::string("catalog schema must be \"") + catalog_schema + "\"");

    lossbudget::catalog cat;
    cat.name = get_str(doc, "name", "", "catalog");
    if (cat.name.empty()) bad("catalog.name must be a non-empty string");
    cat.description = get_str(doc, "description", "", "catalog");

    const json* comps = find(doc, "components");
    if (!comps || !comps->is_object() || comps->empty())
        bad("catalog.components must be a non-empty object");
    for (auto it = comps->begin(); it != comps->end(); ++it) {
        const std::string ctx = "catalog.components." + it.key();
        expect_object(*it, ctx);
        expect_keys(*it, {"loss_forward_db", "loss_reverse_db"}, ctx);
        const json* fw = find(*it, "loss_forward_db");
        if (!fw) bad(ctx + " needs loss_forward_db");
        lossbudget::component_spec c;
        c.name = it.key();
        c.loss_forward = points_from_json(*fw, ctx + ".loss_forward_db");
        const json* rv = find(*it, "loss_reverse_db");
        c.loss_reverse = rv ? points_from_json(*rv, ctx + ".loss_reverse_db") : c.loss_forward;
        cat.components[it.key()] = std::move(c);
    }
    lossbudget::validate_catalog(cat);
    return cat;
}

lossbudget::catalog load_catalog_file(const std::string& path) {
    return catalog_from_json(parse_json_text(read_text_file(path), path));
}

lossbudget::catalog resolve_catalog(const std::string& ref, const std::string& base_dir) {
    if (ref.empty()) bad("catalog reference is empty");
    bool path_like = ref.find('/') != std::string::npos || ends_with(ref, ".json");
    if (path_like) {
        fs::path p = anchored(base_dir, ref);
        if (!fs::exists(p)) bad("catalog file not found: " + p.string());
        return load_catalog_file(p.string());
    }
    if (const char* env = std::getenv("QKDWB_CATALOG_PATH")) {
        std::string dirs = env;
        size_t start = 0;
        while (start <= dirs.size()) {
            size_t colon = dirs.find(':', start);
            std::string dir =
                dirs.substr(start, colon == std::string::npos ? std::string::npos : colon - start);
            if (!dir.empty()) {
                fs::path p = fs::path(dir) / (ref + ".json");
                if (fs::exists(p)) return load_catalog_file(p.string());
            }
            if (colon == std::string::npos) break;
            start = colon + 1;
        }
    }
    return lossbudget::builtin_catalog(ref);
}

// ------------------------------------------------------------------- stages

const char* stage_name(stage_kind s) {
    switch (s) {
    case stage_kind::budget: return "budget";
    case stage_kind::simulate: return "simulate";
    case stage_kind::attack: return "attack";
    case stage_kind::postproc: return "postproc";
    case stage_kind::keyrate_sweep: return "keyrate_sweep";
    case stage_kind::blinding_sweep: return "blinding_sweep";
    }
    return "?";
}

stage_kind stage_from_name(const std::string& name) {
    if (name == "budget") return stage_kind::budget;
    if (name == "simulate") return stage_kind::simulate;
    if (name == "attack") return stage_kind::attack;
    if (name == "postproc") return stage_kind::postproc;
    if (name == "keyrate_sweep") return stage_kind::keyrate_sweep;
    if (name == "blinding_sweep") return stage_kind::blinding_sweep;
    bad("unknown stage '" + name + "'");
}

// ----------------------------------------------------------- section parsing

namespace {

linksim::source_config parse_source(const json* j) {
    linksim::source_config s;
    if (!j) return s;
    expect_object(*j, "source");
    expect_keys(*j, {"mu", "nu1", "nu2", "p_mu", "p_nu1", "p_nu2", "f_p_hz", "train_length"},
                "source");
    s.mu = get_num(*j, "mu", s.mu, "source");
    s.nu1 = get_num(*j, "nu1", s.nu1, "source");
    s.nu2 = get_num(*j, "nu2", s.nu2, "source");
    s.p_mu = get_num(*j, "p_mu", s.p_mu, "source");
    s.p_nu1 = get_num(*j, "p_nu1", s.p_nu1, "source");
    s.p_nu2 = get_num(*j, "p_nu2", s.p_nu2, "source");
    s.f_p_hz = get_num(*j, "f_p_hz", s.f_p_hz, "source");
    s.train_length = static_cast<uint32_t>(get_uint(*j, "train_length", s.train_length, "source"));
    return s;
}

linksim::channel_config parse_channel(const json* j) {
    linksim::channel_config c;
    if (!j) return c;
    expect_object(*j, "channel");
    expect_keys(*j, {"loss_db", "misalignment"}, "channel");
    c.loss_db = get_num(*j, "loss_db", c.loss_db, "channel");
    c.misalignment = get_num(*j, "misalignment", c.misalignment, "channel");
    return c;
}

linksim::detector_model parse_detector(const json* j, linksim::detector_model base,
                                       const std::string& ctx) {
    if (!j) return base;
    expect_object(*j, ctx);
    expect_keys(*j,
                {"efficiency", "dark_prob", "gate_period_s", "deadtime_s",
                 "crosslink_delay_gates", "recovery_profile", "recovery_end_s", "e_never_j",
                 "e_always_j", "blinding_power_w"},
                ctx);
    base.efficiency = get_num(*j, "efficiency", base.efficiency, ctx);
    base.dark_prob = get_num(*j, "dark_prob", base.dark_prob, ctx);
    base.gate_period_s = get_num(*j, "gate_period_s", base.gate_period_s, ctx);
    base.deadtime_s = get_num(*j, "deadtime_s", base.deadtime_s, ctx);
    base.crosslink_delay_gates = static_cast<int>(
        get_uint(*j, "crosslink_delay_gates", uint64_t(base.crosslink_delay_gates), ctx));
    if (const json* prof = find(*j, "recovery_profile")) {
        if (!prof->is_array()) bad(ctx + ".recovery_profile must be an array of numbers");
        base.recovery_profile.clear();
        for (const json& v : *prof) {
            if (!v.is_number()) bad(ctx + ".recovery_profile must be an array of numbers");
            base.recovery_profile.push_back(v.get<double>());
        }
    }
    base.recovery_end_s = get_num(*j, "recovery_end_s", base.recovery_end_s, ctx);
    base.e_never_j = get_num(*j, "e_never_j", base.e_never_j, ctx);
    base.e_always_j = get_num(*j, "e_always_j", base.e_always_j, ctx);
    base.blinding_power_w = get_num(*j, "blinding_power_w", base.blinding_power_w, ctx);
    return base;
}

simulation_config parse_simulation(const json* j) {
    simulation_config s;
    if (!j) return s;
    expect_object(*j, "simulation");
    expect_keys(*j,
                {"n_trains", "four_state_bob", "n_threads", "hardware_deadtime",
                 "software_filter_gates"},
                "simulation");
    s.n_trains = static_cast<uint32_t>(get_uint(*j, "n_trains", s.n_trains, "simulation"));
    s.four_state_bob = get_bool(*j, "four_state_bob", s.four_state_bob, "simulation");
    s.n_threads = static_cast<int>(get_uint(*j, "n_threads", uint64_t(s.n_threads), "simulation"));
    s.hardware_deadtime = get_bool(*j, "hardware_deadtime", s.hardware_deadtime, "simulation");
    s.software_filter_gates =
        get_uint(*j, "software_filter_gates", s.software_filter_gates, "simulation");
    if (s.n_trains == 0) bad("simulation.n_trains must be at least 1");
    return s;
}

attacks::attack_config parse_attack(const json* j, bool& compensating) {
    attacks::attack_config a;
    compensating = false;
    if (!j) return a;
    expect_object(*j, "attack");
    expect_keys(*j,
                {"kind", "eve_position_loss_db", "blinding_power_w", "trigger_energy_j",
                 "resend_probability", "injection_mean_photons"},
                "attack");
    a.kind = attacks::attack_kind_from_name(get_str(*j, "kind", "none", "attack"));
    a.eve_position_loss_db = get_num(*j, "eve_position_loss_db", a.eve_position_loss_db, "attack");
    a.blinding_power_w = get_num(*j, "blinding_power_w", a.blinding_power_w, "attack");
    a.trigger_energy_j = get_num(*j, "trigger_energy_j", a.trigger_energy_j, "attack");
    if (const json* rp = find(*j, "resend_probability")) {
        if (rp->is_string()) {
            if (rp->get<std::string>() != "compensating")
                bad("attack.resend_probability must be a number or \"compensating\"");
            compensating = true; // resolved against the honest link at run time
        } else if (rp->is_number()) {
            a.resend_probability = rp->get<double>();
        } else {
            bad("attack.resend_probability must be a number or \"compensating\"");
        }
    }
    a.injection_mean_photons =
        get_num(*j, "injection_mean_photons", a.injection_mean_photons, "attack");
    return a;
}

postproc::protocol_config parse_protocol(const json* j, uint64_t scenario_seed) {
    postproc::protocol_config p;
    p.seed = scenario_seed;
    if (!j) return p;
    expect_object(*j, "protocol");
    expect_keys(*j,
                {"eps_decoy", "eps_pa", "apriori_qber", "mode", "oracle_rate", "punctured_bits",
                 "n_subblocks", "round_index", "seed"},
                "protocol");
    p.eps_decoy = get_num(*j, "eps_decoy", p.eps_decoy, "protocol");
    p.eps_pa = get_num(*j, "eps_pa", p.eps_pa, "protocol");
    p.apriori_qber = get_num(*j, "apriori_qber", p.apriori_qber, "protocol");
    std::string mode = get_str(*j, "mode", "ldpc", "protocol");
    if (mode == "ldpc")
        p.mode = postproc::reconcile_mode::ldpc;
    else if (mode == "oracle")
        p.mode = postproc::reconcile_mode::oracle;
    else
        bad("protocol.mode must be \"ldpc\" or \"oracle\"");
    p.oracle_rate = get_num(*j, "oracle_rate", p.oracle_rate, "protocol");
    p.punctured_bits =
        static_cast<uint32_t>(get_uint(*j, "punctured_bits", p.punctured_bits, "protocol"));
    p.n_subblocks = static_cast<uint32_t>(get_uint(*j, "n_subblocks", p.n_subblocks, "protocol"));
    p.round_index = static_cast<uint32_t>(get_uint(*j, "round_index", p.round_index, "protocol"));
    p.seed = get_uint(*j, "seed", p.seed, "protocol");
    return p;
}

keyrate_sweep_config parse_keyrate_sweep(const json* j) {
    keyrate_sweep_config k;
    if (!j) return k;
    expect_object(*j, "sweep.keyrate");
    expect_keys(*j, {"loss_from_db", "loss_to_db", "loss_step_db", "n_pulses"}, "sweep.keyrate");
    k.loss_from_db = get_num(*j, "loss_from_db", k.loss_from_db, "sweep.keyrate");
    k.loss_to_db = get_num(*j, "loss_to_db", k.loss_to_db, "sweep.keyrate");
    k.loss_step_db = get_num(*j, "loss_step_db", k.loss_step_db, "sweep.keyrate");
    k.n_pulses = get_num(*j, "n_pulses", k.n_pulses, "sweep.keyrate");
    if (!(k.loss_step_db > 0)) bad("sweep.keyrate.loss_step_db must be positive");
    if (!(k.loss_to_db >= k.loss_from_db) || k.loss_from_db < 0)
        bad("sweep.keyrate loss range must satisfy 0 <= loss_from_db <= loss_to_db");
    if (!(k.n_pulses > 0)) bad("sweep.keyrate.n_pulses must be positive");
    if ((k.loss_to_db - k.loss_from_db) / k.loss_step_db > 1e6)
        bad("sweep.keyrate declares more than a million points");
    return k;
}

blinding_sweep_config parse_blinding_sweep(const json* j) {
    blinding_sweep_config b;
    if (!j) return b;
    expect_object(*j, "sweep.blinding");
    expect_keys(*j, {"energy_from_j", "energy_to_j", "energy_points"}, "sweep.blinding");
    b.energy_from_j = get_num(*j, "energy_from_j", b.energy_from_j, "sweep.blinding");
    b.energy_to_j = get_num(*j, "energy_to_j", b.energy_to_j, "sweep.blinding");
    b.energy_points =
        static_cast<uint32_t>(get_uint(*j, "energy_points", b.energy_points, "sweep.blinding"));
    if (b.energy_from_j < 0 || !(b.energy_to_j > b.energy_from_j))
        bad("sweep.blinding energy range must satisfy 0 <= energy_from_j < energy_to_j");
    if (b.energy_points < 2) bad("sweep.blinding.energy_points must be at least 2");
    return b;
}

output_config parse_output(const json* j) {
    output_config o;
    if (!j) return o;
    expect_object(*j, "output");
    expect_keys(*j, {"report", "session_csv", "session_binary", "secret_key_hex"}, "output");
    o.report = get_str(*j, "report", "", "output");
    o.session_csv = get_str(*j, "session_csv", "", "output");
    o.session_binary = get_str(*j, "session_binary", "", "output");
    o.secret_key_hex = get_str(*j, "secret_key_hex", "", "output");
    return o;
}

lossbudget::optical_path parse_budget_path(const json& p, const lossbudget::catalog& cat,
                                           std::string& path_name) {
    if (p.is_string()) {
        const std::string name = p.get<std::string>();
        for (const auto& std_path : lossbudget::standard_injection_paths())
            if (std_path.name == name) {
                path_name = name;
                return std_path;
            }
        bad("unknown standard injection path '" + name + "'");
    }
    expect_object(p, "budget.path");
    expect_keys(p, {"name", "legs", "double_pass_reflection", "connector_loss_db", "n_connectors"},
                "budget.path");
    lossbudget::optical_path path;
    path.name = get_str(p, "name", "inline", "budget.path");
    const json* legs = find(p, "legs");
    if (!legs || !legs->is_array()) bad("budget.path.legs must be an array");
    for (const json& l : *legs) {
        expect_object(l, "budget.path leg");
        expect_keys(l, {"component", "direction", "passes"}, "budget.path leg");
        lossbudget::path_leg leg;
        leg.component = get_str(l, "component", "", "budget.path leg");
        if (leg.component.empty()) bad("budget.path leg needs a component id");
        std::string dir = get_str(l, "direction", "forward", "budget.path leg");
        if (dir == "forward")
            leg.dir = lossbudget::direction::forward;
        else if (dir == "reverse")
            leg.dir = lossbudget::direction::reverse;
        else
            bad("budget.path leg direction must be \"forward\" or \"reverse\"");
        leg.passes = static_cast<int>(get_uint(l, "passes", 1, "budget.path leg"));
        path.legs.push_back(leg);
    }
    path.double_pass_reflection = get_bool(p, "double_pass_reflection", false, "budget.path");
    path.connector_loss_db = get_num(p, "connector_loss_db", 0.0, "budget.path");
    path.n_connectors = static_cast<int>(get_uint(p, "n_connectors", 0, "budget.path"));
    lossbudget::validate_path(path);
    // Fail on unknown component ids now, before any stage output exists.
    for (const auto& leg : path.legs) cat.component(leg.component);
    path_name = path.name;
    return path;
}

bool has_stage(const std::vector<stage_kind>& stages, stage_kind s) {
    return std::find(stages.begin(), stages.end(), s) != stages.end();
}

} // namespace

// ------------------------------------------------------------ scenario parse

scenario_config parse_scenario(const json& doc, const std::string& base_dir) {
    expect_object(doc, "scenario");
    expect_keys(doc,
                {"schema", "name", "description", "seed", "stages", "catalog", "budget", "source",
                 "channel", "detector", "detector0", "detector1", "simulation", "attack",
                 "protocol", "sweep", "output"},
                "scenario");

    scenario_config cfg;
    cfg.base_dir = base_dir;
    cfg.echo = doc;

    if (get_str(doc, "schema", "", "scenario") != scenario_schema)
        bad(std::string("scenario schema must be \"") + scenario_schema + "\"");
    cfg.name = get_str(doc, "name", "", "scenario");
    if (cfg.name.empty()) bad("scenario.name must be a non-empty string");
    cfg.description = get_str(doc, "description", "", "scenario");

    // Reproducibility contract: every run is pinned to a declared seed. A
    // wall-clock default would make reports unrepeatable, so there is none.
    if (!find(doc, "seed")) bad("scenario must set an explicit seed");
    cfg.seed = get_uint(doc, "seed", 0, "scenario");

    const json* stages = find(doc, "stages");
    if (!stages || !stages->is_array() || stages->empty())
        bad("scenario.stages must be a non-empty array of stage names");
    for (const json& s : *stages) {
        if (!s.is_string()) bad("scenario.stages entries must be strings");
        stage_kind k = stage_from_name(s.get<std::string>());
        if (has_stage(cfg.stages, k)) bad("duplicate stage '" + s.get<std::string>() + "'");
        cfg.stages.push_back(k);
    }

    cfg.catalog_ref = get_str(doc, "catalog", "", "scenario");
    if (!cfg.catalog_ref.empty()) cfg.cat = resolve_catalog(cfg.catalog_ref, base_dir);

    if (has_stage(cfg.stages, stage_kind::budget)) {
        if (cfg.catalog_ref.empty()) bad("budget stage requires a catalog reference");
        const json* b = find(doc, "budget");
        if (!b) bad("budget stage requires a budget section");
        expect_object(*b, "budget");
        expect_keys(*b, {"w_in_w", "f_p_hz", "wavelength_nm", "path"}, "budget");
        cfg.budget.w_in_w = get_num(*b, "w_in_w", cfg.budget.w_in_w, "budget");
        cfg.budget.f_p_hz = get_num(*b, "f_p_hz", cfg.budget.f_p_hz, "budget");
        if (!find(*b, "wavelength_nm")) bad("budget needs an explicit wavelength_nm");
        cfg.budget.wavelength_nm = get_num(*b, "wavelength_nm", 0.0, "budget");
        const json* p = find(*b, "path");
        if (!p) bad("budget needs a path (standard path name or inline path object)");
        cfg.budget.path = parse_budget_path(*p, cfg.cat, cfg.budget_path_name);
    } else if (find(doc, "budget")) {
        bad("scenario has a budget section but no budget stage");
    }

    cfg.source = parse_source(find(doc, "source"));
    cfg.channel = parse_channel(find(doc, "channel"));
    linksim::detector_model det_base =
        parse_detector(find(doc, "detector"), linksim::detector_model{}, "detector");
    cfg.detector0 = parse_detector(find(doc, "detector0"), det_base, "detector0");
    cfg.detector1 = parse_detector(find(doc, "detector1"), det_base, "detector1");
    cfg.simulation = parse_simulation(find(doc, "simulation"));
    cfg.attack = parse_attack(find(doc, "attack"), cfg.attack_resend_compensating);
    cfg.protocol = parse_protocol(find(doc, "protocol"), cfg.seed);

    const json* sweep = find(doc, "sweep");
    if (sweep) {
        expect_object(*sweep, "sweep");
        expect_keys(*sweep, {"keyrate", "blinding"}, "sweep");
        cfg.keyrate = parse_keyrate_sweep(find(*sweep, "keyrate"));
        cfg.blinding = parse_blinding_sweep(find(*sweep, "blinding"));
    }
    cfg.output = parse_output(find(doc, "output"));

    // Whole-scenario validation, before any stage runs or output is written.
    linksim::validate(cfg.source);
    linksim::validate(cfg.channel);
    linksim::validate(cfg.detector0);
    linksim::validate(cfg.detector1);
    postproc::validate(cfg.protocol);

    bool makes_log = has_stage(cfg.stages, stage_kind::simulate) ||
                     has_stage(cfg.stages, stage_kind::attack);
    if (has_stage(cfg.stages, stage_kind::attack)) {
        attacks::validate(cfg.attack);
        if (cfg.attack.kind == attacks::attack_kind::deadtime_exploit &&
            cfg.simulation.four_state_bob)
            bad("deadtime_exploit assumes the fixed detector-bit map; four_state_bob must be off");
    }
    if (has_stage(cfg.stages, stage_kind::postproc)) {
        // The log consumed downstream must come from an earlier stage.
        size_t postproc_at = 0, log_at = cfg.stages.size();
        for (size_t i = 0; i < cfg.stages.size(); ++i) {
            if (cfg.stages[i] == stage_kind::postproc) postproc_at = i;
            if ((cfg.stages[i] == stage_kind::simulate || cfg.stages[i] == stage_kind::attack) &&
                i < log_at)
                log_at = i;
        }
        if (log_at >= postproc_at)
            bad("postproc stage requires a simulate or attack stage before it");
    }
    if ((!cfg.output.session_csv.empty() || !cfg.output.session_binary.empty()) && !makes_log)
        bad("session log outputs require a simulate or attack stage");
    if (!cfg.output.secret_key_hex.empty() && !has_stage(cfg.stages, stage_kind::postproc))
        bad("secret_key_hex output requires a postproc stage");

    return cfg;
}

scenario_config load_scenario_file(const std::string& path) {
    json doc = load_json_file(path);
    fs::path p = path;
    return parse_scenario(doc, p.has_parent_path() ? p.parent_path().string() : std::string());
}

json load_json_file(const std::string& path) {
    fs::path p = path;
    if (!fs::exists(p)) bad("file not found: " + p.string());
    return parse_json_text(read_text_file(p.string()), p.string());
}

// --------------------------------------------------------------- run helpers

namespace {

json class_triple(double mu, double nu1, double nu2) {
    return json{{"mu", mu}, {"nu1", nu1}, {"nu2", nu2}};
}

// Counting summary of a click log, shared by the simulate stage report and
// the attacked-log echo.
json summarize_log(const linksim::session_log& log) {
    postproc::sifted_keys sifted = postproc::sift(log);
    const auto& st = sifted.stats;
    json gains;
    for (int a = 0; a < 3; ++a) {
        const char* name = linksim::intensity_name(static_cast<linksim::intensity_class>(a));
        gains[name] = st.n[size_t(a)] > 0 ? st.m[size_t(a)] / st.n[size_t(a)] : 0.0;
    }
    double qber = 0.0;
    if (!sifted.alice.empty()) {
        bitvec diff = sifted.alice;
        diff.xor_with(sifted.bob);
        qber = double(diff.count_ones()) / double(diff.size());
    }
    json out;
    out["n_trains"] = log.header.n_trains;
    out["train_length"] = log.header.train_length;
    out["four_state_bob"] = log.header.four_state != 0;
    out["total_pulses"] = log.header.sent[0] + log.header.sent[1] + log.header.sent[2];
    out["sent"] = class_triple(double(log.header.sent[0]), double(log.header.sent[1]),
                               double(log.header.sent[2]));
    out["clicks"] = class_triple(st.m[0], st.m[1], st.m[2]);
    out["gain"] = gains;
    out["accepted_clicks"] = log.clicks.size();
    out["sifted_bits"] = sifted.alice.size();
    out["sifted_qber"] = qber;
    return out;
}

json block_to_json(const postproc::block_report& b) {
    json jb;
    jb["block_index"] = b.block_index;
    jb["aborted"] = b.aborted;
    jb["abort_reason"] = postproc::abort_reason_name(b.reason);
    jb["stats"] = json{{"sent", class_triple(b.stats.n[0], b.stats.n[1], b.stats.n[2])},
                       {"clicks", class_triple(b.stats.m[0], b.stats.m[1], b.stats.m[2])}};

    const auto& r = b.reconciliation;
    json sub = json::array();
    for (const auto& s : r.subblocks)
        sub.push_back(json{{"index", s.index},
                           {"converged", s.converged},
                           {"verified", s.verified},
                           {"rate", s.rate},
                           {"syndrome_bits", s.syndrome_bits},
                           {"disclosed_bits", s.disclosed_bits},
                           {"corrected_bits", s.corrected_bits},
                           {"qber", s.qber}});
    jb["reconciliation"] = json{{"subblocks", sub},
                                {"n_verified", r.n_verified},
                                {"n_discarded", r.n_discarded},
                                {"xi", r.xi},
                                {"eps_ver", r.eps_ver},
                                {"e_mu", r.e_mu},
                                {"leak_bits", r.leak_bits},
                                {"verified_bits", r.verified_bits}};

    const auto& est = b.estimation;
    jb["estimation"] =
        json{{"q_hat", class_triple(est.bounds.q_hat[0], est.bounds.q_hat[1], est.bounds.q_hat[2])},
             {"q_u", class_triple(est.bounds.q_u[0], est.bounds.q_u[1], est.bounds.q_u[2])},
             {"q_l", class_triple(est.bounds.q_l[0], est.bounds.q_l[1], est.bounds.q_l[2])},
             {"y0_l", est.bounds.y0_l},
             {"q1_l", est.bounds.q1_l},
             {"m1_l", est.counts.m1_l},
             {"m0bar_l", est.counts.m0bar_l},
             {"e1_u", est.e1_u}};
    jb["epsilon"] = json{{"eps_decoy", b.epsilon.eps_decoy},
                         {"eps_ver", b.epsilon.eps_ver},
                         {"eps_pa", b.epsilon.eps_pa},
                         {"eps_total", b.epsilon.eps_total},
                         {"eps_r", b.epsilon.eps_r}};
    jb["l_sec"] = b.l_sec;
    jb["secret_bits"] = b.secret_bits;
    return jb;
}

std::string bits_to_hex(const bitvec& v) {
    static const char* digits = "0123456789abcdef";
    std::string out;
    out.reserve(((v.size() + 7) / 8) * 2);
    for (size_t byte = 0; byte * 8 < v.size(); ++byte) {
        unsigned b = 0;
        for (unsigned k = 0; k < 8 && byte * 8 + k < v.size(); ++k)
            b |= unsigned(v.get(byte * 8 + k)) << k;
        out.push_back(digits[b >> 4]);
        out.push_back(digits[b & 15]);
    }
    return out;
}

json attack_metrics_to_json(const attacks::attack_metrics& m) {
    json out;
    out["eve_bit_agreement"] = m.eve_bit_agreement;
    out["induced_qber"] = m.induced_qber;
    out["detection_rate_ratio"] = m.detection_rate_ratio;
    out["dark_rate_under_attack"] = m.dark_rate_under_attack;
    out["total_gates"] = m.total_gates;
    out["accepted_clicks"] = m.accepted_clicks;
    out["sifted_clicks"] = m.sifted_clicks;
    out["exploit_clicks"] = m.exploit_clicks;
    out["eve_pulses"] = m.eve_pulses;
    out["detection_per_eve_pulse"] = m.detection_per_eve_pulse;
    return out;
}

json series_entry(const char* x_label, const char* y_label, json points) {
    return json{{"x_label", x_label}, {"y_label", y_label}, {"points", std::move(points)}};
}

// Feed one session log through the block accumulator and report on every
// completed block; fills the outcome tallies and the per-block key material.
json run_postproc(const scenario_config& cfg, const linksim::session_log& log,
                  run_outcome& out) {
    postproc::source_intensities src{cfg.source.mu, cfg.source.nu1, cfg.source.nu2};
    postproc::block_accumulator acc(src, cfg.protocol);
    std::vector<postproc::block_report> blocks = acc.feed(log);
    json jblocks = json::array();
    int64_t total_secret = 0;
    uint32_t aborted = 0;
    for (const auto& b : blocks) {
        jblocks.push_back(block_to_json(b));
        if (b.aborted) {
            ++aborted;
        } else {
            total_secret += b.secret_bits;
            out.key_hex.push_back(bits_to_hex(b.secret_key));
        }
    }
    json jp;
    jp["mode"] = cfg.protocol.mode == postproc::reconcile_mode::ldpc ? "ldpc" : "oracle";
    jp["n_subblocks"] = cfg.protocol.n_subblocks;
    jp["block_bits"] = uint64_t(cfg.protocol.n_subblocks) * 27200;
    jp["blocks"] = jblocks;
    jp["n_blocks"] = blocks.size();
    jp["n_aborted"] = aborted;
    jp["pending_bits"] = acc.pending_bits();
    jp["secret_bits_total"] = total_secret;
    out.postproc_ran = true;
    out.n_blocks = static_cast<uint32_t>(blocks.size());
    out.n_aborted = aborted;
    return jp;
}

} // namespace

// ---------------------------------------------------------------- run_scenario

run_outcome run_scenario(const scenario_config& cfg) {
    run_outcome out;
    json report;
    report["schema"] = report_schema;
    report["tool_version"] = tool_version;
    report["scenario"] = cfg.echo;
    // Hash of the scenario document in canonical (sorted-key, compact) form;
    // reports from the same inputs carry the same hash.
    report["config_hash"] = hex64(fnv1a64(cfg.echo.dump()));
    json series = json::object();

    linksim::session_log log;
    bool have_log = false;

    for (stage_kind stage : cfg.stages) {
        switch (stage) {
        case stage_kind::budget: {
            lossbudget::leakage_result res = lossbudget::evaluate_injection(cfg.cat, cfg.budget);
            json jb;
            jb["catalog"] = cfg.cat.name;
            jb["path"] = cfg.budget_path_name;
            jb["round_trip"] = cfg.budget.path.double_pass_reflection;
            jb["wavelength_nm"] = cfg.budget.wavelength_nm;
            jb["w_in_w"] = cfg.budget.w_in_w;
            jb["f_p_hz"] = cfg.budget.f_p_hz;
            jb["total_loss_db"] = res.total_loss_db;
            jb["delivered_power_w"] = res.delivered_power_w;
            jb["mean_photons_in"] = res.mean_photons_in;
            jb["mean_photons_out"] = res.mean_photons_out;
            report["budget"] = jb;
            break;
        }
        case stage_kind::simulate: {
            linksim::session_options opt;
            opt.four_state_bob = cfg.simulation.four_state_bob;
            opt.n_trains = cfg.simulation.n_trains;
            opt.seed = cfg.seed;
            opt.n_threads = cfg.simulation.n_threads;
            log = linksim::run_session(cfg.source, cfg.channel, cfg.detector0, cfg.detector1, opt);
            if (cfg.simulation.hardware_deadtime)
                log = linksim::apply_hardware_deadtime(log, cfg.detector0, cfg.detector1, cfg.seed);
            if (cfg.simulation.software_filter_gates > 0)
                log = linksim::software_deadtime_filter(log, cfg.simulation.software_filter_gates);
            have_log = true;
            json js = summarize_log(log);
            js["hardware_deadtime"] = cfg.simulation.hardware_deadtime;
            js["software_filter_gates"] = cfg.simulation.software_filter_gates;
            report["simulation"] = js;
            break;
        }
        case stage_kind::attack: {
            attacks::attack_config acfg = cfg.attack;
            if (cfg.attack_resend_compensating &&
                acfg.kind == attacks::attack_kind::faked_state)
                acfg.resend_probability = attacks::compensating_resend_probability(
                    cfg.source, cfg.channel, cfg.detector0, cfg.detector1, acfg);
            linksim::session_options opt;
            opt.four_state_bob = cfg.simulation.four_state_bob;
            opt.n_trains = cfg.simulation.n_trains;
            opt.seed = cfg.seed;
            opt.n_threads = cfg.simulation.n_threads;
            attacks::attack_result res = attacks::run_attack(cfg.source, cfg.channel,
                                                             cfg.detector0, cfg.detector1, acfg,
                                                             opt);
            attacks::attack_metrics metrics = res.metrics;
            if (cfg.simulation.software_filter_gates > 0) {
                log = linksim::software_deadtime_filter(res.log,
                                                        cfg.simulation.software_filter_gates);
                metrics = attacks::remeasure(res, log);
            } else {
                log = std::move(res.log);
            }
            have_log = true;
            json ja = attack_metrics_to_json(metrics);
            ja["kind"] = attacks::attack_kind_name(acfg.kind);
            ja["resend_probability_resolved"] = acfg.resend_probability;
            ja["software_filter_gates"] = cfg.simulation.software_filter_gates;
            ja["log"] = summarize_log(log);
            report["attack"] = ja;
            break;
        }
        case stage_kind::postproc: {
            report["postproc"] = run_postproc(cfg, log, out);
            break;
        }
        case stage_kind::keyrate_sweep: {
            postproc::analytic_keyrate_config ac;
            ac.src = {cfg.source.mu, cfg.source.nu1, cfg.source.nu2};
            ac.p_mu = cfg.source.p_mu;
            ac.p_nu1 = cfg.source.p_nu1;
            ac.p_nu2 = cfg.source.p_nu2;
            ac.detector_efficiency = cfg.detector0.efficiency;
            ac.dark_prob = cfg.detector0.dark_prob;
            ac.misalignment = cfg.channel.misalignment;
            ac.n_pulses = cfg.keyrate.n_pulses;
            ac.protocol = cfg.protocol;

            const keyrate_sweep_config& k = cfg.keyrate;
            size_t n = size_t(std::floor((k.loss_to_db - k.loss_from_db) / k.loss_step_db)) + 1;
            std::vector<postproc::analytic_keyrate_result> results(n);
            std::vector<double> losses(n);
            parallel_points(n, cfg.simulation.n_threads, cfg.seed,
                            [&](size_t i, uint64_t /*point_seed: analytic, unused*/) {
                                losses[i] = k.loss_from_db + double(i) * k.loss_step_db;
                                results[i] = postproc::analytic_keyrate(ac, losses[i]);
                            });
            // The published series stops where the protocol stops: points
            // after the first abort are not emitted.
            json points = json::array();
            json abort_loss(nullptr);
            for (size_t i = 0; i < n; ++i) {
                if (results[i].aborted) {
                    abort_loss = losses[i];
                    break;
                }
                points.push_back(json::array({losses[i], results[i].secret_bits}));
            }
            series["secret_bits_vs_loss_db"] =
                series_entry("loss_db", "secret_bits", std::move(points));
            json jk;
            jk["loss_from_db"] = k.loss_from_db;
            jk["loss_to_db"] = k.loss_to_db;
            jk["loss_step_db"] = k.loss_step_db;
            jk["n_pulses"] = k.n_pulses;
            jk["n_points"] = n;
            jk["abort_loss_db"] = abort_loss;
            report["keyrate_sweep"] = jk;
            break;
        }
        case stage_kind::blinding_sweep: {
            const blinding_sweep_config& b = cfg.blinding;
            size_t n = b.energy_points;
            double step = (b.energy_to_j - b.energy_from_j) / double(n - 1);
            std::vector<double> prob(n);
            parallel_points(n, cfg.simulation.n_threads, cfg.seed,
                            [&](size_t i, uint64_t /*point_seed: closed form, unused*/) {
                                double e = b.energy_from_j + double(i) * step;
                                prob[i] = linksim::detect_bright(e, cfg.attack.blinding_power_w,
                                                                 cfg.detector0);
                            });
            json points = json::array();
            for (size_t i = 0; i < n; ++i)
                points.push_back(json::array({b.energy_from_j + double(i) * step, prob[i]}));
            series["click_probability_vs_trigger_energy_j"] =
                series_entry("trigger_energy_j", "click_probability", std::move(points));
            json jb;
            jb["energy_from_j"] = b.energy_from_j;
            jb["energy_to_j"] = b.energy_to_j;
            jb["energy_points"] = b.energy_points;
            jb["cw_power_w"] = cfg.attack.blinding_power_w;
            report["blinding_sweep"] = jb;
            break;
        }
        }
    }

    report["series"] = series;
    out.report = std::move(report);

    if (!cfg.output.report.empty())
        write_text_creating_dirs(anchored(cfg.base_dir, cfg.output.report),
                                 dump_report(out.report));
    if (!cfg.output.session_csv.empty() && have_log) {
        fs::path p = anchored(cfg.base_dir, cfg.output.session_csv);
        if (p.has_parent_path()) fs::create_directories(p.parent_path());
        linksim::save_session_csv(log, p.string());
    }
    if (!cfg.output.session_binary.empty() && have_log) {
        fs::path p = anchored(cfg.base_dir, cfg.output.session_binary);
        if (p.has_parent_path()) fs::create_directories(p.parent_path());
        linksim::save_session_binary(log, p.string());
    }
    if (!cfg.output.secret_key_hex.empty() && out.postproc_ran) {
        std::string text;
        for (const auto& line : out.key_hex) {
            text += line;
            text += '\n';
        }
        write_text_creating_dirs(anchored(cfg.base_dir, cfg.output.secret_key_hex), text);
    }
    return out;
}

run_outcome run_scenario_file(const std::string& path) {
    return run_scenario(load_scenario_file(path));
}

run_outcome postprocess_log_file(const scenario_config& cfg, const std::string& log_path) {
    linksim::session_log log = linksim::load_session(log_path);
    run_outcome out;
    json report;
    report["schema"] = report_schema;
    report["tool_version"] = tool_version;
    report["scenario"] = cfg.echo;
    report["config_hash"] = hex64(fnv1a64(cfg.echo.dump()));
    report["session"] = summarize_log(log);
    report["postproc"] = run_postproc(cfg, log, out);
    report["series"] = json::object();
    out.report = std::move(report);
    return out;
}

std::string dump_report(const json& report) { return report.dump(2) + "\n"; }

// -------------------------------------------------------------------- series

std::string series_to_text(const json& report, const std::string& metric) {
    const json* series = report.is_object() ? find(report, "series") : nullptr;
    const json* entry = series && series->is_object() ? find(*series, metric.c_str()) : nullptr;
    if (!entry) fail(errc::unknown_metric, "report has no series named '" + metric + "'");

    std::ostringstream out;
    out << "# " << series_schema << " " << metric << "\n";
    out << "# " << (*entry)["x_label"].get<std::string>() << " "
        << (*entry)["y_label"].get<std::string>() << "\n";
    for (const json& p : (*entry)["points"]) out << p[0].dump() << " " << p[1].dump() << "\n";
    return out.str();
}

void emit_series(const json& report, const std::string& metric, const std::string& out_path) {
    write_text_creating_dirs(fs::path(out_path), series_to_text(report, metric));
}

std::vector<std::string> list_series(const json& report) {
    std::vector<std::string> names;
    const json* series = report.is_object() ? find(report, "series") : nullptr;
    if (series && series->is_object())
        for (auto it = series->begin(); it != series->end(); ++it) names.push_back(it.key());
    std::sort(names.begin(), names.end());
    return names;
}

} // namespace qkd::scenario
