#include "lossbudget/lossbudget.hpp"

#include <algorithm>
#include <cmath>

namespace qkd::lossbudget {

const component_spec& catalog::component(const std::string& id) const {
    auto it = components.find(id);
    if (it == components.end())
        fail(errc::config_invalid, "catalog '" + name + "' has no component '" + id + "'");
    return it->second;
}

double db_to_linear(double loss_db) { return std::pow(10.0, -loss_db / 10.0); }

double linear_to_db(double transmittance) { return -10.0 * std::log10(transmittance); }

static void validate_table(const std::string& comp, const std::vector<std::pair<double, double>>& table) {
    if (table.empty())
        fail(errc::config_invalid, "component '" + comp + "' has an empty loss table");
    double prev = 0.0;
    bool first = true;
    for (const auto& [nm, db] : table) {
        if (nm < min_wavelength_nm || nm > max_wavelength_nm)
            fail(errc::config_invalid, "component '" + comp + "' has a table point at " +
                                           std::to_string(nm) + " nm, outside the fiber window");
        if (db < 0.0)
            fail(errc::config_invalid, "component '" + comp + "' has a negative loss entry");
        if (!first && nm <= prev)
            fail(errc::config_invalid, "component '" + comp + "' table is not sorted by wavelength");
        prev = nm;
        first = false;
    }
}

void validate_catalog(const catalog& cat) {
    for (const auto& [id, comp] : cat.components) {
        validate_table(id, comp.loss_forward);
        validate_table(id, comp.loss_reverse);
    }
}

void validate_path(const optical_path& path) {
    for (const auto& leg : path.legs) {
        if (leg.passes != 1 && leg.passes != 2)
            fail(errc::config_invalid, "path '" + path.name + "': passes must be 1 or 2");
        if (leg.passes == 2 && !path.double_pass_reflection)
            fail(errc::config_invalid, "path '" + path.name +
                                           "': a passes=2 leg requires double_pass_reflection geometry");
    }
    if (path.connector_loss_db < 0.0 || path.n_connectors < 0)
        fail(errc::config_invalid, "path '" + path.name + "': connector loss must be non-negative");
}

double component_loss_db(const component_spec& c, direction dir, double wavelength_nm) {
    const auto& table = dir == direction::forward ? c.loss_forward : c.loss_reverse;
    if (table.empty())
        fail(errc::config_invalid, "component '" + c.name + "' has an empty loss table");
    if (wavelength_nm < table.front().first || wavelength_nm > table.back().first)
        fail(errc::missing_spectral_data,
             "component '" + c.name + "' has no loss data at " + std::to_string(wavelength_nm) +
                 " nm (table spans " + std::to_string(table.front().first) + "-" +
                 std::to_string(table.back().first) + " nm)");
    auto hi = std::lower_bound(table.begin(), table.end(), wavelength_nm,
                               [](const auto& p, double nm) { return p.first < nm; });
    if (hi->first == wavelength_nm) return hi->second;
    auto lo = hi - 1;
    // Linear in dB between bracketing points.
    double f = (wavelength_nm - lo->first) / (hi->first - lo->first);
    return lo->second + f * (hi->second - lo->second);
}

double path_loss(const catalog& cat, const optical_path& path, double wavelength_nm) {
    validate_path(path);
    double total = 0.0;
    for (const auto& leg : path.legs) {
        const component_spec& comp = cat.component(leg.component);
        total += leg.passes * component_loss_db(comp, leg.dir, wavelength_nm);
    }
    total += path.connector_loss_db * path.n_connectors;
    return total;
}

double photons_per_pulse(double w_in_w, double f_p_hz, double wavelength_nm) {
    if (f_p_hz <= 0.0) fail(errc::config_invalid, "pulse rate must be positive");
    if (w_in_w < 0.0) fail(errc::config_invalid, "input power must be non-negative");
    return (w_in_w / f_p_hz) * (wavelength_nm * 1e-9 / hc_joule_meter);
}

leakage_result evaluate_injection(const catalog& cat, const injection_scenario& scn) {
    leakage_result r;
    r.total_loss_db = path_loss(cat, scn.path, scn.wavelength_nm);
    double t = db_to_linear(r.total_loss_db);
    r.delivered_power_w = scn.w_in_w * t;
    r.mean_photons_in = photons_per_pulse(scn.w_in_w, scn.f_p_hz, scn.wavelength_nm);
    r.mean_photons_out = r.mean_photons_in * t;
    return r;
}

leakage_result trojan_leakage(const catalog& cat, const injection_scenario& scn) {
    if (!scn.path.double_pass_reflection)
        fail(errc::config_invalid,
             "trojan_leakage requires a round-trip path (double_pass_reflection)");
    return evaluate_injection(cat, scn);
}

double delivered_power(const catalog& cat, const injection_scenario& scn) {
    for (const auto& leg : scn.path.legs)
        if (leg.passes != 1)
            fail(errc::config_invalid, "delivered_power requires a single-pass path");
    return evaluate_injection(cat, scn).delivered_power_w;
}

namespace {

component_spec symmetric(const std::string& name, double nm, double db) {
    return component_spec{name, {{nm, db}}, {{nm, db}}};
}

component_spec asymmetric(const std::string& name, double nm, double fwd_db, double rev_db) {
    return component_spec{name, {{nm, fwd_db}}, {{nm, rev_db}}};
}

catalog make_reference_1548() {
    catalog cat;
    cat.name = "reference_1548";
    cat.description =
        "Data-sheet insertion losses of the transmitter and receiver chain at the "
        "1548.51 nm operating wavelength. The variable attenuator is at its "
        "low-attenuation worst case; connector loss is neglected.";
    const double nm = 1548.51;
    cat.components["im"] = symmetric("im", nm, 2.7);
    cat.components["pm1"] = symmetric("pm1", nm, 2.5);
    cat.components["bs"] = symmetric("bs", nm, 20.0);
    cat.components["dwdm1"] = symmetric("dwdm1", nm, 1.0);
    cat.components["voa"] = symmetric("voa", nm, 0.5);
    cat.components["att"] = symmetric("att", nm, 20.0);
    cat.components["dwdm2"] = symmetric("dwdm2", nm, 1.0);
    cat.components["iso1"] = asymmetric("iso1", nm, 0.35, 28.0);
    cat.components["iso2"] = asymmetric("iso2", nm, 0.4, 48.0);
    cat.components["dwdm3"] = symmetric("dwdm3", nm, 1.0);
    cat.components["pc"] = symmetric("pc", nm, 0.05);
    cat.components["pm2"] = symmetric("pm2", nm, 2.5);
    cat.components["pbs"] = symmetric("pbs", nm, 0.5);
    return cat;
}

catalog make_out_of_band() {
    catalog cat;
    cat.name = "out_of_band";
    cat.description =
        "Conservative substitute losses for a probe wavelength outside the DWDM "
        "channel, where isolator and fixed-attenuator rejection is partially lost. "
        "The DWDM non-adjacent-channel isolation of 35 dB is a data-sheet floor "
        "that still needs experimental verification.";
    const double nm = 1580.0;
    cat.components["im"] = symmetric("im", nm, 2.7);
    cat.components["pm1"] = symmetric("pm1", nm, 2.5);
    cat.components["bs"] = symmetric("bs", nm, 20.0);
    cat.components["dwdm1"] = symmetric("dwdm1", nm, 35.0);
    cat.components["voa"] = symmetric("voa", nm, 0.5);
    cat.components["att"] = symmetric("att", nm, 4.0);
    cat.components["dwdm2"] = symmetric("dwdm2", nm, 35.0);
    cat.components["iso1"] = asymmetric("iso1", nm, 0.35, 17.0);
    cat.components["iso2"] = asymmetric("iso2", nm, 0.4, 26.0);
    cat.components["dwdm3"] = symmetric("dwdm3", nm, 35.0);
    cat.components["pc"] = symmetric("pc", nm, 0.05);
    cat.components["pm2"] = symmetric("pm2", nm, 2.5);
    cat.components["pbs"] = symmetric("pbs", nm, 0.5);
    return cat;
}

path_leg rev(const std::string& c, int passes = 1) { return {c, direction::reverse, passes}; }
path_leg fwd(const std::string& c, int passes = 1) { return {c, direction::forward, passes}; }

} // namespace

catalog builtin_catalog(const std::string& name) {
    if (name == "reference_1548") return make_reference_1548();
    if (name == "out_of_band") return make_out_of_band();
    fail(errc::config_invalid, "unknown builtin catalog '" + name + "'");
}

std::vector<optical_path> standard_injection_paths() {
    std::vector<optical_path> paths;

    // Probe light enters from the channel, reaches the intensity modulator,
    // totally reflects, and exits. Symmetric components are double-passed;
    // the isolators appear once per direction because their loss differs.
    optical_path trojan;
    trojan.name = "trojan_roundtrip";
    trojan.double_pass_reflection = true;
    trojan.legs = {rev("iso2"),     rev("iso1"),     rev("dwdm2", 2), rev("att", 2),
                   rev("voa", 2),   rev("dwdm1", 2), rev("bs", 2),    rev("pm1", 2),
                   rev("im", 2),    fwd("iso1"),     fwd("iso2")};
    paths.push_back(trojan);

    // One-way injection all the way to the source laser behind the IM.
    optical_path seed;
    seed.name = "seed_laser";
    seed.legs = {rev("iso2"), rev("iso1"), rev("dwdm2"), rev("att"), rev("voa"),
                 rev("dwdm1"), rev("bs"),  rev("pm1"),   rev("im")};
    paths.push_back(seed);

    // One-way injection to the monitoring power meter; the injected light is
    // conservatively assumed to reflect totally at the tap splitter, so the
    // splitter loss itself is not counted.
    optical_path meter;
    meter.name = "power_meter";
    meter.legs = {rev("iso2"), rev("iso1"), rev("dwdm2"), rev("att"), rev("voa"), rev("dwdm1")};
    paths.push_back(meter);

    // One-way injection to the phase modulator.
    optical_path pm;
    pm.name = "phase_modulator";
    pm.legs = meter.legs;
    pm.legs.push_back(rev("bs"));
    paths.push_back(pm);

    // One-way injection to the intensity modulator (one more component deep).
    optical_path im;
    im.name = "intensity_modulator";
    im.legs = pm.legs;
    im.legs.push_back(rev("pm1"));
    paths.push_back(im);

    return paths;
}

} // namespace qkd::lossbudget
