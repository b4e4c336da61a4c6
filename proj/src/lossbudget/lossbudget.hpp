#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "support/util.hpp"

namespace qkd::lossbudget {

// Energy of one photon at wavelength lambda is hc/lambda.  We keep hc at the
// two-digit engineering value used when the reference budgets were drawn up,
// so that recomputed photon numbers land on the published figures.
inline constexpr double hc_joule_meter = 1.99e-25;

// Quartz fiber transparency window; spectral tables outside it are rejected.
inline constexpr double min_wavelength_nm = 350.0;
inline constexpr double max_wavelength_nm = 2400.0;

struct component_spec {
    std::string name;
    // (wavelength_nm, loss_db) points, sorted by wavelength.  Most components
    // are direction-symmetric; isolators carry distinct reverse tables.
    std::vector<std::pair<double, double>> loss_forward;
    std::vector<std::pair<double, double>> loss_reverse;
};

struct catalog {
    std::string name;
    std::string description;
    std::map<std::string, component_spec> components;

    const component_spec& component(const std::string& id) const;
};

enum class direction { forward, reverse };

struct path_leg {
    std::string component;
    direction dir = direction::forward;
    int passes = 1; // 2 = light traverses the component twice (round trip)
};

struct optical_path {
    std::string name;
    std::vector<path_leg> legs;
    // Round-trip geometry: a total reflection is assumed behind the last
    // double-passed element, so passes=2 legs are only legal when this is set.
    bool double_pass_reflection = false;
    // Connector loss is zero by default; opt-in as a per-connection constant.
    double connector_loss_db = 0.0;
    int n_connectors = 0;
};

struct injection_scenario {
    double w_in_w = 100.0;      // attacker-side power entering the path
    double f_p_hz = 312.5e6;    // pulse repetition rate
    double wavelength_nm = 1548.51;
    optical_path path;
};

struct leakage_result {
    double total_loss_db = 0.0;
    double delivered_power_w = 0.0;
    double mean_photons_in = 0.0;  // photons per pulse entering the path
    double mean_photons_out = 0.0; // photons per pulse delivered
};

double db_to_linear(double loss_db);
double linear_to_db(double transmittance);

// Directional loss of one component at the given wavelength, interpolated
// linearly in dB between bracketing table points.  Throws
// missing_spectral_data when the wavelength falls outside the table span.
double component_loss_db(const component_spec& c, direction dir, double wavelength_nm);

void validate_catalog(const catalog& cat);
void validate_path(const optical_path& path);

// Sum over legs of passes x directional loss, plus any opted-in connector
// loss.  Empty path -> 0 dB.
double path_loss(const catalog& cat, const optical_path& path, double wavelength_nm);

// (W_in / f_p) * (lambda / hc): mean photons per pulse for cw power chopped
// at the pulse rate.
double photons_per_pulse(double w_in_w, double f_p_hz, double wavelength_nm);

// Core evaluation shared by the two geometry-specific entry points.
leakage_result evaluate_injection(const catalog& cat, const injection_scenario& scn);

// Round-trip probe analysis: requires double-pass geometry.
leakage_result trojan_leakage(const catalog& cat, const injection_scenario& scn);

// One-way injected power analysis: requires single-pass geometry.
double delivered_power(const catalog& cat, const injection_scenario& scn);

// Bundled single-wavelength catalogs.  "reference_1548" holds the data-sheet
// losses at the 1548.51 nm operating wavelength; "out_of_band" holds the
// conservative substitute losses for an attacker probing at a wavelength
// where isolators and the fixed attenuator are partially transparent.
catalog builtin_catalog(const std::string& name);

// The five canonical injection paths through the transmitter: round-trip
// modulator-readout probe, injection towards the source laser, towards the
// monitoring power meter, and towards the two modulators.
std::vector<optical_path> standard_injection_paths();

} // namespace qkd::lossbudget
