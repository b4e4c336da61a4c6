#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "lossbudget/lossbudget.hpp"

using namespace qkd;
using namespace qkd::lossbudget;

namespace {

const optical_path& find_path(const std::vector<optical_path>& paths, const std::string& name) {
    for (const auto& p : paths)
        if (p.name == name) return p;
    FAIL("no path named ", name);
    static optical_path dummy;
    return dummy;
}

} // namespace

TEST_CASE("db conversion round trip") {
    CHECK(db_to_linear(0.0) == doctest::Approx(1.0));
    CHECK(db_to_linear(10.0) == doctest::Approx(0.1));
    CHECK(db_to_linear(3.0) == doctest::Approx(0.501187233627272));
    CHECK(linear_to_db(db_to_linear(17.35)) == doctest::Approx(17.35));
}

TEST_CASE("photons per pulse from energy quantum") {
    // Independent arithmetic: (W/f_p) * lambda / (h*c), with h*c = 1.99e-25 J*m.
    double expect = (1.0 / 1e9) * (1550e-9 / 1.99e-25);
    CHECK(photons_per_pulse(1.0, 1e9, 1550.0) == doctest::Approx(expect).epsilon(1e-12));
    CHECK(photons_per_pulse(1.0, 1e9, 1550.0) == doctest::Approx(7.788944723618091e9));
    CHECK_THROWS_AS(photons_per_pulse(1.0, 0.0, 1550.0), error);
    CHECK_THROWS_AS(photons_per_pulse(-1.0, 1e9, 1550.0), error);
}

TEST_CASE("interpolation between table points is linear in dB") {
    component_spec c{"filter", {{1500.0, 10.0}, {1600.0, 30.0}}, {{1500.0, 10.0}, {1600.0, 30.0}}};
    CHECK(component_loss_db(c, direction::forward, 1500.0) == doctest::Approx(10.0));
    CHECK(component_loss_db(c, direction::forward, 1600.0) == doctest::Approx(30.0));
    CHECK(component_loss_db(c, direction::forward, 1550.0) == doctest::Approx(20.0));
    CHECK(component_loss_db(c, direction::forward, 1525.0) == doctest::Approx(15.0));
}

TEST_CASE("query outside the table span raises missing_spectral_data") {
    component_spec c{"filter", {{1500.0, 10.0}, {1600.0, 30.0}}, {{1500.0, 10.0}}};
    CHECK_THROWS_AS(component_loss_db(c, direction::forward, 1499.9), error);
    try {
        component_loss_db(c, direction::forward, 1700.0);
        FAIL("expected error");
    } catch (const error& e) {
        CHECK(e.code() == errc::missing_spectral_data);
    }
    // Reverse table is a single point: only that exact wavelength works.
    CHECK(component_loss_db(c, direction::reverse, 1500.0) == doctest::Approx(10.0));
    CHECK_THROWS_AS(component_loss_db(c, direction::reverse, 1501.0), error);
}

TEST_CASE("catalog validation rejects bad tables") {
    catalog cat;
    cat.name = "bad";
    cat.components["a"] = component_spec{"a", {{1550.0, -1.0}}, {{1550.0, 1.0}}};
    CHECK_THROWS_AS(validate_catalog(cat), error);
    cat.components["a"] = component_spec{"a", {{300.0, 1.0}}, {{1550.0, 1.0}}};
    CHECK_THROWS_AS(validate_catalog(cat), error); // outside 350-2400 nm window
    cat.components["a"] = component_spec{"a", {{1600.0, 1.0}, {1500.0, 2.0}}, {{1550.0, 1.0}}};
    CHECK_THROWS_AS(validate_catalog(cat), error); // unsorted
    cat.components["a"] = component_spec{"a", {}, {{1550.0, 1.0}}};
    CHECK_THROWS_AS(validate_catalog(cat), error); // empty
    cat.components["a"] = component_spec{"a", {{1550.0, 1.0}}, {{1550.0, 1.0}}};
    CHECK_NOTHROW(validate_catalog(cat));
}

TEST_CASE("path validation enforces double-pass geometry and passes domain") {
    optical_path p;
    p.name = "p";
    p.legs = {{"im", direction::reverse, 2}};
    CHECK_THROWS_AS(validate_path(p), error); // passes=2 without reflection geometry
    p.double_pass_reflection = true;
    CHECK_NOTHROW(validate_path(p));
    p.legs = {{"im", direction::reverse, 3}};
    CHECK_THROWS_AS(validate_path(p), error);
    p.legs = {{"im", direction::reverse, 1}};
    p.connector_loss_db = -0.1;
    CHECK_THROWS_AS(validate_path(p), error);
}

TEST_CASE("connector loss is opt-in and additive") {
    catalog cat = builtin_catalog("reference_1548");
    optical_path p;
    p.name = "one_im";
    p.legs = {{"im", direction::forward, 1}};
    CHECK(path_loss(cat, p, 1548.51) == doctest::Approx(2.7));
    p.connector_loss_db = 0.25;
    p.n_connectors = 4;
    CHECK(path_loss(cat, p, 1548.51) == doctest::Approx(3.7));
}

TEST_CASE("reference catalog: round-trip probe loss and photon numbers") {
    catalog cat = builtin_catalog("reference_1548");
    auto paths = standard_injection_paths();
    const auto& trojan = find_path(paths, "trojan_roundtrip");

    double loss = path_loss(cat, trojan, 1548.51);
    // 2*(2.7+2.5+20+1+0.5+20+1) + 28 + 48 + 0.35 + 0.4
    CHECK(loss == doctest::Approx(172.15).epsilon(1e-12));

    injection_scenario scn;
    scn.path = trojan;
    auto r = trojan_leakage(cat, scn);
    CHECK(r.total_loss_db == doctest::Approx(172.15));
    // 100 W at 312.5 MHz and 1548.51 nm
    CHECK(r.mean_photons_in == doctest::Approx(2.4900663316582914e12).epsilon(1e-12));
    CHECK(r.mean_photons_out ==
          doctest::Approx(2.4900663316582914e12 * std::pow(10.0, -17.215)).epsilon(1e-12));
    CHECK(r.mean_photons_out == doctest::Approx(1.5177e-5).epsilon(1e-3));
}

TEST_CASE("reference catalog: one-way injection depths") {
    catalog cat = builtin_catalog("reference_1548");
    auto paths = standard_injection_paths();

    struct row {
        const char* name;
        double loss_db;
        double power_w; // at 100 W input
    };
    // Independent oracle: hand-summed chains and 100*10^(-dB/10).
    const row rows[] = {
        {"seed_laser", 123.7, 100.0 * std::pow(10.0, -12.37)},
        {"power_meter", 98.5, 100.0 * std::pow(10.0, -9.85)},
        {"phase_modulator", 118.5, 100.0 * std::pow(10.0, -11.85)},
        {"intensity_modulator", 121.0, 100.0 * std::pow(10.0, -12.1)},
    };
    for (const auto& row : rows) {
        const auto& p = find_path(paths, row.name);
        CHECK(path_loss(cat, p, 1548.51) == doctest::Approx(row.loss_db).epsilon(1e-12));
        injection_scenario scn;
        scn.path = p;
        CHECK(delivered_power(cat, scn) == doctest::Approx(row.power_w).epsilon(1e-12));
    }
    // Spot values in familiar units.
    injection_scenario seed;
    seed.path = find_path(paths, "seed_laser");
    CHECK(delivered_power(cat, seed) == doctest::Approx(42.66e-12).epsilon(2e-3));
    injection_scenario meter;
    meter.path = find_path(paths, "power_meter");
    CHECK(delivered_power(cat, meter) == doctest::Approx(14.13e-9).epsilon(2e-3));
}

TEST_CASE("out-of-band catalog: degraded rejection raises leakage") {
    catalog cat = builtin_catalog("out_of_band");
    auto paths = standard_injection_paths();
    const double nm = 1580.0;

    const auto& trojan = find_path(paths, "trojan_roundtrip");
    // 2*(2.7+2.5+20+35+0.5+4+35) + 17 + 26 + 0.35 + 0.4
    CHECK(path_loss(cat, trojan, nm) == doctest::Approx(243.15).epsilon(1e-12));

    injection_scenario scn;
    scn.wavelength_nm = nm;
    scn.path = trojan;
    auto r = trojan_leakage(cat, scn);
    CHECK(r.mean_photons_in == doctest::Approx(2.5407035175879395e12).epsilon(1e-12));
    CHECK(r.mean_photons_out ==
          doctest::Approx(2.5407035175879395e12 * std::pow(10.0, -24.315)).epsilon(1e-12));

    CHECK(path_loss(cat, find_path(paths, "seed_laser"), nm) == doctest::Approx(142.7));
    CHECK(path_loss(cat, find_path(paths, "power_meter"), nm) == doctest::Approx(117.5));
    CHECK(path_loss(cat, find_path(paths, "phase_modulator"), nm) == doctest::Approx(137.5));
    CHECK(path_loss(cat, find_path(paths, "intensity_modulator"), nm) == doctest::Approx(140.0));

    injection_scenario im;
    im.wavelength_nm = nm;
    im.path = find_path(paths, "intensity_modulator");
    CHECK(delivered_power(cat, im) == doctest::Approx(1e-12).epsilon(1e-12)); // exactly 1 pW
}

TEST_CASE("geometry guards on the two evaluation entry points") {
    catalog cat = builtin_catalog("reference_1548");
    auto paths = standard_injection_paths();

    injection_scenario one_way;
    one_way.path = find_path(paths, "seed_laser");
    CHECK_THROWS_AS(trojan_leakage(cat, one_way), error); // needs round trip

    injection_scenario round_trip;
    round_trip.path = find_path(paths, "trojan_roundtrip");
    CHECK_THROWS_AS(delivered_power(cat, round_trip), error); // needs single pass
}

TEST_CASE("unknown component and unknown catalog are config errors") {
    catalog cat = builtin_catalog("reference_1548");
    optical_path p;
    p.name = "p";
    p.legs = {{"no_such_part", direction::forward, 1}};
    try {
        path_loss(cat, p, 1548.51);
        FAIL("expected error");
    } catch (const error& e) {
        CHECK(e.code() == errc::config_invalid);
    }
    CHECK_THROWS_AS(builtin_catalog("nope"), error);
}

TEST_CASE("evaluate_injection composes loss, power and photon number consistently") {
    catalog cat = builtin_catalog("reference_1548");
    injection_scenario scn;
    scn.w_in_w = 0.25;
    scn.path.name = "short";
    scn.path.legs = {{"dwdm1", direction::reverse, 1}, {"voa", direction::reverse, 1}};
    auto r = evaluate_injection(cat, scn);
    CHECK(r.total_loss_db == doctest::Approx(1.5));
    CHECK(r.delivered_power_w == doctest::Approx(0.25 * db_to_linear(1.5)).epsilon(1e-12));
    double t = r.delivered_power_w / scn.w_in_w;
    CHECK(r.mean_photons_out == doctest::Approx(r.mean_photons_in * t).epsilon(1e-9));
}
