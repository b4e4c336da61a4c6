#include "checks/golden_checks.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

#include "attacks/attacks.hpp"
#include "linksim/linksim.hpp"
#include "lossbudget/lossbudget.hpp"
#include "postproc/numerics.hpp"
#include "postproc/polyhash.hpp"
#include "postproc/postproc.hpp"
#include "postproc/toeplitz.hpp"
#include "risk/risk.hpp"
#include "support/bitvec.hpp"
#include "support/rng.hpp"
#include "support/util.hpp"

namespace qkd::checks {

namespace {

std::string num(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

// Accumulates the per-assertion lines of one check.
struct builder {
    check_result res;

    explicit builder(std::string name) {
        res.name = std::move(name);
        res.pass = true;
    }

    bool sub(bool ok, const std::string& line) {
        if (!ok) res.pass = false;
        res.detail += std::string("  ") + (ok ? "ok  " : "FAIL") + ' ' + line + '\n';
        return ok;
    }

    bool near_abs(double value, double target, double tol, const std::string& what) {
        bool ok = std::abs(value - target) <= tol;
        return sub(ok, what + " = " + num(value) + " (expect " + num(target) + " +- " +
                           num(tol) + ")");
    }

    bool near_rel(double value, double target, double rel, const std::string& what) {
        bool ok = std::abs(value - target) <= rel * std::abs(target);
        return sub(ok, what + " = " + num(value) + " (expect " + num(target) + " +- " +
                           num(rel * 100) + "%)");
    }

    check_result done() { return std::move(res); }
};

// Deterministic work splitter for the Monte-Carlo checks: fn(i) must derive
// all randomness from i, so the worker count never changes the outcome.
void parallel_for(std::size_t n, int n_threads, const std::function<void(std::size_t)>& fn) {
    unsigned workers = n_threads > 0 ? unsigned(n_threads) : std::thread::hardware_concurrency();
    if (workers == 0) workers = 1;
    workers = std::min<std::size_t>(workers, n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto body = [&] {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(body);
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

const lossbudget::optical_path& path_by_name(const std::vector<lossbudget::optical_path>& paths,
                                             const std::string& name) {
    for (const auto& p : paths)
        if (p.name == name) return p;
    fail(errc::config_invalid, "no standard path named '" + name + "'");
}

// ---------------------------------------------------------------------------
// Check 1: loss budget of the operating band

check_result check_budget_operating() {
    builder b("budget_operating_band");
    lossbudget::catalog cat = lossbudget::builtin_catalog("reference_1548");
    auto paths = lossbudget::standard_injection_paths();
    lossbudget::injection_scenario scn; // 100 W, 312.5 MHz, 1548.51 nm

    scn.path = path_by_name(paths, "trojan_roundtrip");
    lossbudget::leakage_result trojan = lossbudget::trojan_leakage(cat, scn);
    b.near_abs(trojan.total_loss_db, 172.15, 0.01, "trojan_roundtrip loss_db");
    b.near_rel(trojan.mean_photons_in, 2.5e12, 0.05, "trojan_roundtrip photons_in");
    b.near_rel(trojan.mean_photons_out, 1.5e-5, 0.10, "trojan_roundtrip photons_out");

    struct row {
        const char* path;
        double loss_db;
        double power_w;
    };
    // Chain totals and delivered powers for 100 W of injected cw light.
    const row rows[] = {
        {"seed_laser", 123.7, 40e-12},
        {"power_meter", 98.5, 14e-9},
        {"phase_modulator", 118.5, 141e-12},
        {"intensity_modulator", 121.0, 79e-12},
    };
    for (const row& r : rows) {
        scn.path = path_by_name(paths, r.path);
        double loss = lossbudget::path_loss(cat, scn.path, scn.wavelength_nm);
        double w = lossbudget::delivered_power(cat, scn);
        b.near_abs(loss, r.loss_db, 0.01, std::string(r.path) + " loss_db");
        b.near_rel(w, r.power_w, 0.10, std::string(r.path) + " delivered_w");
    }
    return b.done();
}

// ---------------------------------------------------------------------------
// Check 2: loss budget outside the operating band

check_result check_budget_out_of_band() {
    builder b("budget_out_of_band");
    lossbudget::catalog cat = lossbudget::builtin_catalog("out_of_band");
    auto paths = lossbudget::standard_injection_paths();
    lossbudget::injection_scenario scn;
    scn.wavelength_nm = 1580.0;

    scn.path = path_by_name(paths, "trojan_roundtrip");
    lossbudget::leakage_result trojan = lossbudget::trojan_leakage(cat, scn);
    bool trojan_loss_ok = b.near_abs(trojan.total_loss_db, 243.0, 0.5, "trojan_roundtrip loss_db");
    bool trojan_photons_ok =
        b.near_rel(trojan.mean_photons_out, 1.25e-12, 0.10, "trojan_roundtrip photons_out");

    // The catalog's own chains sum to 142.7 dB (seed laser) and 117.5 dB
    // (power meter); these pass as long as the catalog is intact.
    scn.path = path_by_name(paths, "seed_laser");
    double seed_loss = lossbudget::path_loss(cat, scn.path, scn.wavelength_nm);
    double seed_w = lossbudget::delivered_power(cat, scn);
    bool seed_chain_ok = b.near_abs(seed_loss, 142.7, 0.01, "seed_laser loss_db");

    scn.path = path_by_name(paths, "power_meter");
    double meter_loss = lossbudget::path_loss(cat, scn.path, scn.wavelength_nm);
    double meter_w = lossbudget::delivered_power(cat, scn);
    bool meter_chain_ok = b.near_abs(meter_loss, 117.5, 0.01, "power_meter loss_db");

    // The reference powers 0.63 pW and 0.2 nW imply chain totals of 142.0
    // and 117.0 dB, which no rounding of the catalog entries reproduces;
    // the two comparisons below fail by construction. They are kept at
    // face value and the failure is classified as the documented data
    // inconsistency when the chain totals above are intact.
    bool seed_power_ok = b.near_rel(seed_w, 0.63e-12, 0.10, "seed_laser delivered_w");
    bool meter_power_ok = b.near_rel(meter_w, 0.2e-9, 0.10, "power_meter delivered_w");

    scn.path = path_by_name(paths, "phase_modulator");
    bool pm_ok = b.near_rel(lossbudget::delivered_power(cat, scn), 1.8e-12, 0.10,
                            "phase_modulator delivered_w");
    scn.path = path_by_name(paths, "intensity_modulator");
    bool im_ok = b.near_rel(lossbudget::delivered_power(cat, scn), 1e-12, 0.10,
                            "intensity_modulator delivered_w");

    check_result res = b.done();
    bool others_ok = trojan_loss_ok && trojan_photons_ok && seed_chain_ok && meter_chain_ok &&
                     pm_ok && im_ok;
    if (!res.pass && others_ok && !seed_power_ok && !meter_power_ok) {
        res.expected_failure = true;
        res.detail += "  note the two failing powers are the documented inconsistency: "
                      "they imply 142.0 / 117.0 dB chains, the catalog sums to 142.7 / 117.5 dB\n";
    }
    return res;
}

// ---------------------------------------------------------------------------
// Check 3: risk grading of the stock issue list

check_result check_risk_grades() {
    builder b("risk_grades");
    struct golden {
        const char* id;
        int likelihood, technology, leakage;
        bool solved;
        const char* grade;
    };
    // Independent restatement of the fifteen stock gradings.
    const golden table[] = {
        {"protocol_choice", 0, 0, 0, true, "Solved"},
        {"superlinear_detector_control", 1, 1, 1, false, "H"},
        {"detector_efficiency_mismatch", 1, 1, 1, false, "H"},
        {"detector_deadtime", 1, 1, 1, false, "H"},
        {"trojan_horse", 0, 0, 0, false, "L"},
        {"laser_seeding", 0, 0, 0, true, "Solved"},
        {"power_meter_injection", 1, 0, 0, false, "L"},
        {"induced_photorefraction", 0, 1, 1, false, "M"},
        {"laser_damage", 1, 0, 1, false, "M"},
        {"apd_backflash", 1, 1, 0, false, "M"},
        {"intersymbol_interference", 1, 0, 0, false, "L"},
        {"imperfect_state_preparation", 1, 0, 0, false, "L"},
        {"calibration_via_channel", 1, 1, 1, false, "H"},
        {"qrng", 1, 0, 0, false, "L"},
        {"supply_chain", 0, 1, 1, false, "M"},
    };
    auto issues = risk::builtin_issues();
    b.sub(issues.size() == 15,
          "stock list holds " + std::to_string(issues.size()) + " issues (expect 15)");
    for (const golden& g : table) {
        const risk::issue_record* rec = nullptr;
        for (const auto& candidate : issues)
            if (candidate.id == g.id) rec = &candidate;
        if (!b.sub(rec != nullptr, std::string(g.id) + " present")) continue;
        bool factors_ok = rec->factors.loophole_likelihood == g.likelihood &&
                          rec->factors.current_technology == g.technology &&
                          rec->factors.key_leakage == g.leakage &&
                          rec->factors.solved == g.solved;
        risk::risk_factors f{g.likelihood, g.technology, g.leakage, g.solved};
        bool graded_ok = risk::grade_name(risk::grade(f)) == g.grade &&
                         rec->grade == risk::grade(rec->factors);
        bool valid = true;
        try {
            risk::validate_issue(*rec);
        } catch (const error&) {
            valid = false;
        }
        b.sub(factors_ok && graded_ok && valid,
              std::string(g.id) + " factors (" + std::to_string(g.likelihood) + "," +
                  std::to_string(g.technology) + "," + std::to_string(g.leakage) +
                  (g.solved ? ",solved" : "") + ") grade " + g.grade);
    }
    return b.done();
}

// ---------------------------------------------------------------------------
// Check 4: failure-budget accounting

check_result check_epsilon_accounting() {
    builder b("epsilon_accounting");
    double col = postproc::eps_col(1360000);
    b.sub(col >= 2.4e-11 && col <= 2.5e-11,
          "eps_col(1.36e6 bits) = " + num(col) + " (expect within [2.4e-11, 2.5e-11])");
    postproc::epsilon_budget budget = postproc::make_epsilon_budget(1e-12, col, 1e-12, 1);
    b.sub(budget.eps_total < 3e-11,
          "eps_total = " + num(budget.eps_total) + " with eps_decoy = eps_pa = 1e-12 (expect < 3e-11)");
    return b.done();
}

// ---------------------------------------------------------------------------
// Check 5: static detector-efficiency mismatch

check_result check_efficiency_mismatch(int n_threads) {
    builder b("efficiency_mismatch");
    linksim::source_config src;
    linksim::channel_config ch;
    ch.loss_db = 0.0;
    ch.misalignment = 0.0;
    linksim::detector_model det0, det1;
    det0.efficiency = 0.09;
    det1.efficiency = 0.11;
    linksim::session_options opt;
    opt.n_trains = 3600;
    opt.seed = 501;
    opt.n_threads = n_threads;

    auto bit_zero_ratio = [](const linksim::session_log& log) {
        uint64_t zeros = 0;
        for (const auto& rec : log.clicks) zeros += rec.bob_bit == 0;
        return double(zeros) / double(log.clicks.size());
    };

    linksim::session_log fixed = linksim::run_session(src, ch, det0, det1, opt);
    b.sub(fixed.clicks.size() >= 100000,
          "fixed-map clicks = " + std::to_string(fixed.clicks.size()) + " (expect >= 1e5)");
    b.near_abs(bit_zero_ratio(fixed), 0.45, 0.01, "fixed-map bit-0 fraction");

    opt.four_state_bob = true;
    opt.seed = 502;
    linksim::session_log swapped = linksim::run_session(src, ch, det0, det1, opt);
    b.sub(swapped.clicks.size() >= 100000,
          "four-state clicks = " + std::to_string(swapped.clicks.size()) + " (expect >= 1e5)");
    b.near_abs(bit_zero_ratio(swapped), 0.50, 0.01, "four-state bit-0 fraction");
    return b.done();
}

// ---------------------------------------------------------------------------
// Check 6: faked-state attack on blinded detectors

check_result check_faked_state(int n_threads) {
    builder b("faked_state_attack");
    (void)n_threads; // the attack replay is single-threaded by contract
    linksim::source_config src;
    linksim::channel_config ch;
    ch.loss_db = 10.0;
    linksim::detector_model det; // E_never 12 fJ, E_always 22 fJ
    attacks::attack_config cfg;
    cfg.kind = attacks::attack_kind::faked_state;
    cfg.trigger_energy_j = 24e-15; // full trigger always clicks, half never does
    linksim::session_options opt;
    opt.n_trains = 1200;
    opt.seed = 601;

    attacks::attack_result res = attacks::faked_state_attack(src, ch, det, det, cfg, opt);
    b.sub(res.metrics.induced_qber <= 0.005,
          "induced QBER = " + num(res.metrics.induced_qber) + " (expect <= 0.005)");
    b.near_abs(res.metrics.detection_per_eve_pulse, 0.5, 0.01, "detections per resent pulse");
    b.sub(res.metrics.dark_rate_under_attack == 0.0,
          "dark rate while blinded = " + num(res.metrics.dark_rate_under_attack) +
              " (expect exactly 0)");
    uint64_t dark_flags = 0;
    for (const auto& rec : res.log.clicks)
        dark_flags += rec.flag == uint8_t(linksim::click_flag::dark);
    b.sub(dark_flags == 0, "dark-flagged clicks in the log = " + std::to_string(dark_flags) +
                               " (expect 0)");

    // Rate compensation: the throttled intercept matches the honest
    // signal-class sifted rate.
    linksim::channel_config ch6;
    ch6.loss_db = 6.0;
    linksim::detector_model det25 = det;
    det25.efficiency = 0.25;
    attacks::attack_config throttled = cfg;
    throttled.resend_probability =
        attacks::compensating_resend_probability(src, ch6, det25, det25, throttled);
    b.sub(throttled.resend_probability < 1.0,
          "compensating resend probability = " + num(throttled.resend_probability));
    linksim::session_options opt2;
    opt2.n_trains = 2000;
    opt2.seed = 602;
    attacks::attack_result comp = attacks::faked_state_attack(src, ch6, det25, det25, throttled, opt2);
    uint64_t pulses = uint64_t(opt2.n_trains) * src.train_length;
    uint64_t sifted_mu = 0;
    for (const auto& rec : comp.log.clicks)
        sifted_mu += rec.intensity == 0 && rec.alice_basis == rec.bob_basis;
    double t = std::pow(10.0, -ch6.loss_db / 10.0);
    double honest_rate = src.p_mu * 0.5 * linksim::expected_gain(src.mu, t, det25, det25);
    b.near_rel(double(sifted_mu) / double(pulses), honest_rate, 0.05,
               "compensated sifted signal rate");
    return b.done();
}

// ---------------------------------------------------------------------------
// Check 7: deadtime exploit and the software filter

check_result check_deadtime(int n_threads) {
    builder b("deadtime_exploit");
    linksim::source_config src;
    linksim::channel_config ch;
    ch.loss_db = 13.0;
    ch.misalignment = 0.005;
    linksim::detector_model det; // 100 gates hard-dead, ramp to 200, cross-link 2
    det.efficiency = 0.25;
    det.deadtime_s = 100 * det.gate_period_s;
    det.recovery_end_s = 200 * det.gate_period_s;
    attacks::attack_config cfg;
    cfg.kind = attacks::attack_kind::deadtime_exploit;
    linksim::session_options opt;
    opt.n_trains = 20000;
    opt.seed = 909;
    opt.n_threads = n_threads;

    attacks::attack_result res = attacks::deadtime_attack(src, ch, det, det, cfg, opt);
    const attacks::attack_metrics& m = res.metrics;
    double sigma = 0.5 / std::sqrt(double(m.sifted_clicks));
    b.sub(m.sifted_clicks >= 10000,
          "sifted clicks = " + std::to_string(m.sifted_clicks) + " (expect >= 1e4)");
    b.sub(m.eve_bit_agreement - 0.5 >= 10 * sigma,
          "bit agreement = " + num(m.eve_bit_agreement) + " (expect >= 0.5 + 10 sigma = " +
              num(0.5 + 10 * sigma) + ")");

    // Filter window >= the vulnerable window (hard deadtime + recovery ramp
    // + cross-link delay), so every exploit click dies.
    const uint64_t window = 256;
    linksim::session_log filtered = linksim::software_deadtime_filter(res.log, window);
    attacks::attack_metrics fm = attacks::remeasure(res, filtered);
    double fsigma = 0.5 / std::sqrt(double(fm.sifted_clicks));
    b.sub(fm.exploit_clicks == 0,
          "exploit clicks after the filter = " + std::to_string(fm.exploit_clicks) +
              " (expect 0)");
    b.sub(std::abs(fm.eve_bit_agreement - 0.5) <= 3 * fsigma,
          "filtered bit agreement = " + num(fm.eve_bit_agreement) + " (expect 0.5 +- 3 sigma = " +
              num(3 * fsigma) + ")");

    uint64_t min_gap = UINT64_MAX;
    for (std::size_t i = 1; i < filtered.clicks.size(); ++i)
        min_gap = std::min(min_gap,
                           linksim::absolute_gate(filtered.clicks[i], filtered.header.train_length) -
                               linksim::absolute_gate(filtered.clicks[i - 1],
                                                      filtered.header.train_length));
    b.sub(min_gap >= window, "minimum retained click spacing = " + std::to_string(min_gap) +
                                 " gates over " + std::to_string(filtered.clicks.size()) +
                                 " clicks (expect >= " + std::to_string(window) + ")");
    return b.done();
}

// ---------------------------------------------------------------------------
// Check 8: finite-key coverage of the decoy bounds

check_result check_finite_key_coverage(int n_threads) {
    builder b("finite_key_coverage");
    // Per-block populations are simulated at the photon-number level, so the
    // true single-photon statistics are known and the one-sided bounds can
    // be scored. With eps_decoy = 0.07 the bounds may fail, but not more
    // often than the budget plus Monte-Carlo slack allows.
    const double t_eta = 0.3, dark = 1e-5, mis = 0.03;
    postproc::source_intensities src;
    const double alphas[3] = {src.mu, src.nu1, src.nu2};
    const long long sent[3] = {15000, 7500, 7500};
    const double eps_decoy = 0.07;
    const double z = postproc::quantile_from_eps(eps_decoy);
    const std::size_t blocks = 10000;
    rng base(909090);

    std::atomic<long long> viol_m1{0}, viol_e1{0}, usable{0};
    parallel_for(blocks, n_threads, [&](std::size_t blk) {
        rng g = base.substream(blk);
        postproc::decoy_stats stats;
        long long det_k_mu[14] = {0};
        for (int a = 0; a < 3; ++a) {
            stats.n[a] = double(sent[a]);
            long long remaining = sent[a];
            double remaining_prob = 1.0;
            double pmf = std::exp(-alphas[a]);
            long long detected = 0;
            for (int k = 0; k <= 13 && remaining > 0; ++k) {
                double cond = k == 13 ? 1.0 : std::min(1.0, pmf / remaining_prob);
                long long n_k = (long long)g.binomial(uint32_t(remaining), cond);
                double p_det =
                    1.0 - std::pow(1.0 - t_eta, double(k)) * (1.0 - dark) * (1.0 - dark);
                long long d_k = (long long)g.binomial(uint32_t(n_k), p_det);
                detected += d_k;
                if (a == 0) det_k_mu[k] += d_k;
                remaining -= n_k;
                remaining_prob -= pmf;
                pmf *= alphas[a] / double(k + 1);
            }
            stats.m[a] = double(detected);
        }
        // Basis sifting halves every category independently; misaligned
        // photons flip deterministically, dark-only clicks are fair coins.
        long long m0_sift = (long long)g.binomial(uint32_t(det_k_mu[0]), 0.5);
        long long m1_sift = (long long)g.binomial(uint32_t(det_k_mu[1]), 0.5);
        long long multi = 0;
        for (int k = 2; k <= 13; ++k) multi += det_k_mu[k];
        long long multi_sift = (long long)g.binomial(uint32_t(multi), 0.5);
        long long l_ver = m0_sift + m1_sift + multi_sift;
        if (l_ver == 0) return;
        long long e1_errs = (long long)g.binomial(uint32_t(m1_sift), mis);
        long long errs = e1_errs + (long long)g.binomial(uint32_t(multi_sift), mis) +
                         (long long)g.binomial(uint32_t(m0_sift), 0.5);
        double e_mu = double(errs) / double(l_ver);

        postproc::decoy_bounds_result bounds = postproc::decoy_bounds(stats, src, z);
        postproc::single_photon_counts c =
            postproc::count_single_photon(bounds, src, double(l_ver), stats.n[0], z);
        if (!(c.m1_l > 0)) return; // vacuous bound cannot be violated
        usable.fetch_add(1);
        if (double(m1_sift) < c.m1_l) viol_m1.fetch_add(1);
        double e1u = postproc::e1_upper(double(l_ver), e_mu, c.m0bar_l, c.m1_l);
        if (m1_sift > 0 && double(e1_errs) / double(m1_sift) > e1u) viol_e1.fetch_add(1);
    });

    double limit = eps_decoy + 3.0 * std::sqrt(eps_decoy * (1 - eps_decoy) / double(blocks));
    double rate_m1 = double(viol_m1.load()) / double(blocks);
    double rate_e1 = double(viol_e1.load()) / double(blocks);
    b.sub(usable.load() >= (long long)blocks / 4,
          "blocks with a usable bound = " + std::to_string(usable.load()) + " of " +
              std::to_string(blocks) + " (expect >= 1/4)");
    b.sub(rate_m1 <= limit, "single-photon count bound violations = " + num(rate_m1) +
                                " (expect <= " + num(limit) + ")");
    b.sub(rate_e1 <= limit, "single-photon QBER bound violations = " + num(rate_e1) +
                                " (expect <= " + num(limit) + ")");
    return b.done();
}

// ---------------------------------------------------------------------------
// Check 9: end-to-end key agreement and the hashing oracles

check_result check_end_to_end(int n_threads) {
    builder b("end_to_end_keys");

    // Error-free link: no loss, no misalignment, no darks. Every session
    // must fill one block and both sides must extract identical keys.
    std::atomic<long long> ok_sessions{0};
    std::mutex first_mutex;
    std::string first_failure;
    parallel_for(100, n_threads, [&](std::size_t i) {
        linksim::source_config src;
        src.nu2 = 0.02;
        src.p_mu = 0.5;
        src.p_nu1 = 0.3;
        src.p_nu2 = 0.2;
        linksim::channel_config ch;
        ch.loss_db = 0.0;
        ch.misalignment = 0.0;
        linksim::detector_model det;
        det.efficiency = 0.5;
        det.dark_prob = 0.0;
        linksim::session_options opt;
        opt.n_trains = 440;
        opt.seed = 9000 + i;
        opt.n_threads = 1; // the outer loop owns the parallelism

        postproc::protocol_config pp;
        pp.eps_decoy = 1e-12;
        pp.eps_pa = 1e-12;
        pp.apriori_qber = 0.01;
        pp.n_subblocks = 1;
        pp.seed = 1000 + i;
        postproc::source_intensities intensities;
        intensities.nu2 = src.nu2;

        linksim::session_log log = linksim::run_session(src, ch, det, det, opt);
        postproc::block_accumulator acc(intensities, pp);
        std::vector<postproc::block_report> reports = acc.feed(log);

        std::string why;
        if (reports.empty())
            why = "no block completed";
        else if (reports[0].aborted)
            why = std::string("block aborted: ") + postproc::abort_reason_name(reports[0].reason);
        else if (reports[0].reconciliation.alice_key != reports[0].reconciliation.bob_key)
            why = "verified keys differ";
        else if (reports[0].secret_bits <= 0 ||
                 reports[0].secret_key.size() != std::size_t(reports[0].secret_bits))
            why = "no secret key material";
        else {
            bitvec pa_alice = postproc::privacy_amplify(reports[0].reconciliation.alice_key,
                                                        std::size_t(reports[0].secret_bits), 4242);
            bitvec pa_bob = postproc::privacy_amplify(reports[0].reconciliation.bob_key,
                                                      std::size_t(reports[0].secret_bits), 4242);
            if (pa_alice != pa_bob) why = "amplified keys differ";
        }
        if (why.empty()) {
            ok_sessions.fetch_add(1);
        } else {
            std::lock_guard<std::mutex> lock(first_mutex);
            if (first_failure.empty())
                first_failure = "seed " + std::to_string(opt.seed) + ": " + why;
        }
    });
    b.sub(ok_sessions.load() == 100,
          "identical secret keys for " + std::to_string(ok_sessions.load()) +
              " of 100 error-free sessions" +
              (first_failure.empty() ? "" : " (first failure: " + first_failure + ")"));

    // Toeplitz extractor against a dense-matrix oracle.
    rng tg(1331);
    int toeplitz_bad = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        std::size_t in_bits = 1 + tg.below(120);
        std::size_t out_bits = 1 + tg.below(80);
        bitvec key(in_bits), seed(in_bits + out_bits - 1);
        for (auto& w : key.words()) w = tg.next();
        key.mask_tail();
        for (auto& w : seed.words()) w = tg.next();
        seed.mask_tail();
        bitvec got = postproc::toeplitz_multiply(seed, key, out_bits);
        bool ok = got.size() == out_bits;
        for (std::size_t r = 0; ok && r < out_bits; ++r) {
            int parity = 0;
            for (std::size_t c = 0; c < in_bits; ++c)
                parity ^= int(seed.get(r + c) && key.get(c));
            ok = int(got.get(r)) == parity;
        }
        toeplitz_bad += !ok;
    }
    b.sub(toeplitz_bad == 0, "Toeplitz vs dense-matrix oracle: " +
                                 std::to_string(1000 - toeplitz_bad) + " of 1000 instances match");

    // Polynomial hash against an arbitrary-precision oracle: evaluate the
    // padded-block polynomial in full precision (base-2^32 limbs), reduce by
    // the modulus once at the end.
    auto polyhash_oracle = [](uint64_t key, const bitvec& msg) {
        std::vector<uint64_t> blocks;
        const std::size_t n = msg.size();
        const std::size_t n_data = n / 49 + 1; // whole blocks plus the padding block
        for (std::size_t blk = 0; blk < n_data; ++blk) {
            uint64_t block = 0;
            for (unsigned j = 0; j < 49; ++j) {
                std::size_t pos = blk * 49 + j;
                unsigned bit = pos < n ? unsigned(msg.get(pos)) : (pos == n ? 1u : 0u);
                block = block << 1 | bit;
            }
            blocks.push_back(block);
        }
        blocks.push_back(uint64_t(n) & ((uint64_t(1) << 49) - 1));
        std::vector<uint32_t> limbs{0}; // little-endian
        for (uint64_t block : blocks) {
            unsigned __int128 carry = block;
            for (auto& limb : limbs) {
                unsigned __int128 cur = (unsigned __int128)limb * key + carry;
                limb = uint32_t(cur);
                carry = cur >> 32;
            }
            while (carry) {
                limbs.push_back(uint32_t(carry));
                carry >>= 32;
            }
        }
        unsigned __int128 r = 0;
        for (auto it = limbs.rbegin(); it != limbs.rend(); ++it)
            r = ((r << 32) | *it) % postproc::polyhash_q;
        return uint64_t(r);
    };
    rng pg(1332);
    int polyhash_bad = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        uint64_t key = pg.below(postproc::polyhash_q);
        bitvec msg(pg.below(400));
        for (auto& w : msg.words()) w = pg.next();
        msg.mask_tail();
        polyhash_bad += postproc::polyhash(key, msg) != polyhash_oracle(key, msg);
    }
    b.sub(polyhash_bad == 0, "polynomial hash vs arbitrary-precision oracle: " +
                                 std::to_string(1000 - polyhash_bad) + " of 1000 keys match");
    return b.done();
}

// ---------------------------------------------------------------------------
// Check 10: secret length is monotone in channel loss

check_result check_keyrate_monotonic() {
    builder b("keyrate_monotonic");
    postproc::analytic_keyrate_config cfg;
    cfg.n_pulses = 1e10;
    cfg.protocol.eps_decoy = 1e-12;
    cfg.protocol.eps_pa = 1e-12;
    cfg.protocol.apriori_qber = 0.01;
    cfg.protocol.n_subblocks = 1;

    const double step = 0.5, last_loss = 50.0;
    int abort_index = -1, n_points = 0;
    bool monotone = true, abort_is_final = true;
    int64_t previous = 0;
    double first_secret = 0, abort_loss = 0;
    for (double loss = 0.0; loss <= last_loss + 1e-9; loss += step, ++n_points) {
        postproc::analytic_keyrate_result r = postproc::analytic_keyrate(cfg, loss);
        if (r.aborted) {
            if (abort_index < 0) {
                abort_index = n_points;
                abort_loss = loss;
            }
            continue;
        }
        if (abort_index >= 0) abort_is_final = false; // key came back after an abort
        if (n_points == 0)
            first_secret = double(r.secret_bits);
        else if (r.secret_bits > previous)
            monotone = false;
        previous = r.secret_bits;
    }
    b.sub(first_secret > 0, "secret length at 0 dB = " + num(first_secret) + " (expect > 0)");
    b.sub(monotone, "secret length is non-increasing across the sweep");
    b.sub(abort_index > 0 && abort_is_final,
          abort_index > 0 ? "abort at " + num(abort_loss) + " dB and no key beyond it"
                          : "no abort up to " + num(last_loss) + " dB (expect a finite abort)");
    return b.done();
}

} // namespace

std::vector<check_result> run_checks(check_level level, int n_threads) {
    std::vector<check_result> out;
    out.push_back(check_budget_operating());
    out.push_back(check_budget_out_of_band());
    out.push_back(check_risk_grades());
    out.push_back(check_epsilon_accounting());
    if (level == check_level::full) {
        out.push_back(check_efficiency_mismatch(n_threads));
        out.push_back(check_faked_state(n_threads));
        out.push_back(check_deadtime(n_threads));
        out.push_back(check_finite_key_coverage(n_threads));
        out.push_back(check_end_to_end(n_threads));
    }
    out.push_back(check_keyrate_monotonic());
    return out;
}

std::string format_checks(const std::vector<check_result>& results) {
    std::string out;
    std::size_t passed = 0, expected = 0;
    for (const auto& r : results) {
        out += r.pass ? "PASS " : "FAIL ";
        out += r.name;
        if (!r.pass && r.expected_failure) out += " (expected failure, see detail)";
        out += '\n';
        out += r.detail;
        passed += r.pass;
        expected += !r.pass && r.expected_failure;
    }
    std::size_t failed = results.size() - passed;
    out += std::to_string(passed) + " of " + std::to_string(results.size()) +
           " checks passed; " + std::to_string(failed) + " failed (" + std::to_string(expected) +
           " expected, " + std::to_string(failed - expected) + " unexpected)\n";
    return out;
}

std::size_t unexpected_failures(const std::vector<check_result>& results) {
    std::size_t n = 0;
    for (const auto& r : results) n += !r.pass && !r.expected_failure;
    return n;
}

} // namespace qkd::checks
