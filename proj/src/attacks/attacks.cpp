#include "attacks/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <unordered_map>

#include "linksim/deadtime_state.hpp"

namespace qkd::attacks {

using linksim::click_flag;
using linksim::click_record;
using linksim::session_log;

const char* attack_kind_name(attack_kind k) {
    switch (k) {
    case attack_kind::none: return "none";
    case attack_kind::faked_state: return "faked_state";
    case attack_kind::deadtime_exploit: return "deadtime_exploit";
    }
    fail(errc::config_invalid, "unknown attack kind");
}

attack_kind attack_kind_from_name(const std::string& name) {
    if (name == "none") return attack_kind::none;
    if (name == "faked_state") return attack_kind::faked_state;
    if (name == "deadtime_exploit") return attack_kind::deadtime_exploit;
    fail(errc::config_invalid, "unknown attack kind: " + name);
}

void validate(const attack_config& cfg) {
    if (!std::isfinite(cfg.eve_position_loss_db) || cfg.eve_position_loss_db < 0)
        fail(errc::config_invalid, "eve_position_loss_db must be finite and non-negative");
    if (!std::isfinite(cfg.blinding_power_w) || cfg.blinding_power_w < 0)
        fail(errc::config_invalid, "blinding_power_w must be finite and non-negative");
    if (!std::isfinite(cfg.trigger_energy_j) || cfg.trigger_energy_j < 0)
        fail(errc::config_invalid, "trigger_energy_j must be finite and non-negative");
    if (!(cfg.resend_probability >= 0.0 && cfg.resend_probability <= 1.0))
        fail(errc::config_invalid, "resend_probability must lie in [0, 1]");
    if (!(cfg.injection_mean_photons > 0.0 && cfg.injection_mean_photons <= 600.0))
        fail(errc::config_invalid, "injection_mean_photons must lie in (0, 600]");
    if (cfg.kind == attack_kind::faked_state) {
        if (cfg.trigger_energy_j <= 0)
            fail(errc::config_invalid, "faked_state needs a positive trigger energy");
        if (cfg.blinding_power_w <= 0)
            fail(errc::config_invalid, "faked_state needs cw blinding power");
    }
}

namespace {

double db_to_transmittance(double db) { return std::pow(10.0, -db / 10.0); }

// Expected honest click probability per gate: class mix times per-class gain.
double honest_rate_per_gate(const linksim::source_config& src, const linksim::channel_config& ch,
                            const linksim::detector_model& det0,
                            const linksim::detector_model& det1) {
    double t = db_to_transmittance(ch.loss_db);
    return src.p_mu * linksim::expected_gain(src.mu, t, det0, det1) +
           src.p_nu1 * linksim::expected_gain(src.nu1, t, det0, det1) +
           src.p_nu2 * linksim::expected_gain(src.nu2, t, det0, det1);
}

attack_metrics measure(const session_log& log, const std::vector<uint8_t>& eve_bits,
                       const std::vector<uint8_t>& eve_known, double honest_per_gate) {
    attack_metrics m;
    m.total_gates = uint64_t(log.header.n_trains) * log.header.train_length;
    m.accepted_clicks = log.clicks.size();
    uint64_t agree = 0;
    uint64_t errors = 0;
    uint64_t darks = 0;
    for (std::size_t i = 0; i < log.clicks.size(); ++i) {
        const click_record& rec = log.clicks[i];
        if (rec.flag == uint8_t(click_flag::dark)) ++darks;
        if (eve_known[i]) ++m.exploit_clicks;
        if (rec.alice_basis != rec.bob_basis) continue;
        ++m.sifted_clicks;
        if (eve_bits[i] == rec.bob_bit) ++agree;
        if (rec.alice_bit != rec.bob_bit) ++errors;
    }
    m.eve_bit_agreement = m.sifted_clicks ? double(agree) / double(m.sifted_clicks) : 0.5;
    m.induced_qber = m.sifted_clicks ? double(errors) / double(m.sifted_clicks) : 0.0;
    m.dark_rate_under_attack = m.total_gates ? double(darks) / double(m.total_gates) : 0.0;
    double rate = m.total_gates ? double(m.accepted_clicks) / double(m.total_gates) : 0.0;
    m.detection_rate_ratio = honest_per_gate > 0.0 ? rate / honest_per_gate : 0.0;
    return m;
}

void validate_all(const linksim::source_config& src, const linksim::channel_config& ch,
                  const linksim::detector_model& det0, const linksim::detector_model& det1,
                  const attack_config& cfg) {
    linksim::validate(src);
    linksim::validate(ch);
    linksim::validate(det0);
    linksim::validate(det1);
    validate(cfg);
}

} // namespace

// ------------------------------------------------------------- faked state

attack_result faked_state_attack(const linksim::source_config& src,
                                 const linksim::channel_config& channel,
                                 const linksim::detector_model& det0,
                                 const linksim::detector_model& det1,
                                 const attack_config& cfg,
                                 const linksim::session_options& options) {
    validate_all(src, channel, det0, det1, cfg);
    if (cfg.kind != attack_kind::faked_state)
        fail(errc::config_invalid, "attack config kind is not faked_state");
    if (options.n_trains < 1) fail(errc::config_invalid, "n_trains must be at least 1");

    // Both detectors must actually be blinded before anything else; the
    // bright-pulse response probabilities are then pure in the energies.
    const double p_full[2] = {
        linksim::detect_bright(cfg.trigger_energy_j, cfg.blinding_power_w, det0),
        linksim::detect_bright(cfg.trigger_energy_j, cfg.blinding_power_w, det1)};
    const double p_half[2] = {
        linksim::detect_bright(cfg.trigger_energy_j / 2, cfg.blinding_power_w, det0),
        linksim::detect_bright(cfg.trigger_energy_j / 2, cfg.blinding_power_w, det1)};

    const double t_eve = db_to_transmittance(cfg.eve_position_loss_db);
    const double p_class[3] = {src.p_mu, src.p_nu1, src.p_nu2};
    const double mean[3] = {src.mu, src.nu1, src.nu2};

    attack_result res;
    res.log.header.seed = options.seed;
    res.log.header.n_trains = options.n_trains;
    res.log.header.train_length = src.train_length;
    res.log.header.four_state = options.four_state_bob ? 1 : 0;

    uint64_t sent[3] = {0, 0, 0};
    uint64_t resent = 0;
    rng base(options.seed);
    for (uint32_t train = 0; train < options.n_trains; ++train) {
        rng g = base.substream(train);
        for (uint32_t slot = 0; slot < src.train_length; ++slot) {
            // Alice's pulse, as on the honest link.
            uint8_t a_basis = uint8_t(g.bit());
            uint8_t a_bit = uint8_t(g.bit());
            double u = g.uniform();
            int cls = u < p_class[0] ? 0 : (u < p_class[0] + p_class[1] ? 1 : 2);
            sent[cls] += 1;
            uint32_t n_src = linksim::sample_photon_number(mean[cls], g);

            // Eve's tap: an ideal measurement that succeeds whenever at
            // least one photon reaches her. A failed intercept means she
            // sends nothing, and blinded detectors stay silent.
            uint32_t n_eve = linksim::thin(n_src, t_eve, g);
            if (n_eve == 0) continue;
            uint8_t eve_basis = uint8_t(g.bit());
            uint8_t eve_bit = eve_basis == a_basis ? a_bit : uint8_t(g.bit());
            if (cfg.resend_probability < 1.0 && !g.bernoulli(cfg.resend_probability))
                continue; // throttled away to hide the rate increase
            ++resent;

            uint8_t b_basis = uint8_t(g.bit());
            uint8_t swap = options.four_state_bob ? uint8_t(g.bit()) : 0;
            int fired = -1;
            uint8_t flag = uint8_t(click_flag::single);
            bool certain = false;
            if (b_basis == eve_basis) {
                // Full trigger energy on the detector wired to Eve's bit.
                int d = int(eve_bit ^ swap);
                if (g.bernoulli(p_full[d])) {
                    fired = d;
                    certain = true;
                }
            } else {
                // Basis mismatch: half the trigger on each detector.
                bool c0 = g.bernoulli(p_half[0]);
                bool c1 = g.bernoulli(p_half[1]);
                if (c0 && c1) {
                    fired = int(g.bit());
                    flag = uint8_t(click_flag::double_click);
                } else if (c0 || c1) {
                    fired = c0 ? 0 : 1;
                }
            }
            if (fired < 0) continue;

            click_record rec;
            rec.train = train;
            rec.slot = slot;
            rec.detector = uint8_t(fired);
            rec.bob_basis = b_basis;
            rec.bob_bit = uint8_t(fired) ^ swap;
            rec.flag = flag;
            rec.alice_basis = a_basis;
            rec.alice_bit = a_bit;
            rec.intensity = uint8_t(cls);
            rec.swap = swap;
            rec.src_photons = uint16_t(std::min<uint32_t>(n_src, 0xffff));
            rec.cum_sent[0] = sent[0];
            rec.cum_sent[1] = sent[1];
            rec.cum_sent[2] = sent[2];
            res.log.clicks.push_back(rec);
            res.eve_bits.push_back(eve_bit);
            res.eve_known.push_back(certain ? 1 : 0);
        }
    }
    for (int c = 0; c < 3; ++c) res.log.header.sent[c] = sent[c];

    res.metrics = measure(res.log, res.eve_bits, res.eve_known,
                          honest_rate_per_gate(src, channel, det0, det1));
    res.metrics.eve_pulses = resent;
    res.metrics.detection_per_eve_pulse =
        resent ? double(res.log.clicks.size()) / double(resent) : 0.0;
    return res;
}

double compensating_resend_probability(const linksim::source_config& src,
                                       const linksim::channel_config& channel,
                                       const linksim::detector_model& det0,
                                       const linksim::detector_model& det1,
                                       const attack_config& cfg) {
    validate_all(src, channel, det0, det1, cfg);
    const double p_full[2] = {
        linksim::detect_bright(cfg.trigger_energy_j, cfg.blinding_power_w, det0),
        linksim::detect_bright(cfg.trigger_energy_j, cfg.blinding_power_w, det1)};
    const double p_half[2] = {
        linksim::detect_bright(cfg.trigger_energy_j / 2, cfg.blinding_power_w, det0),
        linksim::detect_bright(cfg.trigger_energy_j / 2, cfg.blinding_power_w, det1)};
    // Per resent pulse: Bob matches Eve's basis half the time and the full
    // trigger lands on the detector of her (uniform) bit; otherwise both
    // detectors see half the trigger.
    double per_resend = 0.25 * (p_full[0] + p_full[1]) +
                        0.5 * (1.0 - (1.0 - p_half[0]) * (1.0 - p_half[1]));
    double intercept = 1.0 - std::exp(-src.mu * db_to_transmittance(cfg.eve_position_loss_db));
    double honest = linksim::expected_gain(src.mu, db_to_transmittance(channel.loss_db),
                                           det0, det1);
    double denom = intercept * per_resend;
    if (denom <= 0.0)
        fail(errc::config_invalid,
             "attack cannot produce clicks; no resend probability compensates");
    return std::min(1.0, honest / denom);
}

// ---------------------------------------------------------------- deadtime

attack_result deadtime_attack(const linksim::source_config& src,
                              const linksim::channel_config& channel,
                              const linksim::detector_model& det0,
                              const linksim::detector_model& det1,
                              const attack_config& cfg,
                              const linksim::session_options& options) {
    validate_all(src, channel, det0, det1, cfg);
    if (cfg.kind != attack_kind::deadtime_exploit)
        fail(errc::config_invalid, "attack config kind is not deadtime_exploit");
    if (options.four_state_bob)
        fail(errc::config_invalid,
             "the deadtime exploit assumes the fixed detector-bit map; disable four_state_bob");

    // Honest raw stream, deadtime not yet applied: the attack replays the
    // deadtime state machine itself so Eve's injections and Alice's clicks
    // share one timeline.
    session_log honest = linksim::run_session(src, channel, det0, det1, options);
    // Honest reference with the plain hardware deadtime, for the rate ratio.
    session_log baseline = linksim::apply_hardware_deadtime(honest, det0, det1, options.seed);

    linksim::deadtime_state state[2] = {linksim::make_deadtime_state(det0),
                                        linksim::make_deadtime_state(det1)};
    const int cross[2] = {det0.crosslink_delay_gates, det1.crosslink_delay_gates};
    const double eff[2] = {det0.efficiency, det1.efficiency};
    const double p_class[3] = {src.p_mu, src.p_nu1, src.p_nu2};
    const uint32_t train_length = honest.header.train_length;

    rng eve = rng(options.seed).substream(0x65766531); // Eve's own randomness

    attack_result res;
    res.log.header = honest.header;

    struct injection {
        uint64_t gate;
        uint8_t target; // the detector still sensitive in the cross-link gap
    };
    std::deque<injection> pending;
    uint64_t injections = 0;
    uint64_t harvested = 0;
    uint64_t last_cum[3] = {0, 0, 0};

    // Click-then-survive, as in the hardware-deadtime replay: detection at
    // full efficiency first, then a Bernoulli thinning by the sensitivity.
    auto fire = [&](int d, uint32_t photons, uint64_t gate) {
        if (photons == 0) return false;
        double p = 1.0 - std::pow(1.0 - eff[d], double(photons));
        if (!eve.bernoulli(p)) return false;
        double m = state[d].sensitivity(gate);
        if (m >= 1.0) return true;
        if (m <= 0.0) return false;
        return eve.bernoulli(m);
    };
    auto block = [&](int d, uint64_t gate) {
        state[d].push(gate);
        state[1 - d].push(gate + uint64_t(cross[d]));
    };
    auto survives = [&](int d, uint64_t gate) {
        double m = state[d].sensitivity(gate);
        if (m >= 1.0) return true;
        if (m <= 0.0) return false;
        return eve.bernoulli(m);
    };
    // An accepted single on detector d leaves its partner sensitive until
    // the cross-link closes it; Eve fills that gap.
    auto schedule = [&](int d, uint64_t gate) {
        for (int k = 1; k < cross[d]; ++k)
            pending.push_back({gate + uint64_t(k), uint8_t(1 - d)});
    };
    auto emit = [&](const click_record& rec, uint8_t eve_bit, uint8_t known) {
        res.log.clicks.push_back(rec);
        res.eve_bits.push_back(eve_bit);
        res.eve_known.push_back(known);
    };

    auto process_injection = [&](const injection& inj) {
        ++injections;
        uint64_t g = inj.gate;
        uint32_t n = eve.poisson(cfg.injection_mean_photons);
        uint8_t b_basis = uint8_t(eve.bit());
        // Eve encodes her target detector's bit in basis 0; a mismatched
        // Bob basis splits her photons 50/50.
        uint32_t n_at[2] = {0, 0};
        if (b_basis == 0) {
            n_at[inj.target] = n;
        } else {
            n_at[0] = eve.binomial(n, 0.5);
            n_at[1] = n - n_at[0];
        }
        bool c0 = fire(0, n_at[0], g);
        bool c1 = fire(1, n_at[1], g);
        if (!c0 && !c1) return;
        ++harvested;

        click_record rec;
        rec.train = uint32_t(g / train_length);
        rec.slot = uint32_t(g % train_length);
        rec.bob_basis = b_basis;
        // Alice's pulse at this gate is still on the wire underneath Eve's
        // bright light; its settings are fresh i.i.d. draws.
        rec.alice_basis = uint8_t(eve.bit());
        rec.alice_bit = uint8_t(eve.bit());
        double u = eve.uniform();
        rec.intensity = uint8_t(u < p_class[0] ? 0 : (u < p_class[0] + p_class[1] ? 1 : 2));
        rec.swap = 0;
        rec.src_photons = uint16_t(std::min<uint32_t>(n, 0xffff));
        rec.cum_sent[0] = last_cum[0];
        rec.cum_sent[1] = last_cum[1];
        rec.cum_sent[2] = last_cum[2];
        if (c0 && c1) {
            uint8_t resolved = uint8_t(eve.bit());
            rec.flag = uint8_t(click_flag::double_click);
            rec.bob_bit = resolved;
            rec.detector = resolved;
            block(0, g);
            block(1, g);
            emit(rec, inj.target, 0); // Eve's attribution, no certainty
        } else {
            int d = c0 ? 0 : 1;
            rec.flag = uint8_t(click_flag::single);
            rec.detector = uint8_t(d);
            rec.bob_bit = uint8_t(d);
            block(d, g);
            // Certain only when the click landed where only her target was
            // sensitive; a ramp survivor on the other detector fools her.
            emit(rec, inj.target, uint8_t(d == int(inj.target)));
        }
        // No follow-up windows: Eve's own click plus the cross-link leave
        // both detectors dead for the full deadtime.
    };

    auto process_honest = [&](const click_record& rec) {
        uint64_t g = linksim::absolute_gate(rec, train_length);
        last_cum[0] = rec.cum_sent[0];
        last_cum[1] = rec.cum_sent[1];
        last_cum[2] = rec.cum_sent[2];
        if (rec.flag == uint8_t(click_flag::double_click)) {
            bool s0 = survives(0, g);
            bool s1 = survives(1, g);
            if (!s0 && !s1) return;
            click_record kept = rec;
            if (s0 && s1) {
                block(0, g);
                block(1, g);
                emit(kept, uint8_t(eve.bit()), 0);
            } else {
                int d = s0 ? 0 : 1;
                kept.flag = uint8_t(click_flag::single);
                kept.detector = uint8_t(d);
                kept.bob_bit = uint8_t(d) ^ kept.swap;
                block(d, g);
                emit(kept, uint8_t(eve.bit()), 0);
                schedule(d, g);
            }
        } else {
            int d = rec.detector;
            if (!survives(d, g)) return;
            block(d, g);
            emit(rec, uint8_t(eve.bit()), 0);
            schedule(d, g);
        }
    };

    std::size_t i = 0;
    while (i < honest.clicks.size() || !pending.empty()) {
        uint64_t next_honest = i < honest.clicks.size()
                                   ? linksim::absolute_gate(honest.clicks[i], train_length)
                                   : UINT64_MAX;
        if (!pending.empty() && pending.front().gate <= next_honest) {
            injection inj = pending.front();
            pending.pop_front();
            if (inj.gate == next_honest) {
                // The detectors respond once to the summed light; Eve's
                // bright pulse dominates the gate.
                last_cum[0] = honest.clicks[i].cum_sent[0];
                last_cum[1] = honest.clicks[i].cum_sent[1];
                last_cum[2] = honest.clicks[i].cum_sent[2];
                ++i;
            }
            process_injection(inj);
        } else {
            process_honest(honest.clicks[i]);
            ++i;
        }
    }

    uint64_t gates = uint64_t(honest.header.n_trains) * train_length;
    double baseline_rate = gates ? double(baseline.clicks.size()) / double(gates) : 0.0;
    res.metrics = measure(res.log, res.eve_bits, res.eve_known, baseline_rate);
    res.metrics.eve_pulses = injections;
    res.metrics.detection_per_eve_pulse =
        injections ? double(harvested) / double(injections) : 0.0;
    return res;
}

// -------------------------------------------------------------- dispatcher

attack_result run_attack(const linksim::source_config& src,
                         const linksim::channel_config& channel,
                         const linksim::detector_model& det0,
                         const linksim::detector_model& det1,
                         const attack_config& cfg,
                         const linksim::session_options& options) {
    switch (cfg.kind) {
    case attack_kind::faked_state:
        return faked_state_attack(src, channel, det0, det1, cfg, options);
    case attack_kind::deadtime_exploit:
        return deadtime_attack(src, channel, det0, det1, cfg, options);
    case attack_kind::none: {
        validate_all(src, channel, det0, det1, cfg);
        attack_result res;
        res.log = linksim::run_session(src, channel, det0, det1, options);
        rng guess = rng(options.seed).substream(0x65766531);
        res.eve_bits.resize(res.log.clicks.size());
        res.eve_known.assign(res.log.clicks.size(), 0);
        for (auto& b : res.eve_bits) b = uint8_t(guess.bit());
        res.metrics = measure(res.log, res.eve_bits, res.eve_known,
                              honest_rate_per_gate(src, channel, det0, det1));
        return res;
    }
    }
    fail(errc::config_invalid, "unknown attack kind");
}

attack_metrics remeasure(const attack_result& attacked, const session_log& filtered) {
    const uint32_t train_length = attacked.log.header.train_length;
    if (attacked.eve_bits.size() != attacked.log.clicks.size() ||
        attacked.eve_known.size() != attacked.log.clicks.size())
        fail(errc::config_invalid, "attack result arrays are inconsistent");
    std::unordered_map<uint64_t, std::size_t> by_gate;
    by_gate.reserve(attacked.log.clicks.size());
    for (std::size_t i = 0; i < attacked.log.clicks.size(); ++i)
        by_gate.emplace(linksim::absolute_gate(attacked.log.clicks[i], train_length), i);

    std::vector<uint8_t> bits;
    std::vector<uint8_t> known;
    bits.reserve(filtered.clicks.size());
    known.reserve(filtered.clicks.size());
    for (const click_record& rec : filtered.clicks) {
        auto it = by_gate.find(linksim::absolute_gate(rec, train_length));
        if (it == by_gate.end())
            fail(errc::config_invalid, "filtered log contains a click absent from the attack");
        bits.push_back(attacked.eve_bits[it->second]);
        known.push_back(attacked.eve_known[it->second]);
    }

    // Same honest denominator as the original metrics.
    double honest = 0.0;
    if (attacked.metrics.detection_rate_ratio > 0.0 && attacked.metrics.total_gates > 0)
        honest = (double(attacked.metrics.accepted_clicks) / double(attacked.metrics.total_gates)) /
                 attacked.metrics.detection_rate_ratio;
    attack_metrics m = measure(filtered, bits, known, honest);
    m.eve_pulses = attacked.metrics.eve_pulses;
    m.detection_per_eve_pulse =
        m.eve_pulses ? double(m.accepted_clicks) / double(m.eve_pulses) : 0.0;
    return m;
}

} // namespace qkd::attacks
