#pragma once
// Eve strategies operating on or around the simulated link. Each attack
// produces the session log Bob would record plus metrics quantifying what
// Eve learned and what artefacts she left behind.
//
// Two strategies are modeled:
//
//  * faked_state — measure-and-resend against blinded detectors. Eve taps
//    the fiber next to Alice, measures every intercepted pulse in a random
//    basis and resends her result as a bright trigger pulse into Bob's
//    cw-blinded detectors. With Bob's active basis choice the full trigger
//    energy lands on the detector wired to Eve's bit when the bases agree;
//    on a mismatch it splits in half onto both detectors, which keeps them
//    silent as long as half the trigger stays at or below the never-click
//    threshold. Blinded detectors produce no dark counts.
//
//  * deadtime_exploit — piggybacks on the cross-link delay of the
//    simultaneous deadtime. After an accepted click one detector is dead
//    immediately while its partner stays sensitive for crosslink_delay
//    gates; a bright pulse timed into that gap can fire only the one
//    sensitive detector, so the resulting raw-key bit is known to Eve.
//
// Both attacks are pure transformations of their input streams given the
// seed. They run single-threaded over per-train substreams, so results do
// not depend on session_options::n_threads. The honest baseline is
// recoverable with kind = none.

#include <cstdint>
#include <string>
#include <vector>

#include "linksim/linksim.hpp"
#include "support/rng.hpp"
#include "support/util.hpp"

namespace qkd::attacks {

enum class attack_kind : uint8_t { none = 0, faked_state = 1, deadtime_exploit = 2 };

const char* attack_kind_name(attack_kind k);
attack_kind attack_kind_from_name(const std::string& name);

struct attack_config {
    attack_kind kind = attack_kind::none;
    // Loss of Eve's tap between Alice's output and Eve's measurement. Her
    // measurement itself is ideal; 0 dB puts her at Alice's doorstep.
    double eve_position_loss_db = 0.0;
    // cw power Eve shines into Bob to hold his detectors blinded.
    double blinding_power_w = 250e-6;
    // Energy of one resent trigger pulse as it arrives at Bob. Eve drives
    // the line with classical light, so she pre-compensates the fiber loss.
    double trigger_energy_j = 24e-15;
    // Fraction of successful intercepts Eve actually resends; lowering it
    // hides the click-rate increase her ideal intercept would cause.
    double resend_probability = 1.0;
    // Mean photon number of one injected pulse in the deadtime exploit.
    double injection_mean_photons = 50.0;
};

void validate(const attack_config& cfg);

struct attack_metrics {
    // Fraction of sifted clicks whose raw-key bit Eve's record matches.
    double eve_bit_agreement = 0.5;
    // Error rate Alice-vs-Bob over the sifted clicks of the attacked log.
    double induced_qber = 0.0;
    // Accepted click rate of the attacked log relative to the honest link.
    double detection_rate_ratio = 0.0;
    // Accepted dark clicks per gate in the attacked log.
    double dark_rate_under_attack = 0.0;
    // Run telemetry.
    uint64_t total_gates = 0;
    uint64_t accepted_clicks = 0;
    uint64_t sifted_clicks = 0;
    // Clicks whose bit Eve knows with certainty (not just by guessing).
    uint64_t exploit_clicks = 0;
    // Pulses Eve actively sent (resent triggers / injected bright pulses).
    uint64_t eve_pulses = 0;
    // Accepted clicks per Eve pulse.
    double detection_per_eve_pulse = 0.0;
};

struct attack_result {
    linksim::session_log log;
    attack_metrics metrics;
    // Eve's bit record for every click in log.clicks (parallel arrays):
    // eve_bits[i] is her best value for the raw-key bit, eve_known[i] is 1
    // when she holds it with certainty and 0 when it is a guess.
    std::vector<uint8_t> eve_bits;
    std::vector<uint8_t> eve_known;
};

// Measure-and-resend with blinded detectors. The channel configuration is
// used only to price the honest link (detection_rate_ratio and the resend
// throttle target); Eve's bright pulses replace the quantum channel.
// Raises not_blinded unless cfg.blinding_power_w blinds both detectors.
attack_result faked_state_attack(const linksim::source_config& src,
                                 const linksim::channel_config& channel,
                                 const linksim::detector_model& det0,
                                 const linksim::detector_model& det1,
                                 const attack_config& cfg,
                                 const linksim::session_options& options);

// Resend probability at which the attacked signal-class click rate equals
// the honest one, clamped to [0, 1]: the throttle Eve uses to hide the rate
// increase of an otherwise ideal intercept.
double compensating_resend_probability(const linksim::source_config& src,
                                       const linksim::channel_config& channel,
                                       const linksim::detector_model& det0,
                                       const linksim::detector_model& det1,
                                       const attack_config& cfg);

// Deadtime exploit over an honest session. The honest stream is generated
// internally (no hardware deadtime yet); the attack then replays the
// deadtime state machine itself so Eve's injections and Alice's clicks
// share one timeline. After every accepted single on detector d, Eve
// injects bright pulses into the gates before the cross-link closes the
// partner, harvesting clicks whose bit must equal 1-d. Worst case is
// assumed in that Eve knows which detector fired each accepted click (she
// could equally force a chosen detector dead with wavelength-selective
// bright light). Requires the fixed detector-bit map, i.e. four_state_bob
// off. An injection gate consumes any honest click at the same gate: the
// detectors respond once to the summed light.
attack_result deadtime_attack(const linksim::source_config& src,
                              const linksim::channel_config& channel,
                              const linksim::detector_model& det0,
                              const linksim::detector_model& det1,
                              const attack_config& cfg,
                              const linksim::session_options& options);

// Dispatch on cfg.kind; kind none returns the honest session with Eve
// reduced to guessing.
attack_result run_attack(const linksim::source_config& src,
                         const linksim::channel_config& channel,
                         const linksim::detector_model& det0,
                         const linksim::detector_model& det1,
                         const attack_config& cfg,
                         const linksim::session_options& options);

// Recompute the metrics over a filtered view of an attacked log (for
// example after software_deadtime_filter). Clicks are matched back to the
// attack's per-click record by absolute gate position; a click absent from
// the original log is an error.
attack_metrics remeasure(const attack_result& attacked,
                         const linksim::session_log& filtered);

} // namespace qkd::attacks
