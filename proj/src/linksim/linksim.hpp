#pragma once
// Discrete-time Monte-Carlo model of a decoy-state BB84 link: three-intensity
// pulsed source, lossy channel with misalignment, and two gated threshold
// detectors with dark counts, blinding response, deadtime with cross-link
// delay, and the four-state receiver countermeasure.
//
// Time is discretized to detector gate slots; sub-gate timing is out of
// scope. Polarisation is collapsed to the BB84 basis/bit abstraction, with
// misalignment acting as a basis-preserving bit-flip probability.

#include <cstdint>
#include <string>
#include <vector>

#include "support/rng.hpp"
#include "support/util.hpp"

namespace qkd::linksim {

// ------------------------------------------------------------ configuration

struct source_config {
    // Mean photon numbers of the signal and two decoy classes.
    double mu = 0.5;
    double nu1 = 0.1;
    double nu2 = 0.05;
    // Per-pulse probability of emitting each class; must sum to 1.
    double p_mu = 0.5;
    double p_nu1 = 0.25;
    double p_nu2 = 0.25;
    double f_p_hz = 312.5e6;    // pulse repetition rate
    uint32_t train_length = 1200; // pulses per train
};

struct channel_config {
    double loss_db = 10.0;
    double misalignment = 0.0; // basis-preserving bit-flip probability, [0, 0.5]
};

struct detector_model {
    double efficiency = 0.1;
    double dark_prob = 1e-6;      // per-gate dark-click probability
    double gate_period_s = 3.2e-9;
    double deadtime_s = 3.4e-6;   // hard-dead interval after a click
    int crosslink_delay_gates = 2; // partner goes dead this many gates later
    // Per-gate relative efficiency after the hard-dead interval. Empty means
    // a linear ramp from deadtime_s to recovery_end_s. Values must lie in
    // [0,1] and end at 1.
    std::vector<double> recovery_profile;
    double recovery_end_s = 6e-6;
    // Bright-pulse (blinded) response thresholds and the cw power needed to
    // blind the detector in the first place.
    double e_never_j = 12e-15;
    double e_always_j = 22e-15;
    double blinding_power_w = 3e-6;
};

void validate(const source_config& s);
void validate(const channel_config& c);
void validate(const detector_model& d);

// ------------------------------------------------------------- session log

enum class intensity_class : uint8_t { mu = 0, nu1 = 1, nu2 = 2 };
enum class click_flag : uint8_t { single = 0, double_click = 1, dark = 2 };

const char* intensity_name(intensity_class c);
const char* flag_name(click_flag f);
intensity_class intensity_from_name(const std::string& name);
click_flag flag_from_name(const std::string& name);

// One record per gate slot in which at least one detector clicked. Pulses
// that produced no click are not stored; the per-class cumulative counters
// carry the information needed to normalise count rates afterwards.
struct click_record {
    uint32_t train = 0;
    uint32_t slot = 0;      // < train_length
    uint8_t detector = 0;   // the clicking detector (for doubles: the one
                            // consistent with the randomly resolved bit)
    uint8_t bob_basis = 0;
    uint8_t bob_bit = 0;
    uint8_t flag = 0;       // click_flag
    uint8_t alice_basis = 0;
    uint8_t alice_bit = 0;
    uint8_t intensity = 0;  // intensity_class
    uint8_t swap = 0;       // four-state detector/bit assignment for the slot
    uint16_t src_photons = 0; // photons leaving the source this pulse
    // Pulses sent per intensity class up to and including this slot.
    uint64_t cum_sent[3] = {0, 0, 0};
};

struct session_header {
    uint64_t seed = 0;
    uint32_t n_trains = 0;
    uint32_t train_length = 0;
    uint8_t four_state = 0;
    uint64_t sent[3] = {0, 0, 0}; // total pulses per intensity class
};

struct session_log {
    session_header header;
    std::vector<click_record> clicks;
};

inline uint64_t absolute_gate(const click_record& r, uint32_t train_length) {
    return uint64_t(r.train) * train_length + r.slot;
}

// --------------------------------------------------------------- samplers

// Photon number of a phase-randomized coherent pulse of the given mean.
uint32_t sample_photon_number(double intensity, rng& r);

// Independent per-photon survival through a lossy element.
uint32_t thin(uint32_t n, double transmittance, rng& r);

// Threshold detection of n photons: clicks with probability 1-(1-eta)^n,
// OR-ed with the dark-count draw. Exactly two RNG draws, always.
bool detect_single_photon(uint32_t n, const detector_model& d, rng& r);

// Blinded-regime response to a bright trigger pulse of energy e_j: the click
// probability is 0 below e_never_j, 1 at or above e_always_j, and ramps
// linearly in between. The detector must actually be blinded by cw power of
// at least blinding_power_w, otherwise NotBlinded is raised. A blinded
// detector produces no dark counts.
double detect_bright(double e_j, double cw_power_w, const detector_model& d);

// ----------------------------------------------------------------- session

struct session_options {
    bool four_state_bob = false;
    uint32_t n_trains = 1;
    uint64_t seed = 1;
    int n_threads = 1; // 0 = hardware concurrency; trains use RNG substreams
};

// Full Monte-Carlo session. Deterministic given the seed: trains are driven
// by per-train RNG substreams, so the thread count never changes the output.
session_log run_session(const source_config& source, const channel_config& channel,
                        const detector_model& det0, const detector_model& det1,
                        const session_options& options);

// Replays the hardware deadtime over an ordered click log: a surviving click
// makes its own detector insensitive for deadtime_s (then the recovery ramp)
// and its partner from crosslink_delay_gates later. Ramp-zone survival is a
// Bernoulli draw from a dedicated RNG stream. Double clicks are re-evaluated
// per detector and may collapse into forced singles.
session_log apply_hardware_deadtime(const session_log& log, const detector_model& det0,
                                    const detector_model& det1, uint64_t seed);

// Post-processing click filter: drops any click fewer than window_gates after
// the previous click, retained or discarded, on either detector; a discarded
// click renews the window.
session_log software_deadtime_filter(const session_log& log, uint64_t window_gates);

// ------------------------------------------------------------------ log IO

void save_session_csv(const session_log& log, const std::string& path);
void save_session_binary(const session_log& log, const std::string& path);
// Auto-detects the binary magic, falls back to CSV.
session_log load_session(const std::string& path);

// -------------------------------------------------------------- analytics

// Expected per-pulse click probability (gain) of an intensity class over a
// channel of transmittance t into two detectors of equal efficiency:
// 1 - (1-dark0)(1-dark1) exp(-intensity * t * eta).
double expected_gain(double intensity, double transmittance, const detector_model& det0,
                     const detector_model& det1);

} // namespace qkd::linksim
