#pragma once
// Post-processing pipeline for a decoy-state BB84 session: sifting, decoy
// statistics, error reconciliation, verification, finite-key parameter
// estimation, and privacy amplification.
//
// The pipeline consumes the click log produced by the link simulator (or a
// compatible log assembled elsewhere) and produces per-block reports. A
// block is 1.36e6 verified bits (50 subblocks of 27200); sessions shorter
// than a block are accumulated across calls until a block fills up.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "linksim/linksim.hpp"
#include "support/bitvec.hpp"

namespace qkd::postproc {

// ---------------------------------------------------------------------------
// Configuration

// How the error-correction stage is realized.
//   ldpc   - syndrome reconciliation with the built-in rate-adaptive codes.
//   oracle - noiseless side-channel reconciliation: Bob learns Alice's key
//            directly and the leak is charged as (1 - oracle_rate) * n bits
//            per subblock. Useful for tests and analytic sweeps where the
//            decoder itself is not under study.
enum class reconcile_mode : uint8_t { ldpc, oracle };

struct protocol_config {
    double eps_decoy = 1e-12;   // failure budget for the decoy bounds
    double eps_pa = 1e-12;      // failure budget for privacy amplification
    double apriori_qber = 0.03; // expected channel QBER, drives rate choice
    reconcile_mode mode = reconcile_mode::ldpc;
    double oracle_rate = 0.5;  // charged rate in oracle mode
    uint32_t punctured_bits = 0;   // p: untransmitted syndrome bits per subblock
    uint32_t n_subblocks = 50;     // subblocks per block (block = n_subblocks * 27200)
    uint32_t round_index = 1;      // r: rounds this key material participates in
    uint64_t seed = 1;             // hash-key / PA-seed substream base
};

void validate(const protocol_config& cfg);

// ---------------------------------------------------------------------------
// Sifting and decoy statistics

// Counts per intensity class, indexed by linksim::intensity_class.
// n[a] = pulses sent in class a, m[a] = detections (any flag, any basis)
// recorded in class a. Doubles with both detectors firing are one detection.
struct decoy_stats {
    std::array<double, 3> n{{0, 0, 0}};
    std::array<double, 3> m{{0, 0, 0}};
};

struct sifted_keys {
    bitvec alice;
    bitvec bob;
    decoy_stats stats;
};

// Keep matched-basis signal-class (mu) detections as key material; tally
// every detection into the decoy statistics. The receiver cannot tell a
// dark count or a double-click resolution from a photon, so all flags
// contribute to both the key and the statistics.
sifted_keys sift(const linksim::session_log& log);

// ---------------------------------------------------------------------------
// Error reconciliation

struct subblock_outcome {
    uint32_t index = 0;        // position within the block
    bool converged = false;    // decoder reproduced Alice's syndrome
    bool verified = false;     // polynomial hash tags matched
    double rate = 0;           // code rate used
    uint32_t syndrome_bits = 0;   // syndrome length for that rate
    uint32_t disclosed_bits = 0;  // extra bits revealed while decoding (none here)
    uint32_t corrected_bits = 0;  // Hamming weight of the applied correction
    double qber = 0;              // corrected_bits / subblock size
};

struct reconciliation_outcome {
    std::vector<subblock_outcome> subblocks;
    uint32_t n_verified = 0;    // subblocks that survived verification
    uint32_t n_discarded = 0;   // failed decode or failed verification
    uint32_t xi = 0;            // verification-exchange multiplier
    double eps_ver = 0;         // verification failure budget actually spent
    double e_mu = 0;            // mean QBER over verified subblocks
    uint64_t leak_bits = 0;     // total reconciliation + verification leakage
    uint64_t verified_bits = 0; // n_verified * 27200
    bitvec alice_key;           // concatenated verified subblocks
    bitvec bob_key;
};

// Reconcile and verify one block worth of sifted key. alice/bob must be the
// same length, an exact multiple of 27200, with n_subblocks subblocks.
reconciliation_outcome reconcile_block(const bitvec& alice, const bitvec& bob,
                                       const protocol_config& cfg);

// Verification stage on already-corrected subblock keys, exposed separately
// so corrupted corrected keys can be exercised directly. Compares one tag
// over the concatenated converged subblocks first; on mismatch compares per
// subblock with fresh hash keys and discards the mismatches. Fills the
// verified flags, xi, eps_ver, e_mu, leakage, and assembled key material.
// Pre: the three vectors are the same length; every subblock is 27200 bits;
// subblocks[i] carries the decode outcome for pair i.
reconciliation_outcome verify_block(const std::vector<bitvec>& alice_sub,
                                    const std::vector<bitvec>& bob_sub,
                                    std::vector<subblock_outcome> subblocks,
                                    const protocol_config& cfg);

// ---------------------------------------------------------------------------
// Finite-key estimation

struct source_intensities {
    double mu = 0.5;
    double nu1 = 0.1;
    double nu2 = 0.05;
};

// Gain estimates and confidence bounds per intensity class plus the derived
// single-photon bounds. Indexing follows linksim::intensity_class.
struct decoy_bounds_result {
    std::array<double, 3> q_hat{{0, 0, 0}}; // observed gains m/n
    std::array<double, 3> q_u{{0, 0, 0}};   // upper confidence bounds
    std::array<double, 3> q_l{{0, 0, 0}};   // lower confidence bounds
    double y0_l = 0;  // vacuum-yield lower bound
    double q1_l = 0;  // single-photon-gain lower bound
};

// z is the one-sided normal quantile used for every bound in the chain;
// quantile_from_eps(eps_decoy) produces it from a total failure budget.
decoy_bounds_result decoy_bounds(const decoy_stats& stats, const source_intensities& src,
                                 double z);

struct single_photon_counts {
    double m1_l = 0;    // lower bound on single-photon detections in the block
    double m0bar_l = 0; // lower bound on basis-matched vacuum detections
};

// verified_bits is the reconciled block length; n_mu the signal pulses sent.
single_photon_counts count_single_photon(const decoy_bounds_result& bounds,
                                         const source_intensities& src, double verified_bits,
                                         double n_mu, double z);

// Upper bound on the single-photon QBER given the block QBER e_mu.
double e1_upper(double verified_bits, double e_mu, double m0bar_l, double m1_l);

struct estimation_result {
    decoy_bounds_result bounds;
    single_photon_counts counts;
    double e1_u = 0;
};

// ---------------------------------------------------------------------------
// Secret length and failure budget

// Extractable secret length (may be <= 0, in which case the block aborts):
//   l_sec = floor(m1_l * (1 - h2(e1_u)) - leak - 5 * log2(1 / eps_pa))
double secret_length(double m1_l, double e1_u, uint64_t leak_bits, double eps_pa);

struct epsilon_budget {
    double eps_decoy = 0;
    double eps_ver = 0;
    double eps_pa = 0;
    double eps_total = 0;   // sum of the three
    double eps_r = 0;       // round_index * eps_total
};

epsilon_budget make_epsilon_budget(double eps_decoy, double eps_ver, double eps_pa,
                                   uint32_t round_index);

// ---------------------------------------------------------------------------
// Privacy amplification

// Compress key to out_bits via a Toeplitz extractor whose diagonal seed is
// drawn from the dedicated substream of seed. Alice and Bob run this with
// the same seed and obtain identical secret keys.
bitvec privacy_amplify(const bitvec& key, std::size_t out_bits, uint64_t seed);

// ---------------------------------------------------------------------------
// Block processing

// Reasons a block fails to produce key. Aborts are reported, not thrown:
// an abort is an expected protocol outcome, not a configuration error.
enum class abort_reason : uint8_t {
    none,
    no_single_photon_bound, // m1_l <= 0
    qber_bound_invalid,     // e1_u < 0
    qber_bound_above_half,  // e1_u > 0.5
    no_secret_length,       // l_sec <= 0
    nothing_verified,       // every subblock was discarded
};

const char* abort_reason_name(abort_reason reason);

struct block_report {
    uint32_t block_index = 0;
    decoy_stats stats;
    reconciliation_outcome reconciliation;
    estimation_result estimation;
    epsilon_budget epsilon;
    double l_sec = 0;           // real-valued secret length before flooring
    int64_t secret_bits = 0;    // floor(l_sec), clamped at 0 when aborted
    bool aborted = false;
    abort_reason reason = abort_reason::none;
    bitvec secret_key;          // empty when aborted
};

// Run reconciliation, estimation, and privacy amplification for one block.
// stats must cover exactly the pulses that produced the sifted bits.
block_report process_block(const bitvec& alice, const bitvec& bob, const decoy_stats& stats,
                           const source_intensities& src, const protocol_config& cfg,
                           uint32_t block_index);

// Accumulates sifted key and decoy statistics across sessions and emits a
// report whenever a full block (n_subblocks * 27200 bits) is available.
// When a block boundary splits the pending pool, the pending decoy counts
// are apportioned to the block in proportion to the sifted bits it takes,
// so counts over all emitted blocks plus the remainder always sum to the
// counts fed in.
class block_accumulator {
  public:
    block_accumulator(source_intensities src, protocol_config cfg);

    // Feed one session; returns reports for every block completed by it.
    std::vector<block_report> feed(const linksim::session_log& log);

    // Sifted bits currently waiting for a full block.
    std::size_t pending_bits() const { return alice_.size(); }
    const decoy_stats& pending_stats() const { return pending_stats_; }
    uint32_t blocks_emitted() const { return next_block_; }

  private:
    source_intensities src_;
    protocol_config cfg_;
    bitvec alice_;
    bitvec bob_;
    decoy_stats pending_stats_;
    uint32_t next_block_ = 0;
};

// ---------------------------------------------------------------------------
// Analytic key rate

// Closed-form session outcome for a lossy channel with dark counts and
// misalignment but no simulation noise: expected gains and QBER feed the
// same estimation chain as the Monte-Carlo path. Used for rate-vs-loss
// sweeps where statistical scatter would obscure the trend.
struct analytic_keyrate_config {
    source_intensities src;
    double p_mu = 0.5;              // class probabilities
    double p_nu1 = 0.25;
    double p_nu2 = 0.25;
    double detector_efficiency = 0.1;
    double dark_prob = 1e-6;        // per detector per gate
    double misalignment = 0.005;
    double n_pulses = 4e9;          // pulses sent in the modeled session
    protocol_config protocol;
};

struct analytic_keyrate_result {
    double channel_t = 0;       // linear channel transmittance
    std::array<double, 3> gain{{0, 0, 0}};
    double e_mu = 0;
    double verified_bits = 0;   // modeled reconciled block length
    uint64_t leak_bits = 0;
    estimation_result estimation;
    double l_sec = 0;
    int64_t secret_bits = 0;
    bool aborted = false;
    abort_reason reason = abort_reason::none;
    double secret_per_pulse = 0;    // secret_bits / n_pulses, 0 when aborted
};

analytic_keyrate_result analytic_keyrate(const analytic_keyrate_config& cfg, double loss_db);

} // namespace qkd::postproc
