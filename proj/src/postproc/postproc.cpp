#include "postproc/postproc.hpp"

#include <algorithm>
#include <cmath>

#include "postproc/ldpc.hpp"
#include "postproc/numerics.hpp"
#include "postproc/polyhash.hpp"
#include "postproc/toeplitz.hpp"
#include "support/rng.hpp"
#include "support/util.hpp"

namespace qkd::postproc {

namespace {

constexpr uint32_t hash_tag_bits = 50;

// Substream ids for the per-block derived seeds, so hash keys and the
// privacy-amplification seed are independent of each other and of any
// simulator stream sharing the same base seed.
constexpr uint64_t stream_hash_keys = 0x6861736b; // "hask"
constexpr uint64_t stream_pa_seed = 0x70617365;   // "pase"

void append_bits(bitvec& dst, const bitvec& src) {
    for (std::size_t i = 0; i < src.size(); ++i) dst.push_back(src.get(i));
}

double clamp01(double x) { return std::min(1.0, std::max(0.0, x)); }

} // namespace

void validate(const protocol_config& cfg) {
    if (!(cfg.eps_decoy > 0 && cfg.eps_decoy < 1))
        fail(errc::config_invalid, "eps_decoy must be in (0, 1)");
    if (!(cfg.eps_pa > 0 && cfg.eps_pa < 1))
        fail(errc::config_invalid, "eps_pa must be in (0, 1)");
    if (!(cfg.apriori_qber > 0 && cfg.apriori_qber < 0.5))
        fail(errc::config_invalid, "apriori_qber must be in (0, 0.5)");
    if (cfg.mode == reconcile_mode::oracle && !(cfg.oracle_rate > 0 && cfg.oracle_rate < 1))
        fail(errc::config_invalid, "oracle_rate must be in (0, 1)");
    if (cfg.n_subblocks < 1) fail(errc::config_invalid, "n_subblocks must be >= 1");
    if (cfg.round_index < 1) fail(errc::config_invalid, "round_index must be >= 1");
}

// ---------------------------------------------------------------------------
// Sifting

sifted_keys sift(const linksim::session_log& log) {
    sifted_keys out;
    for (int a = 0; a < 3; ++a) out.stats.n[a] = double(log.header.sent[a]);
    for (const auto& c : log.clicks) {
        out.stats.m[c.intensity] += 1.0;
        if (c.intensity != uint8_t(linksim::intensity_class::mu)) continue;
        if (c.alice_basis != c.bob_basis) continue;
        out.alice.push_back(c.alice_bit != 0);
        out.bob.push_back(c.bob_bit != 0);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Reconciliation and verification

reconciliation_outcome reconcile_block(const bitvec& alice, const bitvec& bob,
                                       const protocol_config& cfg) {
    validate(cfg);
    if (alice.size() != bob.size())
        fail(errc::config_invalid, "reconcile_block: keys differ in length");
    if (alice.size() != std::size_t(cfg.n_subblocks) * subblock_bits)
        fail(errc::config_invalid, "reconcile_block: key length must be n_subblocks * 27200");

    double rate;
    uint32_t synd_bits;
    if (cfg.mode == reconcile_mode::ldpc) {
        rate = select_rate(cfg.apriori_qber);
        synd_bits = syndrome_bits(rate);
    } else {
        rate = cfg.oracle_rate;
        synd_bits = uint32_t(std::llround((1.0 - rate) * subblock_bits));
    }
    if (cfg.punctured_bits > synd_bits)
        fail(errc::config_invalid, "punctured_bits exceeds the syndrome length");

    std::vector<bitvec> alice_sub(cfg.n_subblocks);
    std::vector<bitvec> bob_sub(cfg.n_subblocks);
    std::vector<subblock_outcome> subblocks(cfg.n_subblocks);
    for (uint32_t i = 0; i < cfg.n_subblocks; ++i) {
        alice_sub[i] = alice.slice(std::size_t(i) * subblock_bits, subblock_bits);
        bob_sub[i] = bob.slice(std::size_t(i) * subblock_bits, subblock_bits);

        subblock_outcome& sb = subblocks[i];
        sb.index = i;
        sb.rate = rate;
        sb.syndrome_bits = synd_bits;
        if (cfg.mode == reconcile_mode::ldpc) {
            const ldpc_code& code = code_for_rate(rate);
            bitvec target = compute_syndrome(code, alice_sub[i]);
            target.xor_with(compute_syndrome(code, bob_sub[i]));
            decode_result dec = decode_syndrome(code, target, cfg.apriori_qber);
            sb.converged = dec.converged;
            if (dec.converged) {
                bob_sub[i].xor_with(dec.error);
                sb.corrected_bits = uint32_t(dec.error.count_ones());
            }
        } else {
            // Oracle mode: correct by direct comparison, charge the leak of
            // the configured code rate.
            bitvec diff = alice_sub[i];
            diff.xor_with(bob_sub[i]);
            sb.converged = true;
            sb.corrected_bits = uint32_t(diff.count_ones());
            bob_sub[i] = alice_sub[i];
        }
        sb.qber = double(sb.corrected_bits) / subblock_bits;
    }
    return verify_block(alice_sub, bob_sub, std::move(subblocks), cfg);
}

reconciliation_outcome verify_block(const std::vector<bitvec>& alice_sub,
                                    const std::vector<bitvec>& bob_sub,
                                    std::vector<subblock_outcome> subblocks,
                                    const protocol_config& cfg) {
    validate(cfg);
    if (alice_sub.size() != bob_sub.size() || alice_sub.size() != subblocks.size())
        fail(errc::config_invalid, "verify_block: mismatched subblock counts");
    for (std::size_t i = 0; i < alice_sub.size(); ++i) {
        if (alice_sub[i].size() != subblock_bits || bob_sub[i].size() != subblock_bits)
            fail(errc::config_invalid, "verify_block: subblocks must be 27200 bits");
        if (cfg.punctured_bits > subblocks[i].syndrome_bits)
            fail(errc::config_invalid, "verify_block: punctured bits exceed syndrome");
    }

    reconciliation_outcome out;
    out.subblocks = std::move(subblocks);
    std::vector<uint32_t> converged_idx;
    for (uint32_t i = 0; i < out.subblocks.size(); ++i)
        if (out.subblocks[i].converged) converged_idx.push_back(i);

    // One tag over the whole corrected key first; only on a mismatch fall
    // back to per-subblock tags and discard the bad ones.
    rng hash_rng = rng(cfg.seed).substream(stream_hash_keys);
    std::vector<uint32_t> verified_idx;
    uint32_t n_cor = uint32_t(converged_idx.size());
    if (n_cor == 0) {
        out.xi = 1;
        out.eps_ver = 0;
    } else {
        bitvec alice_cor, bob_cor;
        for (uint32_t i : converged_idx) {
            append_bits(alice_cor, alice_sub[i]);
            append_bits(bob_cor, bob_sub[i]);
        }
        uint64_t k_full = hash_rng.below(polyhash_q);
        if (polyhash(k_full, alice_cor) == polyhash(k_full, bob_cor)) {
            verified_idx = converged_idx;
            out.xi = 1;
            out.eps_ver = eps_col(alice_cor.size());
        } else {
            for (uint32_t i : converged_idx) {
                uint64_t k = hash_rng.below(polyhash_q);
                if (polyhash(k, alice_sub[i]) == polyhash(k, bob_sub[i]))
                    verified_idx.push_back(i);
            }
            out.xi = n_cor + 1;
            double p_one = eps_col(subblock_bits);
            out.eps_ver = 1.0 - std::pow(1.0 - p_one, double(verified_idx.size()));
        }
    }

    for (uint32_t i : verified_idx) {
        out.subblocks[i].verified = true;
        append_bits(out.alice_key, alice_sub[i]);
        append_bits(out.bob_key, bob_sub[i]);
        out.e_mu += out.subblocks[i].qber;
        out.leak_bits += uint64_t(out.subblocks[i].syndrome_bits) - cfg.punctured_bits +
                         out.subblocks[i].disclosed_bits;
    }
    out.n_verified = uint32_t(verified_idx.size());
    out.n_discarded = uint32_t(out.subblocks.size()) - out.n_verified;
    out.verified_bits = uint64_t(out.n_verified) * subblock_bits;
    out.leak_bits += uint64_t(out.xi) * hash_tag_bits;
    if (out.n_verified > 0) out.e_mu /= out.n_verified;
    return out;
}

// ---------------------------------------------------------------------------
// Finite-key estimation

namespace {

void validate_intensities(const source_intensities& src) {
    if (!(src.nu2 > 0 && src.nu1 > src.nu2 && src.mu > src.nu1 + src.nu2))
        fail(errc::intensity_order,
             "decoy intensities must satisfy 0 < nu2 < nu1 and nu1 + nu2 < mu");
}

} // namespace

decoy_bounds_result decoy_bounds(const decoy_stats& stats, const source_intensities& src,
                                 double z) {
    validate_intensities(src);
    if (!(z >= 0) || !std::isfinite(z))
        fail(errc::config_invalid, "confidence quantile z must be finite and >= 0");
    decoy_bounds_result out;
    for (int a = 0; a < 3; ++a) {
        if (!(stats.n[a] > 0))
            fail(errc::config_invalid, "decoy_bounds: no pulses sent in one intensity class");
        if (stats.m[a] < 0 || stats.m[a] > stats.n[a])
            fail(errc::config_invalid, "decoy_bounds: detections outside [0, sent]");
        double q = stats.m[a] / stats.n[a];
        double sd = std::sqrt(q * (1.0 - q) / stats.n[a]);
        out.q_hat[a] = q;
        out.q_u[a] = clamp01(q + z * sd);
        out.q_l[a] = clamp01(q - z * sd);
    }

    const double mu = src.mu, nu1 = src.nu1, nu2 = src.nu2;
    const int i_mu = 0, i_n1 = 1, i_n2 = 2;
    double y0 = (nu1 * out.q_l[i_n2] * std::exp(nu2) - nu2 * out.q_u[i_n1] * std::exp(nu1)) /
                (nu1 - nu2);
    out.y0_l = std::max(y0, 0.0);

    double front = mu * mu * std::exp(-mu) / ((nu1 - nu2) * (mu - nu1 - nu2));
    double inner = out.q_l[i_n1] * std::exp(nu1) - out.q_u[i_n2] * std::exp(nu2) -
                   ((nu1 * nu1 - nu2 * nu2) / (mu * mu)) *
                       (out.q_u[i_mu] * std::exp(mu) - out.y0_l);
    out.q1_l = front * inner;
    return out;
}

single_photon_counts count_single_photon(const decoy_bounds_result& bounds,
                                         const source_intensities& src, double verified_bits,
                                         double n_mu, double z) {
    validate_intensities(src);
    if (!(verified_bits >= 0) || !(n_mu >= 0))
        fail(errc::config_invalid, "count_single_photon: negative population");
    single_photon_counts out;
    double r = bounds.q_u[0] > 0 ? clamp01(bounds.q1_l / bounds.q_u[0]) : 0.0;
    out.m1_l = verified_bits * r - z * std::sqrt(verified_bits * r * (1.0 - r));
    // Basis-matched vacuum detections among the signal pulses: rate
    // exp(-mu) * Y0 / 4 (vacuum fraction, halved twice for basis choice and
    // the random bit). The bound may go negative; that is kept, since a
    // pessimistic vacuum count only lowers the key length.
    double x = std::exp(-src.mu) * bounds.y0_l / 4.0;
    out.m0bar_l = n_mu * x - z * std::sqrt(n_mu * x * (1.0 - x));
    return out;
}

double e1_upper(double verified_bits, double e_mu, double m0bar_l, double m1_l) {
    if (!(m1_l > 0)) fail(errc::config_invalid, "e1_upper: m1_l must be positive");
    return (verified_bits * e_mu - m0bar_l) / m1_l;
}

// ---------------------------------------------------------------------------
// Secret length, failure budget, privacy amplification

double secret_length(double m1_l, double e1_u, uint64_t leak_bits, double eps_pa) {
    if (!(eps_pa > 0 && eps_pa < 1)) fail(errc::config_invalid, "eps_pa must be in (0, 1)");
    double raw = m1_l * (1.0 - binary_entropy(e1_u)) - double(leak_bits) -
                 5.0 * std::log2(1.0 / eps_pa);
    return std::floor(raw);
}

epsilon_budget make_epsilon_budget(double eps_decoy, double eps_ver, double eps_pa,
                                   uint32_t round_index) {
    if (round_index < 1) fail(errc::config_invalid, "round_index must be >= 1");
    epsilon_budget out;
    out.eps_decoy = eps_decoy;
    out.eps_ver = eps_ver;
    out.eps_pa = eps_pa;
    out.eps_total = eps_decoy + eps_ver + eps_pa;
    out.eps_r = double(round_index) * out.eps_total;
    return out;
}

bitvec privacy_amplify(const bitvec& key, std::size_t out_bits, uint64_t seed) {
    if (out_bits < 1 || out_bits > key.size())
        fail(errc::config_invalid, "privacy_amplify: output length must be in [1, key length]");
    bitvec toeplitz_seed(key.size() + out_bits - 1);
    rng g(seed);
    for (auto& w : toeplitz_seed.words()) w = g.next();
    toeplitz_seed.mask_tail();
    return toeplitz_multiply(toeplitz_seed, key, out_bits);
}

// ---------------------------------------------------------------------------
// Block processing

const char* abort_reason_name(abort_reason reason) {
    switch (reason) {
        case abort_reason::none: return "none";
        case abort_reason::no_single_photon_bound: return "no_single_photon_bound";
        case abort_reason::qber_bound_invalid: return "qber_bound_invalid";
        case abort_reason::qber_bound_above_half: return "qber_bound_above_half";
        case abort_reason::no_secret_length: return "no_secret_length";
        case abort_reason::nothing_verified: return "nothing_verified";
    }
    return "unknown";
}

block_report process_block(const bitvec& alice, const bitvec& bob, const decoy_stats& stats,
                           const source_intensities& src, const protocol_config& cfg,
                           uint32_t block_index) {
    validate(cfg);
    block_report report;
    report.block_index = block_index;
    report.stats = stats;

    // Per-block seed: hash keys and the PA seed must be fresh every block.
    protocol_config block_cfg = cfg;
    block_cfg.seed = rng(cfg.seed).substream(block_index).base_seed();

    report.reconciliation = reconcile_block(alice, bob, block_cfg);
    report.epsilon = make_epsilon_budget(cfg.eps_decoy, report.reconciliation.eps_ver,
                                         cfg.eps_pa, cfg.round_index);

    auto abort_with = [&](abort_reason why) {
        report.aborted = true;
        report.reason = why;
        report.secret_bits = 0;
        return report;
    };

    double z = quantile_from_eps(cfg.eps_decoy);
    report.estimation.bounds = decoy_bounds(stats, src, z);
    if (report.reconciliation.n_verified == 0) return abort_with(abort_reason::nothing_verified);

    report.estimation.counts =
        count_single_photon(report.estimation.bounds, src,
                            double(report.reconciliation.verified_bits), stats.n[0], z);
    if (!(report.estimation.counts.m1_l > 0))
        return abort_with(abort_reason::no_single_photon_bound);

    report.estimation.e1_u =
        e1_upper(double(report.reconciliation.verified_bits), report.reconciliation.e_mu,
                 report.estimation.counts.m0bar_l, report.estimation.counts.m1_l);
    if (report.estimation.e1_u < 0) return abort_with(abort_reason::qber_bound_invalid);
    if (report.estimation.e1_u > 0.5) return abort_with(abort_reason::qber_bound_above_half);

    report.l_sec = secret_length(report.estimation.counts.m1_l, report.estimation.e1_u,
                                 report.reconciliation.leak_bits, cfg.eps_pa);
    if (!(report.l_sec > 0)) return abort_with(abort_reason::no_secret_length);

    report.secret_bits = int64_t(report.l_sec);
    uint64_t pa_seed = rng(block_cfg.seed).substream(stream_pa_seed).base_seed();
    report.secret_key = privacy_amplify(report.reconciliation.alice_key,
                                        std::size_t(report.secret_bits), pa_seed);
    return report;
}

// ---------------------------------------------------------------------------
// Cross-session block assembly

block_accumulator::block_accumulator(source_intensities src, protocol_config cfg)
    : src_(src), cfg_(cfg) {
    validate(cfg_);
    validate_intensities(src_);
}

std::vector<block_report> block_accumulator::feed(const linksim::session_log& log) {
    sifted_keys sifted = sift(log);
    append_bits(alice_, sifted.alice);
    append_bits(bob_, sifted.bob);
    for (int a = 0; a < 3; ++a) {
        pending_stats_.n[a] += sifted.stats.n[a];
        pending_stats_.m[a] += sifted.stats.m[a];
    }

    std::vector<block_report> reports;
    const std::size_t block_bits = std::size_t(cfg_.n_subblocks) * subblock_bits;
    while (alice_.size() >= block_bits) {
        double frac = double(block_bits) / double(alice_.size());
        decoy_stats block_stats;
        for (int a = 0; a < 3; ++a) {
            block_stats.n[a] = pending_stats_.n[a] * frac;
            block_stats.m[a] = pending_stats_.m[a] * frac;
            pending_stats_.n[a] -= block_stats.n[a];
            pending_stats_.m[a] -= block_stats.m[a];
        }
        bitvec a_blk = alice_.slice(0, block_bits);
        bitvec b_blk = bob_.slice(0, block_bits);
        alice_ = alice_.slice(block_bits, alice_.size() - block_bits);
        bob_ = bob_.slice(block_bits, bob_.size() - block_bits);
        reports.push_back(process_block(a_blk, b_blk, block_stats, src_, cfg_, next_block_));
        ++next_block_;
    }
    return reports;
}

// ---------------------------------------------------------------------------
// Analytic key rate

analytic_keyrate_result analytic_keyrate(const analytic_keyrate_config& cfg, double loss_db) {
    validate(cfg.protocol);
    validate_intensities(cfg.src);
    if (std::abs(cfg.p_mu + cfg.p_nu1 + cfg.p_nu2 - 1.0) > 1e-9 || cfg.p_mu <= 0 ||
        cfg.p_nu1 <= 0 || cfg.p_nu2 <= 0)
        fail(errc::config_invalid, "class probabilities must be positive and sum to 1");
    if (!(cfg.detector_efficiency > 0 && cfg.detector_efficiency <= 1))
        fail(errc::config_invalid, "detector_efficiency must be in (0, 1]");
    if (!(cfg.dark_prob >= 0 && cfg.dark_prob < 1))
        fail(errc::config_invalid, "dark_prob must be in [0, 1)");
    if (!(cfg.misalignment >= 0 && cfg.misalignment <= 0.5))
        fail(errc::config_invalid, "misalignment must be in [0, 0.5]");
    if (!(cfg.n_pulses > 0)) fail(errc::config_invalid, "n_pulses must be positive");
    if (!(loss_db >= 0)) fail(errc::config_invalid, "loss_db must be >= 0");

    analytic_keyrate_result out;
    out.channel_t = std::pow(10.0, -loss_db / 10.0);
    const double te = out.channel_t * cfg.detector_efficiency;
    const double d = cfg.dark_prob;
    const double no_dark2 = (1.0 - d) * (1.0 - d);
    const double alphas[3] = {cfg.src.mu, cfg.src.nu1, cfg.src.nu2};
    for (int a = 0; a < 3; ++a) out.gain[a] = 1.0 - no_dark2 * std::exp(-alphas[a] * te);

    // Matched-basis error model: a photon click lands on the wrong detector
    // with the misalignment probability; a simultaneous dark on the other
    // detector turns the gate into a coin flip; dark-only clicks are coin
    // flips outright. The three terms partition the matched-basis gain.
    const double photon_click = 1.0 - std::exp(-cfg.src.mu * te);
    const double eq = cfg.misalignment * photon_click * (1.0 - d) +
                      0.5 * photon_click * d +
                      0.5 * (1.0 - photon_click) * (1.0 - no_dark2);
    out.e_mu = out.gain[0] > 0 ? eq / out.gain[0] : 0.0;

    decoy_stats stats;
    const double probs[3] = {cfg.p_mu, cfg.p_nu1, cfg.p_nu2};
    for (int a = 0; a < 3; ++a) {
        stats.n[a] = cfg.n_pulses * probs[a];
        stats.m[a] = stats.n[a] * out.gain[a];
    }

    auto abort_with = [&](abort_reason why) {
        out.aborted = true;
        out.reason = why;
        out.secret_bits = 0;
        out.secret_per_pulse = 0;
        return out;
    };

    // Expected sifted signal bits, assembled into whole subblocks; a
    // first-pass verification success is assumed (the model has no decoder
    // failures), so xi = 1.
    double sifted = 0.5 * stats.m[0];
    uint64_t n_sub = uint64_t(sifted / subblock_bits);
    double z = quantile_from_eps(cfg.protocol.eps_decoy);
    out.estimation.bounds = decoy_bounds(stats, cfg.src, z);
    if (n_sub == 0) return abort_with(abort_reason::nothing_verified);

    out.verified_bits = double(n_sub) * subblock_bits;
    double rate = select_rate(std::min(out.e_mu, 0.499));
    uint64_t synd = syndrome_bits(rate);
    out.leak_bits = n_sub * (synd - cfg.protocol.punctured_bits) + hash_tag_bits;

    out.estimation.counts =
        count_single_photon(out.estimation.bounds, cfg.src, out.verified_bits, stats.n[0], z);
    if (!(out.estimation.counts.m1_l > 0)) return abort_with(abort_reason::no_single_photon_bound);

    out.estimation.e1_u = e1_upper(out.verified_bits, out.e_mu, out.estimation.counts.m0bar_l,
                                   out.estimation.counts.m1_l);
    if (out.estimation.e1_u < 0) return abort_with(abort_reason::qber_bound_invalid);
    if (out.estimation.e1_u > 0.5) return abort_with(abort_reason::qber_bound_above_half);

    out.l_sec = secret_length(out.estimation.counts.m1_l, out.estimation.e1_u, out.leak_bits,
                              cfg.protocol.eps_pa);
    if (!(out.l_sec > 0)) return abort_with(abort_reason::no_secret_length);
    out.secret_bits = int64_t(out.l_sec);
    out.secret_per_pulse = double(out.secret_bits) / cfg.n_pulses;
    return out;
}

} // namespace qkd::postproc
