#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "linksim/linksim.hpp"
#include "postproc/ldpc.hpp"
#include "postproc/numerics.hpp"
#include "postproc/polyhash.hpp"
#include "postproc/postproc.hpp"
#include "postproc/toeplitz.hpp"
#include "support/bitvec.hpp"
#include "support/rng.hpp"
#include "support/util.hpp"

using namespace qkd;
using namespace qkd::postproc;

namespace {

bitvec bits_from(const std::string& s) {
    bitvec out;
    for (char c : s) out.push_back(c == '1');
    return out;
}

bitvec random_bits(std::size_t n, rng& g) {
    bitvec out(n);
    for (auto& w : out.words()) w = g.next();
    out.mask_tail();
    return out;
}

bitvec flipped_copy(const bitvec& in, double p, rng& g, std::size_t* n_flips = nullptr) {
    bitvec out = in;
    std::size_t flips = 0;
    for (std::size_t i = 0; i < out.size(); ++i)
        if (g.bernoulli(p)) {
            out.flip(i);
            ++flips;
        }
    if (n_flips) *n_flips = flips;
    return out;
}

std::optional<errc> code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const error& e) {
        return e.code();
    }
    return std::nullopt;
}

// Gain of a Poisson pulse of intensity alpha through transmittance t_eta
// onto two detectors with equal dark probability.
double model_gain(double alpha, double t_eta, double dark) {
    return 1.0 - (1.0 - dark) * (1.0 - dark) * std::exp(-alpha * t_eta);
}

decoy_stats model_stats(double n_pulses, const source_intensities& src, double t_eta,
                        double dark) {
    decoy_stats s;
    const double alphas[3] = {src.mu, src.nu1, src.nu2};
    const double probs[3] = {0.5, 0.25, 0.25};
    for (int a = 0; a < 3; ++a) {
        s.n[a] = n_pulses * probs[a];
        s.m[a] = s.n[a] * model_gain(alphas[a], t_eta, dark);
    }
    return s;
}

} // namespace

// ---------------------------------------------------------------------------
// Numeric kernels

TEST_CASE("binary entropy reference points") {
    CHECK(binary_entropy(0.5) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(binary_entropy(0.0) == 0.0);
    CHECK(binary_entropy(1.0) == 0.0);
    CHECK(binary_entropy(0.11) == doctest::Approx(0.499915958164528).epsilon(1e-12));
    CHECK(binary_entropy(0.03) == doctest::Approx(0.1943918578315762).epsilon(1e-12));
    CHECK(binary_entropy(0.3) == doctest::Approx(binary_entropy(0.7)).epsilon(1e-14));
    CHECK_THROWS_AS(binary_entropy(-0.01), error);
    CHECK_THROWS_AS(binary_entropy(1.01), error);
}

TEST_CASE("normal quantile reference points and erfc round trip") {
    CHECK(std::abs(normal_quantile(0.5)) < 1e-14);
    CHECK(normal_quantile(0.99) == doctest::Approx(2.3263478740408416).epsilon(1e-12));
    CHECK(normal_quantile(0.01) == doctest::Approx(-2.3263478740408416).epsilon(1e-12));
    // Round trip through the complementary CDF: upper tail of z is
    // 0.5*erfc(z/sqrt(2)), so the upper quantile must invert it.
    for (double z : {0.5, 1.0, 2.0, 5.0, 8.0, 12.0}) {
        double tail = 0.5 * std::erfc(z / std::sqrt(2.0));
        CHECK(normal_quantile_upper(tail) == doctest::Approx(z).epsilon(1e-9));
    }
    CHECK_THROWS_AS(normal_quantile(0.0), error);
    CHECK_THROWS_AS(normal_quantile(1.0), error);
}

TEST_CASE("decoy quantile shares the failure budget over seven bounds") {
    CHECK(quantile_from_eps(1e-12) == doctest::Approx(7.300963485753133).epsilon(1e-9));
    CHECK(quantile_from_eps(0.07) == doctest::Approx(2.3263478740408416).epsilon(1e-12));
    CHECK(std::abs(quantile_from_eps(3.5)) < 1e-12); // eps/7 = 0.5 -> z = 0
    CHECK_THROWS_AS(quantile_from_eps(0.0), error);
    CHECK_THROWS_AS(quantile_from_eps(7.0), error);
}

TEST_CASE("hash collision bound") {
    // ceil(1360000/49) - 1 = 27755 blocks over the 50-bit prime.
    double q = double(polyhash_q);
    CHECK(eps_col(1360000) == doctest::Approx(27755.0 / q).epsilon(1e-15));
    CHECK(eps_col(1360000) > 2.4e-11);
    CHECK(eps_col(1360000) < 2.5e-11);
    CHECK(eps_col(27200) == doctest::Approx(555.0 / q).epsilon(1e-15));
    CHECK(eps_col(50) == doctest::Approx(1.0 / q).epsilon(1e-15));
    CHECK_THROWS_AS(eps_col(49), error);
}

// ---------------------------------------------------------------------------
// Polynomial hash

TEST_CASE("polyhash frozen vectors") {
    // Tags cross-checked against an arbitrary-precision reference
    // implementation of the padded 49-bit-block Horner evaluation.
    CHECK(polyhash(99, bits_from("")) == 844424930132616ull);
    CHECK(polyhash(7, bits_from("1")) == 703687441776695ull);
    CHECK(polyhash(987654321, bits_from("01101")) == 378237624954940ull);
    CHECK(polyhash(562949953421323ull,
                   bits_from("1010110010100000110110100001010010100010011000100")) ==
          572083969168050ull);
    CHECK(polyhash(1125899906842596ull,
                   bits_from("01101100010100100100111010001010000100000100110110")) ==
          97464033222861ull);
    std::string long_msg =
        "0001101000111001000011001101000101111111111011001000000110110111"
        "0110100001011000001110001001101000010010111010110111011110100100"
        "0001001110100101010000100000010010111101001011011010111000110010"
        "11010110";
    REQUIRE(long_msg.size() == 200);
    CHECK(polyhash(555555555555555ull, bits_from(long_msg)) == 1091699069062154ull);
}

TEST_CASE("polyhash single padded block matches direct modular arithmetic") {
    // A 30-bit message pads to one 49-bit block B, followed by the length
    // block; Horner gives (B*k + 30) mod q.
    std::string msg = "110101001110010110100011010011";
    uint64_t k = 123456789012345ull;
    unsigned __int128 block = 0;
    for (std::size_t j = 0; j < 49; ++j) {
        int bit = j < msg.size() ? msg[j] - '0' : (j == msg.size() ? 1 : 0);
        block = (block << 1) | unsigned(bit);
    }
    uint64_t expect = uint64_t((block % polyhash_q * k + 30) % polyhash_q);
    CHECK(polyhash(k, bits_from(msg)) == expect);
}

TEST_CASE("polyhash key properties") {
    rng g(4242);
    bitvec msg = random_bits(500, g);
    CHECK(polyhash(1000003, msg) == polyhash(1000003, msg));
    // Distinct keys give distinct tags except with collision probability
    // around 1e-13 per pair.
    CHECK(polyhash(1000003, msg) != polyhash(2000003, msg));
    bitvec other = msg;
    other.flip(250);
    CHECK(polyhash(1000003, msg) != polyhash(1000003, other));
    CHECK_THROWS_AS(polyhash(polyhash_q, msg), error); // key must be < q
}

// ---------------------------------------------------------------------------
// Toeplitz extractor

TEST_CASE("toeplitz matches a dense matrix oracle") {
    rng g(99);
    for (int trial = 0; trial < 150; ++trial) {
        std::size_t in_bits = 1 + g.below(120);
        std::size_t out_bits = 1 + g.below(80);
        bitvec key = random_bits(in_bits, g);
        bitvec seed = random_bits(in_bits + out_bits - 1, g);
        bitvec got = toeplitz_multiply(seed, key, out_bits);
        REQUIRE(got.size() == out_bits);
        for (std::size_t i = 0; i < out_bits; ++i) {
            int parity = 0;
            for (std::size_t j = 0; j < in_bits; ++j)
                parity ^= int(seed.get(i + j) && key.get(j));
            CHECK(int(got.get(i)) == parity);
        }
    }
}

TEST_CASE("toeplitz is linear and annihilates the zero key") {
    rng g(7);
    bitvec a = random_bits(600, g);
    bitvec b = random_bits(600, g);
    bitvec seed = random_bits(600 + 200 - 1, g);
    bitvec ta = toeplitz_multiply(seed, a, 200);
    bitvec tb = toeplitz_multiply(seed, b, 200);
    bitvec ab = a;
    ab.xor_with(b);
    bitvec tab = toeplitz_multiply(seed, ab, 200);
    ta.xor_with(tb);
    CHECK(tab == ta);

    bitvec zero(600);
    CHECK(toeplitz_multiply(seed, zero, 200).count_ones() == 0);
    CHECK_THROWS_AS(toeplitz_multiply(seed, a, 201), error); // seed too short
}

// ---------------------------------------------------------------------------
// LDPC codes

TEST_CASE("ldpc matrices are regular, duplicate-free, and consistent") {
    const double rates[3] = {0.5, 0.625, 0.75};
    const uint32_t weights[3] = {6, 8, 12};
    for (int ri = 0; ri < 3; ++ri) {
        const ldpc_code& code = code_for_rate(rates[ri]);
        CHECK(code.n == subblock_bits);
        CHECK(code.m == uint32_t(std::llround((1.0 - rates[ri]) * subblock_bits)));
        CHECK(code.row_weight == weights[ri]);
        CHECK(code.chk_ptr.size() == code.m + 1);
        CHECK(code.chk_var.size() == std::size_t(3) * code.n);
        // every row duplicate-free and regular
        for (uint32_t r = 0; r < code.m; ++r) {
            REQUIRE(code.chk_ptr[r + 1] - code.chk_ptr[r] == code.row_weight);
            std::set<uint32_t> seen;
            for (uint32_t e = code.chk_ptr[r]; e < code.chk_ptr[r + 1]; ++e)
                CHECK(seen.insert(code.chk_var[e]).second);
        }
        // every variable has degree 3 and its edge list points back at it
        std::vector<char> edge_seen(code.chk_var.size(), 0);
        for (uint32_t v = 0; v < code.n; ++v) {
            REQUIRE(code.var_ptr[v + 1] - code.var_ptr[v] == 3);
            for (uint32_t j = code.var_ptr[v]; j < code.var_ptr[v + 1]; ++j) {
                uint32_t e = code.var_edge[j];
                CHECK(code.chk_var[e] == v);
                CHECK(!edge_seen[e]);
                edge_seen[e] = 1;
            }
        }
    }
    CHECK(syndrome_bits(0.5) == 13600);
    CHECK(syndrome_bits(0.625) == 10200);
    CHECK(syndrome_bits(0.75) == 6800);
    CHECK_THROWS_AS(code_for_rate(0.9), error);
}

TEST_CASE("rate selection against the redundancy margin") {
    CHECK(select_rate(0.03) == doctest::Approx(0.625));
    CHECK(select_rate(0.01) == doctest::Approx(0.75));
    CHECK(select_rate(0.05) == doctest::Approx(0.5));
    CHECK(select_rate(0.2) == doctest::Approx(0.5)); // nothing qualifies: floor
    CHECK_THROWS_AS(select_rate(-0.01), error);
    CHECK_THROWS_AS(select_rate(0.51), error);
}

TEST_CASE("zero syndrome converges immediately") {
    const ldpc_code& code = code_for_rate(0.5);
    bitvec zero_syndrome(code.m);
    decode_result dec = decode_syndrome(code, zero_syndrome, 0.03);
    CHECK(dec.converged);
    CHECK(dec.iterations == 0);
    CHECK(dec.error.count_ones() == 0);
}

TEST_CASE("syndrome decoding corrects a binary symmetric channel at 3%") {
    const double rate = select_rate(0.03);
    const ldpc_code& code = code_for_rate(rate);
    rng g(20260816);
    int exact = 0;
    const int trials = 40;
    for (int t = 0; t < trials; ++t) {
        bitvec truth(code.n);
        for (std::size_t i = 0; i < code.n; ++i)
            if (g.bernoulli(0.03)) truth.set(i, true);
        bitvec target = compute_syndrome(code, truth);
        decode_result dec = decode_syndrome(code, target, 0.03);
        if (dec.converged) {
            CHECK(compute_syndrome(code, dec.error) == target);
            if (dec.error == truth) ++exact;
        }
    }
    // Well inside the code's threshold; expect essentially every trial to
    // recover the exact pattern.
    CHECK(exact >= trials - 2);
}

TEST_CASE("syndrome computation and decoding are deterministic") {
    const ldpc_code& code = code_for_rate(0.625);
    rng g(5);
    bitvec v = random_bits(code.n, g);
    CHECK(compute_syndrome(code, v) == compute_syndrome(code, v));
    bitvec e(code.n);
    for (int i = 0; i < 300; ++i) e.set(g.below(code.n), true);
    bitvec target = compute_syndrome(code, e);
    decode_result a = decode_syndrome(code, target, 0.03);
    decode_result b = decode_syndrome(code, target, 0.03);
    CHECK(a.converged == b.converged);
    CHECK(a.iterations == b.iterations);
    CHECK(a.error == b.error);
}

// ---------------------------------------------------------------------------
// Reconciliation and verification

TEST_CASE("oracle reconciliation of identical keys charges the full syndrome") {
    protocol_config cfg;
    cfg.mode = reconcile_mode::oracle;
    cfg.oracle_rate = 0.5;
    cfg.n_subblocks = 1;
    rng g(31);
    bitvec key = random_bits(subblock_bits, g);
    reconciliation_outcome out = reconcile_block(key, key, cfg);
    CHECK(out.n_verified == 1);
    CHECK(out.n_discarded == 0);
    CHECK(out.xi == 1);
    CHECK(out.e_mu == 0.0);
    // (1 - 0.5) * 27200 syndrome bits plus one 50-bit verification tag.
    CHECK(out.leak_bits == 13600 + 50);
    CHECK(out.alice_key == key);
    CHECK(out.bob_key == key);
    CHECK(out.eps_ver == doctest::Approx(eps_col(subblock_bits)).epsilon(1e-15));

    cfg.n_subblocks = 2;
    bitvec key2 = random_bits(2 * subblock_bits, g);
    reconciliation_outcome out2 = reconcile_block(key2, key2, cfg);
    CHECK(out2.leak_bits == 2 * 13600 + 50);
    CHECK(out2.verified_bits == 2 * subblock_bits);
}

TEST_CASE("oracle reconciliation reports the exact error weight") {
    protocol_config cfg;
    cfg.mode = reconcile_mode::oracle;
    cfg.oracle_rate = 0.75;
    cfg.n_subblocks = 2;
    rng g(77);
    bitvec alice = random_bits(2 * subblock_bits, g);
    std::size_t flips = 0;
    bitvec bob = flipped_copy(alice, 0.02, g, &flips);
    reconciliation_outcome out = reconcile_block(alice, bob, cfg);
    CHECK(out.n_verified == 2);
    std::size_t reported = 0;
    for (const auto& sb : out.subblocks) {
        CHECK(sb.rate == doctest::Approx(0.75));
        CHECK(sb.syndrome_bits == 6800);
        reported += sb.corrected_bits;
    }
    CHECK(reported == flips);
    CHECK(out.e_mu == doctest::Approx(double(flips) / (2.0 * subblock_bits)).epsilon(1e-12));
    CHECK(out.bob_key == out.alice_key);
    CHECK(out.leak_bits == 2 * 6800 + 50);
}

TEST_CASE("ldpc reconciliation corrects a realistic subblock") {
    protocol_config cfg;
    cfg.mode = reconcile_mode::ldpc;
    cfg.apriori_qber = 0.03;
    cfg.n_subblocks = 1;
    rng g(13);
    bitvec alice = random_bits(subblock_bits, g);
    std::size_t flips = 0;
    bitvec bob = flipped_copy(alice, 0.03, g, &flips);
    reconciliation_outcome out = reconcile_block(alice, bob, cfg);
    REQUIRE(out.n_verified == 1);
    CHECK(out.subblocks[0].converged);
    CHECK(out.subblocks[0].corrected_bits == flips);
    CHECK(out.subblocks[0].rate == doctest::Approx(0.625));
    CHECK(out.bob_key == out.alice_key);
    CHECK(out.alice_key == alice);
    CHECK(out.leak_bits == 10200 + 50);

    // zero-error subblock: decode converges without iterating
    reconciliation_outcome clean = reconcile_block(alice, alice, cfg);
    CHECK(clean.n_verified == 1);
    CHECK(clean.subblocks[0].corrected_bits == 0);
}

TEST_CASE("puncturing reduces the charged leak") {
    protocol_config cfg;
    cfg.mode = reconcile_mode::oracle;
    cfg.oracle_rate = 0.5;
    cfg.n_subblocks = 1;
    cfg.punctured_bits = 600;
    rng g(57);
    bitvec key = random_bits(subblock_bits, g);
    reconciliation_outcome out = reconcile_block(key, key, cfg);
    CHECK(out.leak_bits == 13600 - 600 + 50);
    cfg.punctured_bits = 20000; // more than the syndrome itself
    CHECK(code_of([&] { reconcile_block(key, key, cfg); }) == errc::config_invalid);
}

TEST_CASE("verification fault injection discards exactly the corrupted subblock") {
    protocol_config cfg;
    cfg.mode = reconcile_mode::oracle;
    cfg.n_subblocks = 5;
    rng g(4040);
    const uint32_t n = 5;
    std::vector<bitvec> alice_sub, bob_sub;
    std::vector<subblock_outcome> subblocks(n);
    for (uint32_t i = 0; i < n; ++i) {
        alice_sub.push_back(random_bits(subblock_bits, g));
        bob_sub.push_back(alice_sub.back());
        subblocks[i].index = i;
        subblocks[i].converged = true;
        subblocks[i].rate = 0.5;
        subblocks[i].syndrome_bits = 13600;
    }
    bob_sub[2].flip(12345); // corruption that survived reconciliation

    reconciliation_outcome out =
        verify_block(alice_sub, bob_sub, subblocks, cfg);
    CHECK(out.n_verified == 4);
    CHECK(out.n_discarded == 1);
    CHECK(!out.subblocks[2].verified);
    for (uint32_t i : {0u, 1u, 3u, 4u}) CHECK(out.subblocks[i].verified);
    CHECK(out.xi == n + 1); // full-key tag plus one tag per corrected subblock
    double p_one = eps_col(subblock_bits);
    CHECK(out.eps_ver == doctest::Approx(1.0 - std::pow(1.0 - p_one, 4.0)).epsilon(1e-12));
    CHECK(out.leak_bits == 4 * 13600 + (n + 1) * 50);
    CHECK(out.verified_bits == 4 * subblock_bits);

    // all subblocks corrupted: nothing verified
    for (auto& b : bob_sub) b.flip(1);
    reconciliation_outcome none = verify_block(alice_sub, bob_sub, subblocks, cfg);
    CHECK(none.n_verified == 0);
    CHECK(none.verified_bits == 0);
    CHECK(none.alice_key.size() == 0);
}

TEST_CASE("error-free identical keys verify on the first tag across seeds") {
    protocol_config cfg;
    cfg.mode = reconcile_mode::oracle;
    cfg.n_subblocks = 1;
    for (uint64_t seed = 1; seed <= 100; ++seed) {
        cfg.seed = seed;
        rng g(seed * 31 + 7);
        bitvec key = random_bits(subblock_bits, g);
        reconciliation_outcome out = reconcile_block(key, key, cfg);
        REQUIRE(out.n_verified == 1);
        REQUIRE(out.xi == 1);
        REQUIRE(out.alice_key == out.bob_key);
    }
}

// ---------------------------------------------------------------------------
// Finite-key estimation

TEST_CASE("decoy bounds against a straight-line transcription") {
    source_intensities src; // 0.5 / 0.1 / 0.05
    decoy_stats stats = model_stats(1e8, src, 0.1, 1e-5);
    const double z = 2.3263478740408416;
    decoy_bounds_result b = decoy_bounds(stats, src, z);

    for (int a = 0; a < 3; ++a) {
        double q = stats.m[a] / stats.n[a];
        double sd = std::sqrt(q * (1.0 - q) / stats.n[a]);
        CHECK(b.q_hat[a] == doctest::Approx(q).epsilon(1e-12));
        CHECK(b.q_u[a] == doctest::Approx(std::min(1.0, q + z * sd)).epsilon(1e-12));
        CHECK(b.q_l[a] == doctest::Approx(std::max(0.0, q - z * sd)).epsilon(1e-12));
        CHECK(b.q_l[a] <= b.q_hat[a]);
        CHECK(b.q_hat[a] <= b.q_u[a]);
    }
    const double mu = src.mu, n1 = src.nu1, n2 = src.nu2;
    double y0 = std::max(
        0.0, (n1 * b.q_l[2] * std::exp(n2) - n2 * b.q_u[1] * std::exp(n1)) / (n1 - n2));
    CHECK(b.y0_l == doctest::Approx(y0).epsilon(1e-12));
    double q1 = mu * mu * std::exp(-mu) / ((n1 - n2) * (mu - n1 - n2)) *
                (b.q_l[1] * std::exp(n1) - b.q_u[2] * std::exp(n2) -
                 (n1 * n1 - n2 * n2) / (mu * mu) * (b.q_u[0] * std::exp(mu) - y0));
    CHECK(b.q1_l == doctest::Approx(q1).epsilon(1e-12));
    // the bound must undercut the true single-photon gain
    double y1_true = 1.0 - (1.0 - 0.1) * (1.0 - 1e-5) * (1.0 - 1e-5);
    double q1_true = mu * std::exp(-mu) * y1_true;
    CHECK(b.q1_l > 0.0);
    CHECK(b.q1_l < q1_true);

    single_photon_counts c = count_single_photon(b, src, 544000.0, stats.n[0], z);
    double r = std::min(1.0, std::max(0.0, b.q1_l / b.q_u[0]));
    CHECK(c.m1_l ==
          doctest::Approx(544000.0 * r - z * std::sqrt(544000.0 * r * (1 - r))).epsilon(1e-12));
    double x = std::exp(-mu) * b.y0_l / 4.0;
    CHECK(c.m0bar_l ==
          doctest::Approx(stats.n[0] * x - z * std::sqrt(stats.n[0] * x * (1 - x)))
              .epsilon(1e-12));

    double e1 = e1_upper(544000.0, 0.01, c.m0bar_l, c.m1_l);
    CHECK(e1 == doctest::Approx((544000.0 * 0.01 - c.m0bar_l) / c.m1_l).epsilon(1e-12));
}

TEST_CASE("decoy bounds validate their inputs") {
    source_intensities src;
    decoy_stats stats = model_stats(1e6, src, 0.1, 1e-5);
    CHECK(!code_of([&] { decoy_bounds(stats, src, 2.0); }).has_value());

    source_intensities bad = src;
    bad.nu2 = 0.2; // nu2 > nu1
    CHECK(code_of([&] { decoy_bounds(stats, bad, 2.0); }) == errc::intensity_order);
    bad = src;
    bad.nu1 = 0.3;
    bad.nu2 = 0.25; // nu1 + nu2 > mu
    CHECK(code_of([&] { decoy_bounds(stats, bad, 2.0); }) == errc::intensity_order);

    decoy_stats zero = stats;
    zero.n[1] = 0;
    CHECK(code_of([&] { decoy_bounds(zero, src, 2.0); }) == errc::config_invalid);
    decoy_stats over = stats;
    over.m[2] = over.n[2] + 1;
    CHECK(code_of([&] { decoy_bounds(over, src, 2.0); }) == errc::config_invalid);
}

TEST_CASE("negative vacuum-count bound is kept, not clamped") {
    decoy_bounds_result b;
    b.y0_l = 0.5;
    b.q1_l = 0.05;
    b.q_u = {{0.1, 0.05, 0.03}};
    source_intensities src;
    // tiny population: the Wald term dwarfs the expectation
    single_photon_counts c = count_single_photon(b, src, 100.0, 100.0, 7.0);
    CHECK(c.m0bar_l < 0.0);
}

TEST_CASE("secret length formula and monotonicity") {
    CHECK(secret_length(10000.0, 0.05, 5000, 1e-12) == 1936.0);
    // shrinks with rising single-photon error bound
    double prev = 1e300;
    for (double e1 : {0.01, 0.03, 0.08, 0.2, 0.4}) {
        double cur = secret_length(20000.0, e1, 5000, 1e-12);
        CHECK(cur < prev);
        prev = cur;
    }
    // shrinks with rising leakage
    CHECK(secret_length(20000.0, 0.05, 9000, 1e-12) <
          secret_length(20000.0, 0.05, 6000, 1e-12));
    // integer-valued
    double v = secret_length(12345.6, 0.037, 777, 1e-10);
    CHECK(v == std::floor(v));
}

TEST_CASE("epsilon budget composition") {
    double ev = eps_col(1360000);
    epsilon_budget b = make_epsilon_budget(1e-12, ev, 1e-12, 1);
    CHECK(b.eps_total == doctest::Approx(1e-12 + ev + 1e-12).epsilon(1e-15));
    CHECK(b.eps_total < 3e-11);
    CHECK(b.eps_r == doctest::Approx(b.eps_total).epsilon(1e-15));
    epsilon_budget b3 = make_epsilon_budget(1e-12, ev, 1e-12, 3);
    CHECK(b3.eps_r == doctest::Approx(3.0 * b.eps_total).epsilon(1e-15));
}

// ---------------------------------------------------------------------------
// Privacy amplification

TEST_CASE("privacy amplification is deterministic in the seed") {
    rng g(808);
    bitvec key = random_bits(4000, g);
    bitvec a = privacy_amplify(key, 1200, 555);
    bitvec b = privacy_amplify(key, 1200, 555);
    CHECK(a == b);
    CHECK(a.size() == 1200);
    bitvec c = privacy_amplify(key, 1200, 556);
    CHECK(!(a == c));
    CHECK_THROWS_AS(privacy_amplify(key, 0, 1), error);
    CHECK_THROWS_AS(privacy_amplify(key, 4001, 1), error);
    // both parties compress their identical reconciled keys to the same key
    bitvec bob_key = key;
    CHECK(privacy_amplify(bob_key, 1200, 555) == a);
}

// ---------------------------------------------------------------------------
// Sifting

namespace {

linksim::session_log make_log(const std::vector<linksim::click_record>& clicks,
                              uint64_t sent_mu, uint64_t sent_nu1, uint64_t sent_nu2) {
    linksim::session_log log;
    log.header.seed = 1;
    log.header.train_length = 1200;
    log.header.n_trains = 1000000;
    log.header.sent[0] = sent_mu;
    log.header.sent[1] = sent_nu1;
    log.header.sent[2] = sent_nu2;
    log.clicks = clicks;
    return log;
}

linksim::click_record make_click(uint64_t gate, uint8_t alice_basis, uint8_t bob_basis,
                                 uint8_t alice_bit, uint8_t bob_bit, uint8_t intensity) {
    linksim::click_record c;
    c.train = uint32_t(gate / 1200);
    c.slot = uint32_t(gate % 1200);
    c.alice_basis = alice_basis;
    c.bob_basis = bob_basis;
    c.alice_bit = alice_bit;
    c.bob_bit = bob_bit;
    c.detector = bob_bit;
    c.intensity = intensity;
    return c;
}

} // namespace

TEST_CASE("sifting keeps matched-basis signal clicks and counts everything") {
    std::vector<linksim::click_record> clicks;
    clicks.push_back(make_click(0, 0, 0, 1, 1, 0)); // kept
    clicks.push_back(make_click(1, 0, 1, 1, 0, 0)); // basis mismatch
    clicks.push_back(make_click(2, 1, 1, 0, 1, 0)); // kept (bob saw an error)
    clicks.push_back(make_click(3, 0, 0, 1, 1, 1)); // decoy nu1
    clicks.push_back(make_click(4, 1, 1, 0, 0, 2)); // decoy nu2
    sifted_keys s = sift(make_log(clicks, 100, 50, 50));
    REQUIRE(s.alice.size() == 2);
    REQUIRE(s.bob.size() == 2);
    CHECK(s.alice.get(0) == true);
    CHECK(s.bob.get(0) == true);
    CHECK(s.alice.get(1) == false);
    CHECK(s.bob.get(1) == true);
    CHECK(s.stats.n[0] == 100.0);
    CHECK(s.stats.n[1] == 50.0);
    CHECK(s.stats.m[0] == 3.0);
    CHECK(s.stats.m[1] == 1.0);
    CHECK(s.stats.m[2] == 1.0);

    // opposite bases throughout -> nothing sifted
    std::vector<linksim::click_record> opposite;
    for (uint64_t g = 0; g < 10; ++g) opposite.push_back(make_click(g, 0, 1, 1, 0, 0));
    CHECK(sift(make_log(opposite, 10, 1, 1)).alice.size() == 0);
}

// ---------------------------------------------------------------------------
// Block processing and aborts

namespace {

protocol_config oracle_cfg(uint32_t n_subblocks, double oracle_rate, double apriori) {
    protocol_config cfg;
    cfg.mode = reconcile_mode::oracle;
    cfg.oracle_rate = oracle_rate;
    cfg.apriori_qber = apriori;
    cfg.n_subblocks = n_subblocks;
    cfg.seed = 11;
    return cfg;
}

} // namespace

TEST_CASE("a signal gain the decoy classes cannot support aborts the bound") {
    // Signal gain of 0.2 against decoy gains of 0.01: no consistent
    // single-photon yield exists, so the single-photon count bound collapses.
    source_intensities src;
    decoy_stats stats;
    for (int a = 0; a < 3; ++a) stats.n[a] = 1e8;
    stats.m[0] = 2e7;
    stats.m[1] = 1e6;
    stats.m[2] = 1e6;
    rng g(17);
    bitvec key = random_bits(subblock_bits, g);
    block_report rep = process_block(key, key, stats, src, oracle_cfg(1, 0.5, 0.01), 0);
    CHECK(rep.aborted);
    CHECK(rep.reason == abort_reason::no_single_photon_bound);
    CHECK(rep.secret_bits == 0);
    CHECK(rep.secret_key.size() == 0);
    CHECK(std::string(abort_reason_name(rep.reason)) == "no_single_photon_bound");
}

TEST_CASE("error-free block with a solid vacuum bound aborts on negative QBER bound") {
    // Low transmittance plus a large dark-count rate make vacuum clicks a
    // visible fraction of the total, so y0_l (and hence m0bar_l) stays
    // strictly positive; with zero observed errors the numerator of the
    // single-photon QBER bound then goes negative.
    source_intensities src;
    decoy_stats stats = model_stats(1e10, src, 0.01, 1e-4);
    rng g(18);
    bitvec key = random_bits(subblock_bits, g);
    block_report rep = process_block(key, key, stats, src, oracle_cfg(1, 0.5, 0.01), 0);
    CHECK(rep.aborted);
    CHECK(rep.reason == abort_reason::qber_bound_invalid);
    CHECK(rep.estimation.counts.m0bar_l > 0.0);
}

TEST_CASE("heavy errors abort with the QBER bound above one half") {
    source_intensities src;
    decoy_stats stats = model_stats(1e10, src, 0.1, 1e-6);
    rng g(19);
    bitvec alice = random_bits(subblock_bits, g);
    bitvec bob = flipped_copy(alice, 0.40, g);
    block_report rep = process_block(alice, bob, stats, src, oracle_cfg(1, 0.5, 0.4), 0);
    CHECK(rep.aborted);
    CHECK(rep.reason == abort_reason::qber_bound_above_half);
}

TEST_CASE("moderate errors on a single subblock cannot clear the leak") {
    source_intensities src;
    decoy_stats stats = model_stats(1e10, src, 0.1, 1e-6);
    rng g(20);
    bitvec alice = random_bits(subblock_bits, g);
    bitvec bob = flipped_copy(alice, 0.05, g);
    block_report rep = process_block(alice, bob, stats, src, oracle_cfg(1, 0.5, 0.05), 0);
    CHECK(rep.aborted);
    CHECK(rep.reason == abort_reason::no_secret_length);
    CHECK(rep.l_sec <= 0.0);
}

TEST_CASE("undecodable subblocks abort with nothing verified") {
    source_intensities src;
    decoy_stats stats = model_stats(1e10, src, 0.1, 1e-6);
    protocol_config cfg;
    cfg.mode = reconcile_mode::ldpc;
    cfg.apriori_qber = 0.03;
    cfg.n_subblocks = 1;
    rng g(21);
    bitvec alice = random_bits(subblock_bits, g);
    bitvec bob = random_bits(subblock_bits, g); // unrelated: ~50% errors
    block_report rep = process_block(alice, bob, stats, src, cfg, 0);
    CHECK(rep.aborted);
    CHECK(rep.reason == abort_reason::nothing_verified);
    CHECK(rep.reconciliation.n_verified == 0);
}

TEST_CASE("healthy block produces key material deterministically") {
    source_intensities src;
    decoy_stats stats = model_stats(4e9, src, 0.02, 1e-6);
    rng g(22);
    bitvec alice = random_bits(4 * subblock_bits, g);
    bitvec bob = flipped_copy(alice, 0.005, g);
    protocol_config cfg = oracle_cfg(4, 0.75, 0.01);
    block_report rep = process_block(alice, bob, stats, src, cfg, 0);
    REQUIRE(!rep.aborted);
    CHECK(rep.secret_bits > 0);
    CHECK(rep.secret_key.size() == std::size_t(rep.secret_bits));
    CHECK(rep.l_sec >= double(rep.secret_bits));
    CHECK(rep.reconciliation.alice_key == rep.reconciliation.bob_key);
    CHECK(rep.epsilon.eps_total ==
          doctest::Approx(cfg.eps_decoy + rep.reconciliation.eps_ver + cfg.eps_pa));

    block_report again = process_block(alice, bob, stats, src, cfg, 0);
    CHECK(again.secret_key == rep.secret_key);

    // a different block index re-keys hashing and extraction
    block_report other = process_block(alice, bob, stats, src, cfg, 1);
    REQUIRE(!other.aborted);
    CHECK(other.secret_bits == rep.secret_bits);
    CHECK(!(other.secret_key == rep.secret_key));
}

// ---------------------------------------------------------------------------
// Block accumulator

namespace {

linksim::session_log synthetic_mu_log(std::size_t n_clicks, uint64_t first_gate,
                                      uint64_t sent_mu, uint64_t sent_nu1, uint64_t sent_nu2,
                                      rng& g) {
    std::vector<linksim::click_record> clicks;
    for (std::size_t i = 0; i < n_clicks; ++i) {
        uint8_t bit = uint8_t(g.bit());
        clicks.push_back(make_click(first_gate + i, 0, 0, bit, bit, 0));
    }
    return make_log(clicks, sent_mu, sent_nu1, sent_nu2);
}

} // namespace

TEST_CASE("block accumulator assembles blocks across sessions") {
    source_intensities src;
    protocol_config cfg = oracle_cfg(1, 0.5, 0.01);
    block_accumulator acc(src, cfg);
    rng g(23);

    // Three 10000-click sessions; the block boundary falls inside the third.
    std::vector<block_report> reports = acc.feed(synthetic_mu_log(10000, 0, 40000, 20000, 20000, g));
    CHECK(reports.empty());
    CHECK(acc.pending_bits() == 10000);
    reports = acc.feed(synthetic_mu_log(10000, 20000, 40000, 20000, 20000, g));
    CHECK(reports.empty());
    reports = acc.feed(synthetic_mu_log(10000, 40000, 40000, 20000, 20000, g));
    REQUIRE(reports.size() == 1);
    CHECK(reports[0].block_index == 0);
    CHECK(acc.pending_bits() == 30000 - subblock_bits);
    CHECK(acc.blocks_emitted() == 1);

    // Proportional apportionment conserves the fed statistics.
    double frac = double(subblock_bits) / 30000.0;
    CHECK(reports[0].stats.n[0] == doctest::Approx(120000.0 * frac).epsilon(1e-12));
    CHECK(reports[0].stats.m[0] == doctest::Approx(30000.0 * frac).epsilon(1e-12));
    CHECK(reports[0].stats.n[0] + acc.pending_stats().n[0] ==
          doctest::Approx(120000.0).epsilon(1e-12));
    CHECK(reports[0].stats.m[0] + acc.pending_stats().m[0] ==
          doctest::Approx(30000.0).epsilon(1e-12));

    // No decoy clicks ever arrived, so the block itself aborts on bounds.
    CHECK(reports[0].aborted);
    CHECK(reports[0].reason == abort_reason::no_single_photon_bound);

    // One oversized session can complete several blocks at once.
    block_accumulator acc2(src, cfg);
    reports = acc2.feed(synthetic_mu_log(60000, 0, 240000, 120000, 120000, g));
    REQUIRE(reports.size() == 2);
    CHECK(reports[0].block_index == 0);
    CHECK(reports[1].block_index == 1);
    CHECK(acc2.pending_bits() == 60000 - 2 * subblock_bits);
    double total_n0 = reports[0].stats.n[0] + reports[1].stats.n[0] + acc2.pending_stats().n[0];
    CHECK(total_n0 == doctest::Approx(240000.0).epsilon(1e-12));
}

TEST_CASE("end to end: simulated link through the full pipeline") {
    linksim::source_config source; // defaults: mu .5, nu1 .1, nu2 .05
    linksim::channel_config channel;
    channel.loss_db = 5.0;
    channel.misalignment = 0.005;
    linksim::detector_model det;
    det.efficiency = 0.25;
    det.dark_prob = 1e-6;
    linksim::session_options opt;
    opt.seed = 60616;
    opt.n_trains = 9800;
    opt.n_threads = 4;
    linksim::session_log log = linksim::run_session(source, channel, det, det, opt);

    source_intensities src;
    protocol_config cfg;
    cfg.mode = reconcile_mode::ldpc;
    cfg.apriori_qber = 0.01;
    cfg.n_subblocks = 4;
    cfg.seed = 424242;
    block_accumulator acc(src, cfg);
    std::vector<block_report> reports = acc.feed(log);
    REQUIRE(reports.size() >= 1);
    const block_report& rep = reports[0];
    REQUIRE(!rep.aborted);
    CHECK(rep.reconciliation.n_verified == 4);
    CHECK(rep.reconciliation.alice_key == rep.reconciliation.bob_key);
    CHECK(rep.reconciliation.e_mu > 0.001);
    CHECK(rep.reconciliation.e_mu < 0.012);
    CHECK(rep.secret_bits > 1000);
    CHECK(rep.estimation.e1_u > 0.0);
    CHECK(rep.estimation.e1_u < 0.1);
    CHECK(rep.epsilon.eps_total < 1e-10);

    // The whole pipeline is reproducible from the seeds.
    block_accumulator acc2(src, cfg);
    std::vector<block_report> again = acc2.feed(log);
    REQUIRE(again.size() == reports.size());
    CHECK(again[0].secret_key == rep.secret_key);
    CHECK(again[0].l_sec == rep.l_sec);
}

// ---------------------------------------------------------------------------
// Finite-key coverage

TEST_CASE("decoy bounds cover the true single-photon statistics") {
    // Desk-scale coverage check: with a deliberately loose failure budget
    // (eps_decoy = 0.07) the one-sided bounds may be violated, but not more
    // often than the budget allows. Per-block populations are simulated at
    // the photon-number level, so the true single-photon counts are known.
    const double t_eta = 0.3, dark = 1e-5, mis = 0.03;
    source_intensities src;
    const double alphas[3] = {src.mu, src.nu1, src.nu2};
    const long long sent[3] = {15000, 7500, 7500};
    const double z = quantile_from_eps(0.07);
    rng g(909090);

    int blocks = 400, viol_m1 = 0, viol_e1 = 0, usable = 0;
    for (int blk = 0; blk < blocks; ++blk) {
        decoy_stats stats;
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
        // basis sifting halves every category independently
        long long m0_sift = g.binomial(uint32_t(det_k_mu[0]), 0.5);
        long long m1_sift = g.binomial(uint32_t(det_k_mu[1]), 0.5);
        long long multi = 0;
        for (int k = 2; k <= 13; ++k) multi += det_k_mu[k];
        long long multi_sift = g.binomial(uint32_t(multi), 0.5);
        long long l_ver = m0_sift + m1_sift + multi_sift;
        if (l_ver == 0) continue;
        // misaligned photons flip deterministically; dark-only clicks are fair coins
        long long e1_errs = g.binomial(uint32_t(m1_sift), mis);
        long long errs = e1_errs + g.binomial(uint32_t(multi_sift), mis) +
                         g.binomial(uint32_t(m0_sift), 0.5);
        double e_mu = double(errs) / double(l_ver);

        decoy_bounds_result b = decoy_bounds(stats, src, z);
        single_photon_counts c = count_single_photon(b, src, double(l_ver), stats.n[0], z);
        if (!(c.m1_l > 0)) continue; // vacuous bound cannot be violated
        ++usable;
        if (double(m1_sift) < c.m1_l) ++viol_m1;
        double e1u = e1_upper(double(l_ver), e_mu, c.m0bar_l, c.m1_l);
        if (m1_sift > 0 && double(e1_errs) / double(m1_sift) > e1u) ++viol_e1;
    }
    double limit = 0.07 + 3.0 * std::sqrt(0.07 * 0.93 / double(blocks));
    CHECK(usable >= blocks / 4); // the chain must not be vacuous at desk scale
    CHECK(double(viol_m1) / double(blocks) <= limit);
    CHECK(double(viol_e1) / double(blocks) <= limit);
}

// ---------------------------------------------------------------------------
// Analytic key rate

TEST_CASE("analytic keyrate behaves across a loss sweep") {
    analytic_keyrate_config cfg;
    cfg.detector_efficiency = 0.1;
    cfg.dark_prob = 1e-6;
    cfg.misalignment = 0.005;
    cfg.n_pulses = 4e9;
    cfg.protocol = oracle_cfg(50, 0.5, 0.01);

    analytic_keyrate_result base = analytic_keyrate(cfg, 0.0);
    REQUIRE(!base.aborted);
    CHECK(base.secret_per_pulse > 0.0);
    CHECK(base.channel_t == doctest::Approx(1.0));
    // gains match the closed-form detector model
    for (int a = 0; a < 3; ++a) {
        double alpha = a == 0 ? cfg.src.mu : (a == 1 ? cfg.src.nu1 : cfg.src.nu2);
        CHECK(base.gain[a] ==
              doctest::Approx(model_gain(alpha, cfg.detector_efficiency, 1e-6)).epsilon(1e-12));
    }

    double prev = 1e300;
    bool saw_abort = false;
    for (double loss = 0.0; loss <= 60.0; loss += 2.0) {
        analytic_keyrate_result r = analytic_keyrate(cfg, loss);
        if (r.aborted) {
            saw_abort = true;
            CHECK(r.secret_bits == 0);
            CHECK(r.reason != abort_reason::none);
            break;
        }
        CHECK(r.l_sec <= prev);
        prev = r.l_sec;
    }
    CHECK(saw_abort); // the sweep must terminate in a finite abort

    analytic_keyrate_config tiny = cfg;
    tiny.n_pulses = 1e5; // not even one subblock of sifted key
    analytic_keyrate_result r = analytic_keyrate(tiny, 0.0);
    CHECK(r.aborted);
    CHECK(r.reason == abort_reason::nothing_verified);
}

// ---------------------------------------------------------------------------
// Configuration validation

TEST_CASE("protocol configuration is validated") {
    protocol_config cfg;
    CHECK(!code_of([&] { validate(cfg); }).has_value());
    protocol_config bad = cfg;
    bad.eps_decoy = 0.0;
    CHECK(code_of([&] { validate(bad); }) == errc::config_invalid);
    bad = cfg;
    bad.eps_pa = 1.0;
    CHECK(code_of([&] { validate(bad); }) == errc::config_invalid);
    bad = cfg;
    bad.apriori_qber = 0.5;
    CHECK(code_of([&] { validate(bad); }) == errc::config_invalid);
    bad = cfg;
    bad.mode = reconcile_mode::oracle;
    bad.oracle_rate = 1.0;
    CHECK(code_of([&] { validate(bad); }) == errc::config_invalid);
    bad = cfg;
    bad.n_subblocks = 0;
    CHECK(code_of([&] { validate(bad); }) == errc::config_invalid);
    bad = cfg;
    bad.round_index = 0;
    CHECK(code_of([&] { validate(bad); }) == errc::config_invalid);

    rng g(3);
    bitvec a = random_bits(subblock_bits, g);
    bitvec b = random_bits(subblock_bits - 1, g);
    protocol_config one = oracle_cfg(1, 0.5, 0.01);
    CHECK(code_of([&] { reconcile_block(a, b, one); }) == errc::config_invalid);
    protocol_config two = oracle_cfg(2, 0.5, 0.01);
    CHECK(code_of([&] { reconcile_block(a, a, two); }) == errc::config_invalid);
}
