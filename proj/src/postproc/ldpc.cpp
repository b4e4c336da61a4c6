#include "postproc/ldpc.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <set>

#include "postproc/numerics.hpp"
#include "support/rng.hpp"
#include "support/util.hpp"

namespace qkd::postproc {

namespace {

constexpr double supported_rates[3] = {0.5, 0.625, 0.75};

int rate_index(double rate) {
    for (int i = 0; i < 3; ++i)
        if (std::abs(rate - supported_rates[i]) < 1e-9) return i;
    fail(errc::config_invalid,
         "unsupported code rate " + std::to_string(rate) + " (supported: 0.5, 0.625, 0.75)");
}

// Regular bipartite graph: every variable has degree 3, every check degree
// 81600/m. A fixed-seed stub shuffle makes the matrix deterministic; a
// repair pass swaps stubs between rows to remove duplicate variables in a
// row.
ldpc_code build_code(double rate, uint64_t seed) {
    ldpc_code code;
    code.rate = rate;
    code.m = uint32_t(std::llround((1.0 - rate) * code.n));
    const uint32_t edges = code.n * 3;
    code.row_weight = edges / code.m;
    if (code.row_weight * code.m != edges)
        fail(errc::generic, "ldpc geometry must divide evenly");

    std::vector<uint32_t> stubs;
    stubs.reserve(edges);
    for (uint32_t v = 0; v < code.n; ++v)
        for (int k = 0; k < 3; ++k) stubs.push_back(v);
    rng r(seed);
    for (std::size_t i = stubs.size(); i > 1; --i)
        std::swap(stubs[i - 1], stubs[std::size_t(r.below(i))]);

    auto row_of = [&](std::size_t stub_pos) { return std::size_t(stub_pos / code.row_weight); };
    // A row may not touch the same variable twice. Repair duplicates by
    // swapping the offending stub with one from another row such that both
    // rows stay duplicate-free; the scan order is fixed, so the matrix is
    // reproducible.
    auto row_has = [&](std::size_t row, uint32_t value, std::size_t except) {
        std::size_t begin = row * code.row_weight, end = begin + code.row_weight;
        for (std::size_t j = begin; j < end; ++j)
            if (j != except && stubs[j] == value) return true;
        return false;
    };
    for (std::size_t i = 0; i < stubs.size(); ++i) {
        std::size_t row = row_of(i);
        bool dup = false;
        for (std::size_t j = row * code.row_weight; j < i; ++j) dup |= (stubs[j] == stubs[i]);
        if (!dup) continue;
        bool fixed = false;
        for (std::size_t step = 1; step < stubs.size() && !fixed; ++step) {
            std::size_t cand = (i + step) % stubs.size();
            std::size_t crow = row_of(cand);
            if (crow == row) continue;
            if (row_has(row, stubs[cand], i) || row_has(crow, stubs[i], cand)) continue;
            std::swap(stubs[i], stubs[cand]);
            fixed = true;
        }
        if (!fixed) fail(errc::generic, "ldpc construction could not repair a duplicate edge");
    }
    for (std::size_t r2 = 0; r2 < code.m; ++r2) {
        std::set<uint32_t> seen;
        for (std::size_t j = r2 * code.row_weight; j < (r2 + 1) * code.row_weight; ++j)
            if (!seen.insert(stubs[j]).second)
                fail(errc::generic, "ldpc construction left a duplicate edge");
    }

    code.chk_ptr.resize(code.m + 1);
    code.chk_var = stubs;
    for (uint32_t c = 0; c <= code.m; ++c) code.chk_ptr[c] = c * code.row_weight;

    // Variable-side adjacency into the edge array.
    code.var_ptr.assign(code.n + 1, 0);
    for (uint32_t v : code.chk_var) code.var_ptr[v + 1] += 1;
    for (uint32_t v = 0; v < code.n; ++v) code.var_ptr[v + 1] += code.var_ptr[v];
    code.var_edge.resize(edges);
    std::vector<uint32_t> cursor(code.var_ptr.begin(), code.var_ptr.end() - 1);
    for (uint32_t e = 0; e < edges; ++e) code.var_edge[cursor[code.chk_var[e]]++] = e;
    return code;
}

} // namespace

const ldpc_code& code_for_rate(double rate) {
    static std::mutex mu;
    static std::map<int, ldpc_code> cache;
    int idx = rate_index(rate);
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(idx);
    if (it == cache.end())
        it = cache.emplace(idx, build_code(supported_rates[idx], 0x51dcc0de + uint64_t(idx)))
                 .first;
    return it->second;
}

uint32_t syndrome_bits(double rate) {
    return code_for_rate(rate).m;
}

double select_rate(double apriori_qber) {
    if (apriori_qber < 0.0 || apriori_qber > 0.5)
        fail(errc::config_invalid, "a-priori QBER must lie in [0, 0.5]");
    double need = 1.5 * binary_entropy(apriori_qber);
    for (int i = 2; i >= 0; --i)
        if (1.0 - supported_rates[i] >= need) return supported_rates[i];
    return supported_rates[0];
}

bitvec compute_syndrome(const ldpc_code& code, const bitvec& bits) {
    if (bits.size() != code.n)
        fail(errc::config_invalid, "syndrome input must have the subblock length");
    bitvec s(code.m);
    for (uint32_t c = 0; c < code.m; ++c) {
        unsigned parity = 0;
        for (uint32_t e = code.chk_ptr[c]; e < code.chk_ptr[c + 1]; ++e)
            parity ^= unsigned(bits.get(code.chk_var[e]));
        s.set(c, parity != 0);
    }
    return s;
}

decode_result decode_syndrome(const ldpc_code& code, const bitvec& target_syndrome,
                              double apriori_qber, uint32_t max_iterations) {
    if (target_syndrome.size() != code.m)
        fail(errc::config_invalid, "target syndrome has the wrong length");
    if (apriori_qber <= 0.0 || apriori_qber >= 0.5)
        fail(errc::config_invalid, "decoder prior must lie in (0, 0.5)");

    decode_result out;
    out.error = bitvec(code.n);
    if (target_syndrome.count_ones() == 0) {
        out.converged = true;
        return out; // nothing to correct, zero iterations
    }

    const double llr0 = std::log((1.0 - apriori_qber) / apriori_qber);
    const uint32_t edges = uint32_t(code.chk_var.size());
    std::vector<double> var_to_chk(edges, llr0);
    std::vector<double> chk_to_var(edges, 0.0);
    std::vector<double> total(code.n);
    std::vector<double> tanhs(code.row_weight);
    constexpr double msg_cap = 30.0;

    for (uint32_t iter = 1; iter <= max_iterations; ++iter) {
        // Check-node update with exclusive products via prefix/suffix passes.
        for (uint32_t c = 0; c < code.m; ++c) {
            uint32_t begin = code.chk_ptr[c], end = code.chk_ptr[c + 1];
            for (uint32_t e = begin; e < end; ++e)
                tanhs[e - begin] = std::tanh(0.5 * var_to_chk[e]);
            double sign = target_syndrome.get(c) ? -1.0 : 1.0;
            uint32_t w = end - begin;
            double prefix = 1.0;
            for (uint32_t j = 0; j < w; ++j) {
                chk_to_var[begin + j] = prefix;
                prefix *= tanhs[j];
            }
            double suffix = 1.0;
            for (uint32_t j = w; j-- > 0;) {
                double prod = chk_to_var[begin + j] * suffix;
                prod = std::clamp(prod, -0.9999999999999, 0.9999999999999);
                chk_to_var[begin + j] =
                    std::clamp(sign * 2.0 * std::atanh(prod), -msg_cap, msg_cap);
                suffix *= tanhs[j];
            }
        }
        // Variable-node update and hard decision.
        for (uint32_t v = 0; v < code.n; ++v) {
            double sum = llr0;
            for (uint32_t k = code.var_ptr[v]; k < code.var_ptr[v + 1]; ++k)
                sum += chk_to_var[code.var_edge[k]];
            total[v] = sum;
            for (uint32_t k = code.var_ptr[v]; k < code.var_ptr[v + 1]; ++k) {
                uint32_t e = code.var_edge[k];
                var_to_chk[e] = std::clamp(sum - chk_to_var[e], -msg_cap, msg_cap);
            }
            out.error.set(v, total[v] < 0.0);
        }
        out.iterations = iter;
        if (compute_syndrome(code, out.error) == target_syndrome) {
            out.converged = true;
            return out;
        }
    }
    out.converged = false;
    return out;
}

} // namespace qkd::postproc
