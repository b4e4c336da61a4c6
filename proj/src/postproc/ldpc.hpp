#pragma once
// Baseline LDPC syndrome reconciliation at the fixed subblock length of
// 27200 bits. One fixed, deterministically constructed parity-check matrix
// per supported code rate; belief-propagation syndrome decoding with a flat
// a-priori error probability. The exact leak bookkeeping, not decoder art,
// is the point of this module.

#include <cstdint>
#include <vector>

#include "support/bitvec.hpp"

namespace qkd::postproc {

constexpr uint32_t subblock_bits = 27200;

struct ldpc_code {
    double rate = 0.5;
    uint32_t n = subblock_bits; // variable nodes
    uint32_t m = 0;             // check nodes = (1-rate)*n
    uint32_t row_weight = 0;
    // Edges grouped by check node; chk_var maps edge -> variable index.
    std::vector<uint32_t> chk_ptr;
    std::vector<uint32_t> chk_var;
    // Per-variable view: var_edge maps into the edge arrays above.
    std::vector<uint32_t> var_ptr;
    std::vector<uint32_t> var_edge;
};

// The supported rates. Matrices are regular with column weight 3 and row
// weight 6, 8, or 12; built once per process from a fixed seed.
const ldpc_code& code_for_rate(double rate);

// Syndrome length (1-rate) * 27200 for a supported rate.
uint32_t syndrome_bits(double rate);

// Largest supported rate whose redundancy (1-R) is at least 1.5x the
// Shannon limit h2(q) for the a-priori QBER; clamps to 0.5 from below.
double select_rate(double apriori_qber);

bitvec compute_syndrome(const ldpc_code& code, const bitvec& bits);

struct decode_result {
    bool converged = false;
    uint32_t iterations = 0;
    bitvec error; // candidate error pattern with H*e = target when converged
};

// Sum-product belief propagation solving H*e = target_syndrome, with flat
// prior P(e_i = 1) = apriori_qber. A zero target converges in 0 iterations.
decode_result decode_syndrome(const ldpc_code& code, const bitvec& target_syndrome,
                              double apriori_qber, uint32_t max_iterations = 60);

} // namespace qkd::postproc
