#pragma once
// Toeplitz-matrix privacy amplification over GF(2).
//
// The seed S of length l_in + l_out - 1 defines the matrix by T[i][j] =
// S[i + j] (row i, column j); the output is K_out = T * K_in, each output
// bit the parity of the AND between the key and the seed window starting
// at its row index. The convention is fixed so independent implementations
// agree bit-exactly.

#include <cstddef>

#include "support/bitvec.hpp"

namespace qkd::postproc {

// Pre: seed.size() == key.size() + out_bits - 1, out_bits >= 1.
bitvec toeplitz_multiply(const bitvec& seed, const bitvec& key, std::size_t out_bits);

} // namespace qkd::postproc
