#pragma once
// Polynomial hashing of bit strings for key verification.
//
// The message is padded with a single 1 bit followed by zeros up to a whole
// number of 49-bit blocks (the padding block is appended even when the
// message length is already a multiple of 49, and for the empty message),
// then one extra block carrying the message bit length mod 2^49 is added.
// Blocks are read MSB-first and folded by Horner's rule modulo the prime
// q = 2^50 - 27, with the evaluation point k as the hash key. The tag is
// the 50-bit residue.

#include <cstdint>

#include "support/bitvec.hpp"

namespace qkd::postproc {

// Tag of the message under hash key k. Pre: k < polyhash_q.
uint64_t polyhash(uint64_t k, const bitvec& message);

} // namespace qkd::postproc
