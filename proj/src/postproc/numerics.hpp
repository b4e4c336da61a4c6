#pragma once
// Small numeric kernels shared by the post-processing stack: binary entropy,
// the standard normal inverse CDF, the decoy-quantile mapping, and the
// polynomial-hash collision bound.

#include <cstdint>

namespace qkd::postproc {

// Modulus of the polynomial hash: the largest 50-bit prime, 2^50 - 27.
constexpr uint64_t polyhash_q = (uint64_t(1) << 50) - 27;

// Shannon binary entropy in bits, with h2(0) = h2(1) = 0. Domain [0, 1].
double binary_entropy(double x);

// Inverse standard normal CDF, relative error well below 1e-6 over the
// domain (0, 1). Uses a rational initial guess refined by Halley steps
// against erfc, so deep tails keep full relative accuracy.
double normal_quantile(double p);

// Quantile of the upper tail: returns z with P(X > z) = tail, accurate for
// tails as small as 1e-300 because the complement 1 - tail is never formed.
double normal_quantile_upper(double tail);

// z = Phi^-1(1 - eps_decoy / 7); the seven one-sided estimates of the decoy
// analysis share the failure budget equally. Domain 0 < eps_decoy < 7.
double quantile_from_eps(double eps_decoy);

// Collision probability bound of the 49-bit-block polynomial hash over a
// message of len_bits: (ceil(len/49) - 1) / q. Domain len_bits >= 50.
double eps_col(uint64_t len_bits);

} // namespace qkd::postproc
