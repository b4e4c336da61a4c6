#include "postproc/polyhash.hpp"

#include "postproc/numerics.hpp"
#include "support/util.hpp"

namespace qkd::postproc {

namespace {

inline uint64_t horner_step(uint64_t h, uint64_t k, uint64_t block) {
    return uint64_t(((unsigned __int128)h * k + block) % polyhash_q);
}

} // namespace

uint64_t polyhash(uint64_t k, const bitvec& message) {
    if (k >= polyhash_q) fail(errc::config_invalid, "polyhash key must be below the modulus");

    uint64_t h = 0;
    const std::size_t n = message.size();
    std::size_t pos = 0;
    // Whole blocks straight from the message.
    while (pos + 49 <= n) {
        uint64_t block = 0;
        for (unsigned j = 0; j < 49; ++j)
            block |= uint64_t(message.get(pos + j)) << (48 - j);
        h = horner_step(h, k, block);
        pos += 49;
    }
    // Padding block: the message tail, a 1 bit, then zeros. Appended even
    // when the tail is empty.
    uint64_t block = 0;
    unsigned j = 0;
    for (; pos + j < n; ++j) block |= uint64_t(message.get(pos + j)) << (48 - j);
    block |= uint64_t(1) << (48 - j);
    h = horner_step(h, k, block);
    // Length block.
    h = horner_step(h, k, uint64_t(n) & ((uint64_t(1) << 49) - 1));
    return h;
}

} // namespace qkd::postproc
