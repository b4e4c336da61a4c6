#include "postproc/toeplitz.hpp"

#include <bit>

#include "support/util.hpp"

namespace qkd::postproc {

bitvec toeplitz_multiply(const bitvec& seed, const bitvec& key, std::size_t out_bits) {
    if (out_bits < 1) fail(errc::config_invalid, "toeplitz output must have at least 1 bit");
    if (seed.size() != key.size() + out_bits - 1)
        fail(errc::config_invalid, "toeplitz seed length must be key length + output length - 1");

    bitvec out(out_bits);
    const std::size_t n_words = key.words().size();
    for (std::size_t i = 0; i < out_bits; ++i) {
        // Row i of the matrix is the seed window S[i .. i+len(key)-1]; the
        // output bit is the parity of its AND with the key, word by word.
        uint64_t acc = 0;
        for (std::size_t w = 0; w < n_words; ++w)
            acc ^= key.word_or_zero(w) & seed.window64(i + 64 * w);
        out.set(i, std::popcount(acc) & 1);
    }
    return out;
}

} // namespace qkd::postproc
