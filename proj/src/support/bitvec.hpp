#pragma once

#include <cassert>
#include <cstdint>
#include <cstddef>
#include <vector>

namespace qkd {

// Packed bit vector.  Bit i lives in word i/64 at position i%64 (LSB-first
// inside a word).  Unused tail bits of the last word are kept zero so that
// whole-word operations (XOR, popcount) need no masking.
class bitvec {
public:
    bitvec() = default;
    explicit bitvec(size_t n) : nbits_(n), words_((n + 63) / 64, 0) {}

    size_t size() const { return nbits_; }
    bool empty() const { return nbits_ == 0; }

    bool get(size_t i) const {
        assert(i < nbits_);
        return (words_[i >> 6] >> (i & 63)) & 1u;
    }

    void set(size_t i, bool v) {
        assert(i < nbits_);
        uint64_t mask = 1ull << (i & 63);
        if (v)
            words_[i >> 6] |= mask;
        else
            words_[i >> 6] &= ~mask;
    }

    void flip(size_t i) {
        assert(i < nbits_);
        words_[i >> 6] ^= 1ull << (i & 63);
    }

    void push_back(bool v) {
        if ((nbits_ & 63) == 0) words_.push_back(0);
        if (v) words_.back() |= 1ull << (nbits_ & 63);
        ++nbits_;
    }

    void xor_with(const bitvec& other) {
        assert(nbits_ == other.nbits_);
        for (size_t w = 0; w < words_.size(); ++w) words_[w] ^= other.words_[w];
    }

    size_t count_ones() const {
        size_t total = 0;
        for (uint64_t w : words_) total += static_cast<size_t>(__builtin_popcountll(w));
        return total;
    }

    bool operator==(const bitvec& other) const {
        return nbits_ == other.nbits_ && words_ == other.words_;
    }
    bool operator!=(const bitvec& other) const { return !(*this == other); }

    const std::vector<uint64_t>& words() const { return words_; }
    std::vector<uint64_t>& words() { return words_; }

    // Word containing bits [64*k, 64*k+63], reading past the end as zero.
    uint64_t word_or_zero(size_t k) const { return k < words_.size() ? words_[k] : 0; }

    // 64 bits starting at arbitrary bit offset (little-endian across words).
    uint64_t window64(size_t bit_offset) const {
        size_t w = bit_offset >> 6;
        unsigned sh = bit_offset & 63;
        uint64_t lo = word_or_zero(w);
        if (sh == 0) return lo;
        uint64_t hi = word_or_zero(w + 1);
        return (lo >> sh) | (hi << (64 - sh));
    }

    bitvec slice(size_t begin, size_t len) const {
        assert(begin + len <= nbits_);
        bitvec out(len);
        for (size_t w = 0; w * 64 < len; ++w) out.words()[w] = window64(begin + w * 64);
        out.mask_tail();
        return out;
    }

    void mask_tail() {
        unsigned rem = nbits_ & 63;
        if (rem != 0 && !words_.empty()) words_.back() &= (~0ull) >> (64 - rem);
    }

private:
    size_t nbits_ = 0;
    std::vector<uint64_t> words_;
};

} // namespace qkd
