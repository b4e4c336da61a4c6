#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>

namespace qkd {

// splitmix64 step; used for seeding and for deriving substream seeds.
inline uint64_t splitmix64_next(uint64_t& state) {
    state += 0x9e3779b97f4a7c15ull;
    uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// xoshiro256** with explicit seeding.  We carry our own generator (and our
// own samplers below) so that a given seed produces the same stream on every
// platform and standard library; std::poisson_distribution and friends make
// no such promise.
class rng {
public:
    explicit rng(uint64_t seed) : base_seed_(seed) {
        uint64_t x = seed;
        for (auto& w : s_) w = splitmix64_next(x);
    }

    // Deterministic independent substream (e.g. one per pulse train), so
    // trains can be generated in any order or in parallel without changing
    // the result.
    rng substream(uint64_t stream_id) const {
        uint64_t x = base_seed_ ^ (0xd1342543de82ef95ull * (stream_id + 1));
        uint64_t derived = splitmix64_next(x);
        derived ^= splitmix64_next(x);
        return rng(derived);
    }

    uint64_t next() {
        uint64_t result = rotl(s_[1] * 5, 7) * 9;
        uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    bool bernoulli(double p) { return uniform() < p; }

    uint32_t bit() { return static_cast<uint32_t>(next() >> 63); }

    // Uniform integer in [0, n) by rejection (unbiased).
    uint64_t below(uint64_t n) {
        assert(n > 0);
        uint64_t threshold = (0 - n) % n;
        for (;;) {
            uint64_t r = next();
            if (r >= threshold) return r % n;
        }
    }

    // Poisson sample, Knuth's product-of-uniforms method.  Our means are
    // pulse intensities (<= a few) or attack pulse sizes (<= a few hundred),
    // well inside the range where exp(-mean) stays normal.
    uint32_t poisson(double mean) {
        assert(mean >= 0.0 && mean < 700.0);
        if (mean == 0.0) return 0;
        double limit = std::exp(-mean);
        uint32_t k = 0;
        double prod = uniform();
        while (prod > limit) {
            ++k;
            prod *= uniform();
        }
        return k;
    }

    // Binomial sample as explicit Bernoulli trials; n here is a per-pulse
    // photon count, so it is small.
    uint32_t binomial(uint32_t n, double p) {
        uint32_t k = 0;
        for (uint32_t i = 0; i < n; ++i)
            if (uniform() < p) ++k;
        return k;
    }

    uint64_t base_seed() const { return base_seed_; }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    uint64_t base_seed_;
    uint64_t s_[4];
};

} // namespace qkd
