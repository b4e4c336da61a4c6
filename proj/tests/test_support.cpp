#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>

#include "support/bitvec.hpp"
#include "support/rng.hpp"
#include "support/util.hpp"

using namespace qkd;

TEST_CASE("rng is deterministic and substreams are independent") {
    rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());

    rng base(7);
    rng s1 = base.substream(1);
    rng s2 = base.substream(2);
    // Different substreams must disagree immediately on a long run.
    int same = 0;
    for (int i = 0; i < 64; ++i)
        if (s1.next() == s2.next()) ++same;
    CHECK(same == 0);

    // Substream derivation is pure: recomputing gives the same stream.
    rng s1b = base.substream(1);
    rng s1c = rng(7).substream(1);
    for (int i = 0; i < 16; ++i) {
        uint64_t v = s1c.next();
        CHECK(s1b.next() == v);
    }
}

TEST_CASE("uniform stays in [0,1) and bernoulli respects edge probabilities") {
    rng r(123);
    for (int i = 0; i < 10000; ++i) {
        double u = r.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
    for (int i = 0; i < 100; ++i) {
        CHECK_FALSE(r.bernoulli(0.0));
        CHECK(r.bernoulli(1.0));
    }
}

TEST_CASE("bernoulli frequency tracks p") {
    rng r(99);
    const int n = 200000;
    int hits = 0;
    for (int i = 0; i < n; ++i) hits += r.bernoulli(0.3);
    double f = double(hits) / n;
    // 5 sigma band: sqrt(0.3*0.7/2e5) ~ 0.001
    CHECK(f > 0.3 - 0.006);
    CHECK(f < 0.3 + 0.006);
}

TEST_CASE("poisson sampler matches mean and variance") {
    rng r(2024);
    const int n = 200000;
    double mean = 3.7;
    double sum = 0, sum2 = 0;
    for (int i = 0; i < n; ++i) {
        double k = double(r.poisson(mean));
        sum += k;
        sum2 += k * k;
    }
    double m = sum / n;
    double var = sum2 / n - m * m;
    CHECK(std::abs(m - mean) < 0.05);
    CHECK(std::abs(var - mean) < 0.12);

    // Zero mean gives zero photons, always.
    for (int i = 0; i < 100; ++i) CHECK(r.poisson(0.0) == 0);
}

TEST_CASE("poisson of small mean matches exp(-mu) zero fraction") {
    rng r(5);
    const int n = 400000;
    double mu = 0.5;
    int zeros = 0;
    for (int i = 0; i < n; ++i) zeros += (r.poisson(mu) == 0);
    double f = double(zeros) / n;
    CHECK(std::abs(f - std::exp(-mu)) < 0.005);
}

TEST_CASE("binomial sampler matches mean") {
    rng r(77);
    const int n = 50000;
    double sum = 0;
    for (int i = 0; i < n; ++i) sum += double(r.binomial(10, 0.25));
    CHECK(std::abs(sum / n - 2.5) < 0.05);
    CHECK(r.binomial(0, 0.5) == 0);
    CHECK(r.binomial(5, 0.0) == 0);
    CHECK(r.binomial(5, 1.0) == 5);
}

TEST_CASE("below produces unbiased small-range draws") {
    rng r(31337);
    std::set<uint64_t> seen;
    for (int i = 0; i < 1000; ++i) {
        uint64_t v = r.below(3);
        CHECK(v < 3);
        seen.insert(v);
    }
    CHECK(seen.size() == 3);
}

TEST_CASE("bitvec basics: set, get, flip, count") {
    bitvec v(130);
    CHECK(v.size() == 130);
    CHECK(v.count_ones() == 0);
    v.set(0, true);
    v.set(64, true);
    v.set(129, true);
    CHECK(v.get(0));
    CHECK(v.get(64));
    CHECK(v.get(129));
    CHECK_FALSE(v.get(1));
    CHECK(v.count_ones() == 3);
    v.flip(129);
    CHECK_FALSE(v.get(129));
    CHECK(v.count_ones() == 2);
}

TEST_CASE("bitvec xor and equality") {
    bitvec a(70), b(70);
    a.set(3, true);
    a.set(69, true);
    b.set(3, true);
    b.set(10, true);
    a.xor_with(b);
    CHECK_FALSE(a.get(3));
    CHECK(a.get(10));
    CHECK(a.get(69));
    CHECK(a.count_ones() == 2);

    bitvec c(70);
    c.set(10, true);
    c.set(69, true);
    CHECK(a == c);
}

TEST_CASE("bitvec window64 reads across word boundaries and past the end") {
    bitvec v(100);
    // pattern: bits 60..67 set
    for (std::size_t i = 60; i < 68; ++i) v.set(i, true);
    uint64_t w = v.window64(60);
    CHECK((w & 0xffull) == 0xffull);
    CHECK((w >> 8) == 0);
    // window starting near the end: tail reads as zero
    uint64_t tail = v.window64(99);
    CHECK(tail == 0);
    v.set(99, true);
    CHECK(v.window64(99) == 1);
}

TEST_CASE("bitvec slice and push_back") {
    bitvec v;
    for (int i = 0; i < 10; ++i) v.push_back(i % 3 == 0);
    CHECK(v.size() == 10);
    bitvec s = v.slice(3, 4); // bits 3..6: 1,0,0,1
    CHECK(s.size() == 4);
    CHECK(s.get(0));
    CHECK_FALSE(s.get(1));
    CHECK_FALSE(s.get(2));
    CHECK(s.get(3));
}

TEST_CASE("error carries its code and message") {
    try {
        fail(errc::missing_spectral_data, "no data at 1580 nm");
    } catch (const error& e) {
        CHECK(e.code() == errc::missing_spectral_data);
        CHECK(std::string(e.what()).find("1580") != std::string::npos);
    }
}

TEST_CASE("fnv1a64 matches reference vectors") {
    // Standard FNV-1a test vectors.
    CHECK(fnv1a64("") == 0xcbf29ce484222325ull);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
    CHECK(fnv1a64("foobar") == 0x85944171f73967e8ull);
    CHECK(hex64(0xcbf29ce484222325ull) == "cbf29ce484222325");
}

TEST_CASE("text file round trip and io error") {
    auto path = std::filesystem::temp_directory_path() / "qkdwb_test_io.txt";
    write_text_file(path.string(), "hello\nworld\n");
    CHECK(read_text_file(path.string()) == "hello\nworld\n");
    std::filesystem::remove(path);
    CHECK_THROWS_AS(read_text_file((path.parent_path() / "does_not_exist_qkdwb").string()),
                    error);
}
