#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "binembed/tensor.hpp"
#include "support/helpers.hpp"
#include "support/oracles.hpp"

using namespace binembed;
using test_support::random_signs_source;

TEST_CASE("pack maps sign(0) to +1") {
    FloatTensor x({4}, {-1.5f, 2.0f, 0.0f, -0.1f});
    BitTensor b = pack(x);
    CHECK(b.get_bit(0, 0) == false);
    CHECK(b.get_bit(0, 1) == true);
    CHECK(b.get_bit(0, 2) == true);  // sign(0) = +1
    CHECK(b.get_bit(0, 3) == false);
    CHECK(b.padding_clear());
}

TEST_CASE("all-positive tensor sets every data bit, padding stays clear") {
    FloatTensor x({3, 70});
    for (auto& v : x.data) v = 0.25f;
    BitTensor b = pack(x);
    for (int64_t r = 0; r < 3; ++r)
        for (int64_t i = 0; i < 70; ++i) CHECK(b.get_bit(r, i));
    CHECK(b.padding_clear());
    CHECK(b.words_per_row() == 2);
    CHECK(static_cast<int64_t>(b.words.size()) == 6);
}

TEST_CASE("unpack(pack(x)) equals elementwise sign with sign(0)=+1") {
    Rng rng(11);
    FloatTensor x({1000});
    for (int64_t i = 0; i < 1000; ++i)
        x.data[i] = static_cast<float>(rng.uniform(-3.0, 3.0));
    x.data[17] = 0.0f;
    const FloatTensor u = unpack(pack(x));
    for (int64_t i = 0; i < 1000; ++i) {
        const float expected = x.data[i] >= 0.0f ? 1.0f : -1.0f;  // scalar sign oracle
        CHECK(u.data[i] == expected);
    }
}

TEST_CASE("unpack of explicit bits") {
    BitTensor b({2});
    b.set_bit(0, 0, true);
    b.set_bit(0, 1, false);
    const FloatTensor u = unpack(b);
    CHECK(u.data[0] == 1.0f);
    CHECK(u.data[1] == -1.0f);
}

TEST_CASE("pack/unpack round trip is identity on random bit patterns") {
    Rng rng(7);
    for (int trial = 0; trial < 64; ++trial) {
        const int64_t n = 1 + static_cast<int64_t>(rng.below(130));
        BitTensor b({n});
        for (int64_t i = 0; i < n; ++i) b.set_bit(0, i, rng.below(2) == 1);
        CHECK(pack(unpack(b)) == b);
    }
    // 4096-bit pattern in one shot
    BitTensor big({4096});
    for (int64_t i = 0; i < 4096; ++i) big.set_bit(0, i, rng.below(2) == 1);
    CHECK(pack(unpack(big)) == big);
}

TEST_CASE("empty tensor round trips") {
    FloatTensor x({0});
    BitTensor b = pack(x);
    CHECK(b.numel() == 0);
    CHECK(unpack(b).numel() == 0);
}

TEST_CASE("xnor dot: self equals length, antipodal equals -length") {
    FloatTensor x({64});
    Rng rng(3);
    for (auto& v : x.data) v = static_cast<float>(rng.uniform(-1.0, 1.0)) + 0.001f;
    BitTensor a = pack(x);
    CHECK(xnor_popcount_dot(a, 0, a, 0) == 64);

    FloatTensor y({10}), ny({10});
    for (int i = 0; i < 10; ++i) {
        y.data[i] = i % 2 ? 0.5f : -0.5f;
        ny.data[i] = -y.data[i];
    }
    CHECK(xnor_popcount_dot(pack(y), 0, pack(ny), 0) == -10);
}

TEST_CASE("xnor dot equals float sign-dot oracle over word-boundary lengths") {
    Rng rng(99);
    for (int trial = 0; trial < 1000; ++trial) {
        const int64_t n = 1 + static_cast<int64_t>(rng.below(130));
        FloatTensor a = random_signs_source({n}, rng);
        FloatTensor b = random_signs_source({n}, rng);
        const int64_t got = xnor_popcount_dot(pack(a), 0, pack(b), 0);
        CHECK(got == test_oracle::sign_dot(a.data, b.data));
        // parity property: result has the same parity as n
        CHECK(((got % 2) + 2) % 2 == ((n % 2) + 2) % 2);
    }
}

TEST_CASE("xnor dot rejects length mismatch") {
    BitTensor a({8}), b({9});
    CHECK_THROWS_AS(xnor_popcount_dot(a, 0, b, 0), shape_error);
}

TEST_CASE("re-zeroing corrupted padding restores bit-exact equality") {
    Rng rng(5);
    FloatTensor x = random_signs_source({3, 100}, rng);
    const BitTensor original = pack(x);
    BitTensor mutated = original;
    // flip padding bits (beyond bit 100 in each row's final word)
    for (int64_t r = 0; r < 3; ++r) mutated.row(r)[1] |= ~((uint64_t{1} << (100 - 64)) - 1);
    CHECK(!(mutated == original));
    CHECK(!mutated.padding_clear());
    const uint64_t tail_mask = (uint64_t{1} << (100 - 64)) - 1;
    for (int64_t r = 0; r < 3; ++r) mutated.row(r)[1] &= tail_mask;
    CHECK(mutated == original);
    CHECK(mutated.padding_clear());
}

TEST_CASE("library-produced tensors never carry nonzero padding") {
    Rng rng(21);
    for (int trial = 0; trial < 32; ++trial) {
        const int64_t rows = 1 + static_cast<int64_t>(rng.below(4));
        const int64_t n = 1 + static_cast<int64_t>(rng.below(200));
        CHECK(pack(random_signs_source({rows, n}, rng)).padding_clear());
    }
}
