#pragma once

#include <cstdint>
#include <cstddef>
#include <span>
#include <string>
#include <stdexcept>
#include <vector>

namespace binembed {

struct shape_error : std::runtime_error {
    explicit shape_error(const std::string& what) : std::runtime_error(what) {}
};

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major float32 tensor.
struct FloatTensor {
    Shape shape;
    std::vector<float> data;

    FloatTensor() = default;
    explicit FloatTensor(Shape s) : shape(std::move(s)), data(static_cast<size_t>(shape_numel(shape)), 0.0f) {}
    FloatTensor(Shape s, std::vector<float> d);

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    int64_t dim(size_t i) const { return shape.at(i); }
    size_t rank() const { return shape.size(); }

    float* ptr() { return data.data(); }
    const float* ptr() const { return data.data(); }

    bool all_finite() const;
};

/// Bit-packed {-1,+1} tensor. Bit value 1 means +1, 0 means -1.
///
/// The innermost dimension is packed LSB-first into 64-bit words; each
/// "row" (one index of the flattened outer dimensions) starts on a word
/// boundary. Padding bits past the innermost length in a row's final
/// word are always zero.
struct BitTensor {
    Shape shape;
    std::vector<uint64_t> words;

    BitTensor() = default;
    explicit BitTensor(Shape s);

    int64_t inner_dim() const { return shape.empty() ? 1 : shape.back(); }
    int64_t outer_rows() const;
    int64_t words_per_row() const { return (inner_dim() + 63) / 64; }
    int64_t numel() const { return shape_numel(shape); }

    uint64_t* row(int64_t r) { return words.data() + r * words_per_row(); }
    const uint64_t* row(int64_t r) const { return words.data() + r * words_per_row(); }

    bool get_bit(int64_t r, int64_t i) const {
        return (row(r)[i >> 6] >> (i & 63)) & 1u;
    }
    void set_bit(int64_t r, int64_t i, bool v) {
        uint64_t& w = row(r)[i >> 6];
        const uint64_t m = uint64_t{1} << (i & 63);
        w = v ? (w | m) : (w & ~m);
    }

    /// True when every padding bit beyond inner_dim in each row is zero.
    bool padding_clear() const;

    bool operator==(const BitTensor& other) const {
        return shape == other.shape && words == other.words;
    }
};

/// Binarize: bit i set iff x_i >= 0 (sign(0) = +1). Shape preserved.
BitTensor pack(const FloatTensor& x);

/// Expand to {-1.0f, +1.0f}. pack(unpack(b)) == b bit-exactly.
FloatTensor unpack(const BitTensor& b);

/// Pack `n` floats from `src` into `dst` words (dst must hold >= ceil(n/64)
/// zeroed words). Bit i set iff src[i] >= 0.
void pack_row(const float* src, int64_t n, uint64_t* dst);

/// Sum of sign(a_i)*sign(b_i) over one packed row pair of length n,
/// computed as 2*popcount(~(a XOR b) masked to n) - n.
int64_t xnor_popcount_dot(const uint64_t* a, const uint64_t* b, int64_t n);

/// Row r_a of a against row r_b of b. Innermost lengths must match.
int64_t xnor_popcount_dot(const BitTensor& a, int64_t r_a, const BitTensor& b, int64_t r_b);

}  // namespace binembed
