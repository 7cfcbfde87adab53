#include "binembed/tensor.hpp"

#include <bit>
#include <cmath>
#include <sstream>

namespace binembed {

int64_t shape_numel(const Shape& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
        if (d < 0) throw shape_error("negative dimension in shape " + shape_str(shape));
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << "]";
    return os.str();
}

FloatTensor::FloatTensor(Shape s, std::vector<float> d) : shape(std::move(s)), data(std::move(d)) {
    if (shape_numel(shape) != static_cast<int64_t>(data.size()))
        throw shape_error("data length " + std::to_string(data.size()) + " does not match shape " + shape_str(shape));
}

bool FloatTensor::all_finite() const {
    for (float v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

BitTensor::BitTensor(Shape s) : shape(std::move(s)) {
    words.assign(static_cast<size_t>(outer_rows() * words_per_row()), 0);
}

int64_t BitTensor::outer_rows() const {
    if (shape.empty()) return 1;
    int64_t n = 1;
    for (size_t i = 0; i + 1 < shape.size(); ++i) n *= shape[i];
    return n;
}

bool BitTensor::padding_clear() const {
    const int64_t n = inner_dim();
    const int64_t wpr = words_per_row();
    if (n % 64 == 0) return true;
    const uint64_t tail_mask = (uint64_t{1} << (n % 64)) - 1;
    for (int64_t r = 0; r < outer_rows(); ++r)
        if (row(r)[wpr - 1] & ~tail_mask) return false;
    return true;
}

void pack_row(const float* src, int64_t n, uint64_t* dst) {
    int64_t i = 0;
    for (int64_t w = 0; w < (n + 63) / 64; ++w) {
        uint64_t bits = 0;
        const int64_t end = std::min<int64_t>(n, i + 64);
        for (int64_t j = i; j < end; ++j)
            bits |= uint64_t(src[j] >= 0.0f) << (j - i);
        dst[w] = bits;
        i = end;
    }
}

BitTensor pack(const FloatTensor& x) {
    BitTensor b(x.shape);
    const int64_t n = b.inner_dim();
    const float* src = x.ptr();
    for (int64_t r = 0; r < b.outer_rows(); ++r, src += n)
        pack_row(src, n, b.row(r));
    return b;
}

FloatTensor unpack(const BitTensor& b) {
    FloatTensor x(b.shape);
    const int64_t n = b.inner_dim();
    float* dst = x.ptr();
    for (int64_t r = 0; r < b.outer_rows(); ++r, dst += n)
        for (int64_t i = 0; i < n; ++i)
            dst[i] = b.get_bit(r, i) ? 1.0f : -1.0f;
    return x;
}

int64_t xnor_popcount_dot(const uint64_t* a, const uint64_t* b, int64_t n) {
    const int64_t full = n / 64;
    int64_t matches = 0;
    for (int64_t w = 0; w < full; ++w)
        matches += std::popcount(~(a[w] ^ b[w]));
    if (n % 64) {
        const uint64_t tail_mask = (uint64_t{1} << (n % 64)) - 1;
        matches += std::popcount(~(a[full] ^ b[full]) & tail_mask);
    }
    return 2 * matches - n;
}

int64_t xnor_popcount_dot(const BitTensor& a, int64_t r_a, const BitTensor& b, int64_t r_b) {
    if (a.inner_dim() != b.inner_dim())
        throw shape_error("xnor_popcount_dot: length mismatch " + std::to_string(a.inner_dim()) +
                          " vs " + std::to_string(b.inner_dim()));
    return xnor_popcount_dot(a.row(r_a), b.row(r_b), a.inner_dim());
}

}  // namespace binembed
