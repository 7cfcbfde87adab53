#include "binembed/kernels.hpp"

#include <algorithm>
#include <bit>

#if defined(__AVX512F__) || defined(__AVX2__)
#include <immintrin.h>
#endif

namespace binembed::kern {

#if defined(__AVX512F__)

namespace {

// 4 rows of p against 4 rows of w, vectorized over K with 16 accumulators.
template <int MB, int OB>
inline void dot_tile(const float* p, const float* w, float* y, int64_t K, int64_t O,
                     int64_t m, int64_t o) {
    __m512 acc[MB][OB];
    for (int i = 0; i < MB; ++i)
        for (int j = 0; j < OB; ++j) acc[i][j] = _mm512_setzero_ps();

    int64_t k = 0;
    for (; k + 16 <= K; k += 16) {
        __m512 pv[MB], wv[OB];
        for (int i = 0; i < MB; ++i) pv[i] = _mm512_loadu_ps(p + (m + i) * K + k);
        for (int j = 0; j < OB; ++j) wv[j] = _mm512_loadu_ps(w + (o + j) * K + k);
        for (int i = 0; i < MB; ++i)
            for (int j = 0; j < OB; ++j) acc[i][j] = _mm512_fmadd_ps(pv[i], wv[j], acc[i][j]);
    }
    if (k < K) {
        const __mmask16 tail = static_cast<__mmask16>((1u << (K - k)) - 1u);
        __m512 pv[MB], wv[OB];
        for (int i = 0; i < MB; ++i) pv[i] = _mm512_maskz_loadu_ps(tail, p + (m + i) * K + k);
        for (int j = 0; j < OB; ++j) wv[j] = _mm512_maskz_loadu_ps(tail, w + (o + j) * K + k);
        for (int i = 0; i < MB; ++i)
            for (int j = 0; j < OB; ++j) acc[i][j] = _mm512_fmadd_ps(pv[i], wv[j], acc[i][j]);
    }
    for (int i = 0; i < MB; ++i)
        for (int j = 0; j < OB; ++j) y[(m + i) * O + o + j] = _mm512_reduce_add_ps(acc[i][j]);
}

}  // namespace

void dot_rows(const float* p, const float* w, float* y, int64_t m0, int64_t m1,
              int64_t K, int64_t O) {
    int64_t m = m0;
    for (; m + 4 <= m1; m += 4) {
        int64_t o = 0;
        for (; o + 4 <= O; o += 4) dot_tile<4, 4>(p, w, y, K, O, m, o);
        for (; o < O; ++o) dot_tile<4, 1>(p, w, y, K, O, m, o);
    }
    for (; m < m1; ++m) {
        int64_t o = 0;
        for (; o + 4 <= O; o += 4) dot_tile<1, 4>(p, w, y, K, O, m, o);
        for (; o < O; ++o) dot_tile<1, 1>(p, w, y, K, O, m, o);
    }
}

namespace {

// i-block of IB rows, k swept in 32-float tiles held in registers while all
// of j streams through. b is read once per i-block.
template <int IB, bool Accumulate>
inline void accum_tile(const float* a, int64_t sa, int64_t sb, const float* b, float* c,
                       int64_t i, int64_t J, int64_t K) {
    int64_t k = 0;
    for (; k + 32 <= K; k += 32) {
        __m512 acc0[IB], acc1[IB];
        for (int t = 0; t < IB; ++t) {
            acc0[t] = Accumulate ? _mm512_loadu_ps(c + (i + t) * K + k) : _mm512_setzero_ps();
            acc1[t] = Accumulate ? _mm512_loadu_ps(c + (i + t) * K + k + 16) : _mm512_setzero_ps();
        }
        for (int64_t j = 0; j < J; ++j) {
            const __m512 b0 = _mm512_loadu_ps(b + j * K + k);
            const __m512 b1 = _mm512_loadu_ps(b + j * K + k + 16);
            for (int t = 0; t < IB; ++t) {
                const __m512 s = _mm512_set1_ps(a[(i + t) * sa + j * sb]);
                acc0[t] = _mm512_fmadd_ps(s, b0, acc0[t]);
                acc1[t] = _mm512_fmadd_ps(s, b1, acc1[t]);
            }
        }
        for (int t = 0; t < IB; ++t) {
            _mm512_storeu_ps(c + (i + t) * K + k, acc0[t]);
            _mm512_storeu_ps(c + (i + t) * K + k + 16, acc1[t]);
        }
    }
    for (; k < K; k += 16) {
        const __mmask16 mask =
            K - k >= 16 ? static_cast<__mmask16>(0xffff) : static_cast<__mmask16>((1u << (K - k)) - 1u);
        __m512 acc[IB];
        for (int t = 0; t < IB; ++t)
            acc[t] = Accumulate ? _mm512_maskz_loadu_ps(mask, c + (i + t) * K + k)
                                : _mm512_setzero_ps();
        for (int64_t j = 0; j < J; ++j) {
            const __m512 bv = _mm512_maskz_loadu_ps(mask, b + j * K + k);
            for (int t = 0; t < IB; ++t)
                acc[t] = _mm512_fmadd_ps(_mm512_set1_ps(a[(i + t) * sa + j * sb]), bv, acc[t]);
        }
        for (int t = 0; t < IB; ++t) _mm512_mask_storeu_ps(c + (i + t) * K + k, mask, acc[t]);
    }
}

}  // namespace

void accum_rank1(const float* a, int64_t sa, int64_t sb, const float* b, float* c,
                 int64_t i0, int64_t i1, int64_t J, int64_t K, bool accumulate) {
    int64_t i = i0;
    if (accumulate) {
        for (; i + 8 <= i1; i += 8) accum_tile<8, true>(a, sa, sb, b, c, i, J, K);
        for (; i + 4 <= i1; i += 4) accum_tile<4, true>(a, sa, sb, b, c, i, J, K);
        for (; i < i1; ++i) accum_tile<1, true>(a, sa, sb, b, c, i, J, K);
    } else {
        for (; i + 8 <= i1; i += 8) accum_tile<8, false>(a, sa, sb, b, c, i, J, K);
        for (; i + 4 <= i1; i += 4) accum_tile<4, false>(a, sa, sb, b, c, i, J, K);
        for (; i < i1; ++i) accum_tile<1, false>(a, sa, sb, b, c, i, J, K);
    }
}

#elif defined(__AVX2__)

namespace {

template <int MB, int OB>
inline void dot_tile(const float* p, const float* w, float* y, int64_t K, int64_t O,
                     int64_t m, int64_t o) {
    __m256 acc[MB][OB];
    for (int i = 0; i < MB; ++i)
        for (int j = 0; j < OB; ++j) acc[i][j] = _mm256_setzero_ps();
    int64_t k = 0;
    for (; k + 8 <= K; k += 8) {
        __m256 pv[MB], wv[OB];
        for (int i = 0; i < MB; ++i) pv[i] = _mm256_loadu_ps(p + (m + i) * K + k);
        for (int j = 0; j < OB; ++j) wv[j] = _mm256_loadu_ps(w + (o + j) * K + k);
        for (int i = 0; i < MB; ++i)
            for (int j = 0; j < OB; ++j) acc[i][j] = _mm256_fmadd_ps(pv[i], wv[j], acc[i][j]);
    }
    for (int i = 0; i < MB; ++i) {
        for (int j = 0; j < OB; ++j) {
            __m128 lo = _mm256_castps256_ps128(acc[i][j]);
            __m128 hi = _mm256_extractf128_ps(acc[i][j], 1);
            lo = _mm_add_ps(lo, hi);
            lo = _mm_hadd_ps(lo, lo);
            lo = _mm_hadd_ps(lo, lo);
            float sum = _mm_cvtss_f32(lo);
            for (int64_t kk = k; kk < K; ++kk) sum += p[(m + i) * K + kk] * w[(o + j) * K + kk];
            y[(m + i) * O + o + j] = sum;
        }
    }
}

template <int IB, bool Accumulate>
inline void accum_tile(const float* a, int64_t sa, int64_t sb, const float* b, float* c,
                       int64_t i, int64_t J, int64_t K) {
    int64_t k = 0;
    for (; k + 16 <= K; k += 16) {
        __m256 acc0[IB], acc1[IB];
        for (int t = 0; t < IB; ++t) {
            acc0[t] = Accumulate ? _mm256_loadu_ps(c + (i + t) * K + k) : _mm256_setzero_ps();
            acc1[t] = Accumulate ? _mm256_loadu_ps(c + (i + t) * K + k + 8) : _mm256_setzero_ps();
        }
        for (int64_t j = 0; j < J; ++j) {
            const __m256 b0 = _mm256_loadu_ps(b + j * K + k);
            const __m256 b1 = _mm256_loadu_ps(b + j * K + k + 8);
            for (int t = 0; t < IB; ++t) {
                const __m256 s = _mm256_set1_ps(a[(i + t) * sa + j * sb]);
                acc0[t] = _mm256_fmadd_ps(s, b0, acc0[t]);
                acc1[t] = _mm256_fmadd_ps(s, b1, acc1[t]);
            }
        }
        for (int t = 0; t < IB; ++t) {
            _mm256_storeu_ps(c + (i + t) * K + k, acc0[t]);
            _mm256_storeu_ps(c + (i + t) * K + k + 8, acc1[t]);
        }
    }
    for (; k < K; ++k) {
        for (int t = 0; t < IB; ++t) {
            float acc = Accumulate ? c[(i + t) * K + k] : 0.0f;
            for (int64_t j = 0; j < J; ++j) acc += a[(i + t) * sa + j * sb] * b[j * K + k];
            c[(i + t) * K + k] = acc;
        }
    }
}

}  // namespace

void dot_rows(const float* p, const float* w, float* y, int64_t m0, int64_t m1,
              int64_t K, int64_t O) {
    int64_t m = m0;
    for (; m + 4 <= m1; m += 4) {
        int64_t o = 0;
        for (; o + 4 <= O; o += 4) dot_tile<4, 4>(p, w, y, K, O, m, o);
        for (; o < O; ++o) dot_tile<4, 1>(p, w, y, K, O, m, o);
    }
    for (; m < m1; ++m) {
        int64_t o = 0;
        for (; o + 4 <= O; o += 4) dot_tile<1, 4>(p, w, y, K, O, m, o);
        for (; o < O; ++o) dot_tile<1, 1>(p, w, y, K, O, m, o);
    }
}

void accum_rank1(const float* a, int64_t sa, int64_t sb, const float* b, float* c,
                 int64_t i0, int64_t i1, int64_t J, int64_t K, bool accumulate) {
    int64_t i = i0;
    if (accumulate) {
        for (; i + 8 <= i1; i += 8) accum_tile<8, true>(a, sa, sb, b, c, i, J, K);
        for (; i + 4 <= i1; i += 4) accum_tile<4, true>(a, sa, sb, b, c, i, J, K);
        for (; i < i1; ++i) accum_tile<1, true>(a, sa, sb, b, c, i, J, K);
    } else {
        for (; i + 8 <= i1; i += 8) accum_tile<8, false>(a, sa, sb, b, c, i, J, K);
        for (; i + 4 <= i1; i += 4) accum_tile<4, false>(a, sa, sb, b, c, i, J, K);
        for (; i < i1; ++i) accum_tile<1, false>(a, sa, sb, b, c, i, J, K);
    }
}

#else  // scalar fallback

void dot_rows(const float* p, const float* w, float* y, int64_t m0, int64_t m1,
              int64_t K, int64_t O) {
    for (int64_t m = m0; m < m1; ++m) {
        for (int64_t o = 0; o < O; ++o) {
            float acc = 0.0f;
            const float* pr = p + m * K;
            const float* wr = w + o * K;
            for (int64_t k = 0; k < K; ++k) acc += pr[k] * wr[k];
            y[m * O + o] = acc;
        }
    }
}

void accum_rank1(const float* a, int64_t sa, int64_t sb, const float* b, float* c,
                 int64_t i0, int64_t i1, int64_t J, int64_t K, bool accumulate) {
    for (int64_t i = i0; i < i1; ++i) {
        float* cr = c + i * K;
        if (!accumulate) std::fill(cr, cr + K, 0.0f);
        for (int64_t j = 0; j < J; ++j) {
            const float s = a[i * sa + j * sb];
            const float* br = b + j * K;
            for (int64_t k = 0; k < K; ++k) cr[k] += s * br[k];
        }
    }
}

#endif

void xnor_dot_rows(const uint64_t* p, int64_t p_wpr, const uint64_t* w, int64_t w_wpr,
                   float* y, int64_t m0, int64_t m1, int64_t n, int64_t O) {
    const int64_t full = n / 64;
    const uint64_t tail_mask = (n % 64) ? ((uint64_t{1} << (n % 64)) - 1) : 0;
    for (int64_t m = m0; m < m1; ++m) {
        const uint64_t* pr = p + m * p_wpr;
        for (int64_t o = 0; o < O; ++o) {
            const uint64_t* wr = w + o * w_wpr;
            int64_t matches = 0;
            for (int64_t t = 0; t < full; ++t) matches += std::popcount(~(pr[t] ^ wr[t]));
            if (tail_mask) matches += std::popcount(~(pr[full] ^ wr[full]) & tail_mask);
            y[m * O + o] = static_cast<float>(2 * matches - n);
        }
    }
}

}  // namespace binembed::kern
