#pragma once

#include <cstdint>

namespace binembed::kern {

/// y[m*O+o] = sum_k p[m*K+k] * w[o*K+k] for m in [m0,m1), all o in [0,O).
/// Both operands contract over their contiguous innermost K.
void dot_rows(const float* p, const float* w, float* y, int64_t m0, int64_t m1,
              int64_t K, int64_t O);

/// c[i*K+k] (+)= sum_j a[i*sa + j*sb] * b[j*K+k] for i in [i0,i1).
///
/// One kernel covers both convolution backward passes:
///   input grads:  i=row, j=out_ch: a=dY (sa=O, sb=1), b=W,       c=dPatches
///   weight grads: i=out_ch, j=row: a=dY (sa=1, sb=O), b=Patches, c=dW
/// With accumulate=false, c is overwritten (treated as uninitialized).
/// Accumulation order over j is fixed, so results do not depend on how
/// callers partition i.
void accum_rank1(const float* a, int64_t sa, int64_t sb, const float* b, float* c,
                 int64_t i0, int64_t i1, int64_t J, int64_t K, bool accumulate = true);

/// y[m*O+o] = 2*popcount(~(p_row_m XOR w_row_o) masked to n) - n
/// for m in [m0,m1). p rows are p_wpr words apart, w rows w_wpr apart.
void xnor_dot_rows(const uint64_t* p, int64_t p_wpr, const uint64_t* w, int64_t w_wpr,
                   float* y, int64_t m0, int64_t m1, int64_t n, int64_t O);

}  // namespace binembed::kern
