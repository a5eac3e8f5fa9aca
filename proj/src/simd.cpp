#include "simd.hpp"

#include <cmath>

#include "specgd/task_math.hpp"

#if defined(__AVX512F__)
#include <immintrin.h>
#endif

namespace specgd::simd {

namespace {

inline double reduce_lanes(const double* l) noexcept {
  return ((l[0] + l[4]) + (l[2] + l[6])) + ((l[1] + l[5]) + (l[3] + l[7]));
}

#if defined(__AVX512F__)

inline double reduce_vec(__m512d v) noexcept {
  alignas(64) double l[8];
  _mm512_store_pd(l, v);
  return reduce_lanes(l);
}

template <int TI, int TV, bool kSquares>
inline void tile(const double* x, std::size_t rows, std::size_t stride, const double* coef,
                 std::size_t cs, std::size_t i0, std::size_t v0, double* grad, double* grad_sq) noexcept {
  __m512d acc[TI][TV];
  __m512d sq[kSquares ? TI : 1][kSquares ? TV : 1];
  for (int a = 0; a < TI; ++a)
    for (int b = 0; b < TV; ++b) {
      acc[a][b] = _mm512_setzero_pd();
      if constexpr (kSquares) sq[a][b] = _mm512_setzero_pd();
    }
  for (std::size_t r = 0; r < rows; ++r) {
    const double* c = coef + r * cs + i0;
    bool any = false;
    for (int a = 0; a < TI; ++a) any |= c[a] != 0.0;
    if (!any) continue;
    const double* xr = x + r * stride + v0 * 8;
    __m512d xv[TV];
    for (int b = 0; b < TV; ++b) xv[b] = _mm512_loadu_pd(xr + 8 * b);
    for (int a = 0; a < TI; ++a) {
      const __m512d cb = _mm512_set1_pd(c[a]);
      for (int b = 0; b < TV; ++b) {
        acc[a][b] = _mm512_fmadd_pd(cb, xv[b], acc[a][b]);
        if constexpr (kSquares) {
          const __m512d t = _mm512_mul_pd(cb, xv[b]);
          sq[a][b] = _mm512_fmadd_pd(t, t, sq[a][b]);
        }
      }
    }
  }
  for (int a = 0; a < TI; ++a)
    for (int b = 0; b < TV; ++b) {
      double* g = grad + (i0 + a) * stride + (v0 + b) * 8;
      _mm512_storeu_pd(g, _mm512_add_pd(_mm512_loadu_pd(g), acc[a][b]));
      if constexpr (kSquares) {
        double* q = grad_sq + (i0 + a) * stride + (v0 + b) * 8;
        _mm512_storeu_pd(q, _mm512_add_pd(_mm512_loadu_pd(q), sq[a][b]));
      }
    }
}

template <int TI, bool kSquares>
inline void column(const double* x, std::size_t rows, std::size_t stride, const double* coef,
                   std::size_t cs, std::size_t i0, double* grad, double* grad_sq) noexcept {
  constexpr int kWide = kSquares ? 2 : 4;
  const std::size_t nv = stride / 8;
  std::size_t v = 0;
  for (; v + kWide <= nv; v += kWide) tile<TI, kWide, kSquares>(x, rows, stride, coef, cs, i0, v, grad, grad_sq);
  switch (nv - v) {
    case 3: tile<TI, 3, kSquares>(x, rows, stride, coef, cs, i0, v, grad, grad_sq); break;
    case 2: tile<TI, 2, kSquares>(x, rows, stride, coef, cs, i0, v, grad, grad_sq); break;
    case 1: tile<TI, 1, kSquares>(x, rows, stride, coef, cs, i0, v, grad, grad_sq); break;
    default: break;
  }
}

template <bool kSquares>
void accumulate(const double* x, std::size_t rows, std::size_t stride, const double* coef, std::size_t cs,
                std::size_t s, double* grad, double* grad_sq) noexcept {
  std::size_t i = 0;
  for (; i + 6 <= s; i += 6) column<6, kSquares>(x, rows, stride, coef, cs, i, grad, grad_sq);
  for (; i + 3 <= s; i += 3) column<3, kSquares>(x, rows, stride, coef, cs, i, grad, grad_sq);
  for (; i < s; ++i) column<1, kSquares>(x, rows, stride, coef, cs, i, grad, grad_sq);
}

#else

template <bool kSquares>
void accumulate(const double* x, std::size_t rows, std::size_t stride, const double* coef, std::size_t cs,
                std::size_t s, double* grad, double* grad_sq) noexcept {
  constexpr std::size_t kMaxStride = 4096;
  double acc[kMaxStride];
  double sq[kSquares ? kMaxStride : 1];
  for (std::size_t j0 = 0; j0 < stride; j0 += kMaxStride) {
    const std::size_t width = stride - j0 < kMaxStride ? stride - j0 : kMaxStride;
    for (std::size_t i = 0; i < s; ++i) {
      for (std::size_t j = 0; j < width; ++j) {
        acc[j] = 0.0;
        if constexpr (kSquares) sq[j] = 0.0;
      }
      for (std::size_t r = 0; r < rows; ++r) {
        const double c = coef[r * cs + i];
        if (c == 0.0) continue;
        const double* xr = x + r * stride + j0;
        for (std::size_t j = 0; j < width; ++j) {
          acc[j] = std::fma(c, xr[j], acc[j]);
          if constexpr (kSquares) {
            const double t = c * xr[j];
            sq[j] = std::fma(t, t, sq[j]);
          }
        }
      }
      double* g = grad + i * stride + j0;
      for (std::size_t j = 0; j < width; ++j) g[j] = g[j] + acc[j];
      if constexpr (kSquares) {
        double* q = grad_sq + i * stride + j0;
        for (std::size_t j = 0; j < width; ++j) q[j] = q[j] + sq[j];
      }
    }
  }
}

#endif

#if defined(__AVX512F__) && defined(__AVX512DQ__)

inline __m512d v_exp_nonpositive(__m512d x) noexcept {
  using namespace detail::det;
  const __m512d shifter = _mm512_set1_pd(kShifter);
  const __m512d kd = _mm512_sub_pd(_mm512_fmadd_pd(x, _mm512_set1_pd(kLog2e), shifter), shifter);
  __m512d r = _mm512_fnmadd_pd(kd, _mm512_set1_pd(kLn2Hi), x);
  r = _mm512_fnmadd_pd(kd, _mm512_set1_pd(kLn2Lo), r);
  __m512d p = _mm512_set1_pd(kExpPoly[0]);
  for (int i = 1; i < 12; ++i) p = _mm512_fmadd_pd(p, r, _mm512_set1_pd(kExpPoly[i]));
  const __m512d one = _mm512_set1_pd(1.0);
  p = _mm512_fmadd_pd(p, r, one);
  p = _mm512_fmadd_pd(p, r, one);
  const __mmask8 low = _mm512_cmp_pd_mask(x, _mm512_set1_pd(kExpMin), _CMP_LT_OQ);
  const __m512i n = _mm512_cvttpd_epi64(_mm512_mask_blend_pd(low, kd, _mm512_setzero_pd()));
  const __m512i n1 = _mm512_srai_epi64(n, 1);
  const __m512i n2 = _mm512_sub_epi64(n, n1);
  const __m512i bias = _mm512_set1_epi64(1023);
  const __m512d s1 = _mm512_castsi512_pd(_mm512_slli_epi64(_mm512_add_epi64(n1, bias), 52));
  const __m512d s2 = _mm512_castsi512_pd(_mm512_slli_epi64(_mm512_add_epi64(n2, bias), 52));
  const __m512d out = _mm512_mul_pd(_mm512_mul_pd(p, s1), s2);
  return _mm512_mask_blend_pd(low, out, _mm512_setzero_pd());
}

inline __m512d v_log1p_unit(__m512d e, __m512d& inv) noexcept {
  using namespace detail::det;
  const __m512d one = _mm512_set1_pd(1.0);
  const __m512d u = _mm512_add_pd(one, e);
  const __mmask8 big = _mm512_cmp_pd_mask(u, _mm512_set1_pd(kSqrt2), _CMP_GT_OQ);
  const __m512d m = _mm512_mask_blend_pd(big, u, _mm512_mul_pd(u, _mm512_set1_pd(0.5)));
  const __m512d k = _mm512_mask_blend_pd(big, _mm512_setzero_pd(), one);
  const __m512d f = _mm512_sub_pd(m, one);
  const __m512d den = _mm512_add_pd(_mm512_set1_pd(2.0), f);
  const __m512d q = _mm512_div_pd(one, _mm512_mul_pd(u, den));
  inv = _mm512_mul_pd(den, q);
  const __m512d c = _mm512_mul_pd(_mm512_sub_pd(e, _mm512_sub_pd(u, one)), inv);
  const __m512d s = _mm512_mul_pd(f, _mm512_mul_pd(u, q));
  const __m512d z = _mm512_mul_pd(s, s);
  const __m512d w = _mm512_mul_pd(z, z);
  const __m512d t1 = _mm512_mul_pd(
      w, _mm512_fmadd_pd(w, _mm512_fmadd_pd(w, _mm512_set1_pd(kLg6), _mm512_set1_pd(kLg4)), _mm512_set1_pd(kLg2)));
  const __m512d t2 = _mm512_mul_pd(
      z, _mm512_fmadd_pd(
             w,
             _mm512_fmadd_pd(w, _mm512_fmadd_pd(w, _mm512_set1_pd(kLg7), _mm512_set1_pd(kLg5)), _mm512_set1_pd(kLg3)),
             _mm512_set1_pd(kLg1)));
  const __m512d R = _mm512_add_pd(t2, t1);
  const __m512d hfsq = _mm512_mul_pd(_mm512_mul_pd(_mm512_set1_pd(0.5), f), f);
  const __m512d inner = _mm512_add_pd(_mm512_mul_pd(s, _mm512_add_pd(hfsq, R)),
                                      _mm512_add_pd(_mm512_mul_pd(k, _mm512_set1_pd(kLn2Lo)), c));
  return _mm512_sub_pd(_mm512_mul_pd(k, _mm512_set1_pd(kLn2Hi)),
                       _mm512_sub_pd(_mm512_sub_pd(hfsq, inner), f));
}

#endif

}  // namespace

double dot(const double* a, const double* b, std::size_t n) noexcept {
  const std::size_t full = n / 8 * 8;
#if defined(__AVX512F__)
  __m512d acc = _mm512_setzero_pd();
  for (std::size_t j = 0; j < full; j += 8)
    acc = _mm512_fmadd_pd(_mm512_loadu_pd(a + j), _mm512_loadu_pd(b + j), acc);
  if (full < n) {
    const __mmask8 m = static_cast<__mmask8>((1u << (n - full)) - 1u);
    acc = _mm512_fmadd_pd(_mm512_maskz_loadu_pd(m, a + full), _mm512_maskz_loadu_pd(m, b + full), acc);
  }
  return reduce_vec(acc);
#else
  double l[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  for (std::size_t j = 0; j < full; j += 8)
    for (std::size_t k = 0; k < 8; ++k) l[k] = std::fma(a[j + k], b[j + k], l[k]);
  for (std::size_t j = full; j < n; ++j) l[j - full] = std::fma(a[j], b[j], l[j - full]);
  return reduce_lanes(l);
#endif
}

void accumulate_rows(const double* x, std::size_t rows, std::size_t stride, const double* coef, std::size_t cs,
                     std::size_t s, double* grad) noexcept {
  accumulate<false>(x, rows, stride, coef, cs, s, grad, nullptr);
}

void accumulate_rows_sq(const double* x, std::size_t rows, std::size_t stride, const double* coef,
                        std::size_t cs, std::size_t s, double* grad, double* grad_sq) noexcept {
  accumulate<true>(x, rows, stride, coef, cs, s, grad, grad_sq);
}

void margin_terms(bool logistic, const double* u, const double* v, const double* y, std::size_t rows,
                  const double* steps, std::size_t s, double* loss_sum, double* loss_sq, double* coef) noexcept {
  std::size_t k = 0;
#if defined(__AVX512F__) && defined(__AVX512DQ__)
  const __m512d zero = _mm512_setzero_pd();
  const __m512d one = _mm512_set1_pd(1.0);
  const __m512i sign = _mm512_set1_epi64(static_cast<long long>(0x8000000000000000ULL));
  auto terms = [&](__m512d a, std::size_t r, __m512d& f, __m512d& c) {
    const __m512d t = _mm512_mul_pd(_mm512_set1_pd(y[r]),
                                    _mm512_sub_pd(_mm512_set1_pd(u[r]), _mm512_mul_pd(a, _mm512_set1_pd(v[r]))));
    const __m512d neg_y = _mm512_set1_pd(-y[r]);
    if (logistic) {
      const __m512d e = v_exp_nonpositive(_mm512_castsi512_pd(_mm512_or_si512(_mm512_castpd_si512(t), sign)));
      const __mmask8 negative = _mm512_cmp_pd_mask(t, zero, _CMP_LT_OQ);
      const __m512d neg_t = _mm512_castsi512_pd(_mm512_xor_si512(_mm512_castpd_si512(t), sign));
      __m512d inv;
      f = _mm512_add_pd(_mm512_mask_blend_pd(negative, zero, neg_t), v_log1p_unit(e, inv));
      const __mmask8 nonneg = _mm512_cmp_pd_mask(t, zero, _CMP_GE_OQ);
      c = _mm512_mul_pd(neg_y, _mm512_mul_pd(_mm512_mask_blend_pd(nonneg, one, e), inv));
    } else {
      const __m512d h = _mm512_sub_pd(one, t);
      f = _mm512_mask_blend_pd(_mm512_cmp_pd_mask(h, zero, _CMP_NLE_UQ), zero, h);
      c = _mm512_mask_blend_pd(_mm512_cmp_pd_mask(h, zero, _CMP_GT_OQ), zero, neg_y);
    }
  };
  // Four rows are evaluated side by side for instruction-level parallelism;
  // their terms still enter the sums in row order.
  constexpr std::size_t kRows = 4;
  for (; k < s; k += 8) {
    const __mmask8 lane = s - k >= 8 ? __mmask8(0xff) : __mmask8((1u << (s - k)) - 1);
    const __m512d a = _mm512_maskz_loadu_pd(lane, steps + k);
    __m512d sum = _mm512_maskz_loadu_pd(lane, loss_sum + k);
    __m512d sq = _mm512_maskz_loadu_pd(lane, loss_sq + k);
    std::size_t r = 0;
    for (; r + kRows <= rows; r += kRows) {
      __m512d f[kRows];
      __m512d c[kRows];
      for (std::size_t i = 0; i < kRows; ++i) terms(a, r + i, f[i], c[i]);
      for (std::size_t i = 0; i < kRows; ++i) {
        sum = _mm512_add_pd(sum, f[i]);
        sq = _mm512_add_pd(sq, _mm512_mul_pd(f[i], f[i]));
        _mm512_mask_storeu_pd(coef + (r + i) * s + k, lane, c[i]);
      }
    }
    for (; r < rows; ++r) {
      __m512d f;
      __m512d c;
      terms(a, r, f, c);
      sum = _mm512_add_pd(sum, f);
      sq = _mm512_add_pd(sq, _mm512_mul_pd(f, f));
      _mm512_mask_storeu_pd(coef + r * s + k, lane, c);
    }
    _mm512_mask_storeu_pd(loss_sum + k, lane, sum);
    _mm512_mask_storeu_pd(loss_sq + k, lane, sq);
  }
#endif
  const LossFamily fam = logistic ? LossFamily::kLogistic : LossFamily::kSvmHinge;
  for (; k < s; ++k) {
    for (std::size_t r = 0; r < rows; ++r) {
      const double t = y[r] * (u[r] - steps[k] * v[r]);
      const double f = margin_loss(fam, t);
      loss_sum[k] += f;
      loss_sq[k] += f * f;
      coef[r * s + k] = margin_coefficient(fam, t, y[r]);
    }
  }
}

}  // namespace specgd::simd
