#pragma once

// Numeric kernels shared by every pass over the data. Each output element is
// produced by one fixed sequence of fused multiply-adds that does not depend
// on how many other candidates are processed alongside it, which keeps runs
// with different speculation degrees bit-comparable.

#include <cstddef>

namespace specgd::simd {

/// Rows per accumulation sub-block. Partial sums restart at every sub-block
/// boundary (relative to the start of the storage block).
inline constexpr std::size_t kSubBlockRows = 64;

/// Dot product over n elements using eight interleaved lanes.
double dot(const double* a, const double* b, std::size_t n) noexcept;

/// G[i * stride + j] += sum_r C[r * cs + i] * X[r * stride + j] for i < s.
/// Rows whose coefficient is zero are skipped (an exact no-op).
/// stride must be a multiple of 8.
void accumulate_rows(const double* x, std::size_t rows, std::size_t stride, const double* coef,
                     std::size_t cs, std::size_t s, double* grad) noexcept;

/// Same as accumulate_rows and additionally gsq[i * stride + j] += sum_r (C[r,i] * X[r,j])^2.
void accumulate_rows_sq(const double* x, std::size_t rows, std::size_t stride, const double* coef,
                        std::size_t cs, std::size_t s, double* grad, double* grad_sq) noexcept;

/// Margin terms for a run of examples and s candidate steps. For each row r
/// and candidate k, t = y[r] * (u[r] - steps[k] * v[r]); loss_sum[k] += f(t),
/// loss_sq[k] += f(t)^2 (rows added in order) and coef[r * s + k] = df/du.
/// Matches margin_loss and margin_coefficient bit for bit.
void margin_terms(bool logistic, const double* u, const double* v, const double* y, std::size_t rows,
                  const double* steps, std::size_t s, double* loss_sum, double* loss_sq, double* coef) noexcept;

}  // namespace specgd::simd
