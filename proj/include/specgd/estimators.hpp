#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace specgd {

/// Mergeable (count, sum, sum of squares) triple over sampled values.
struct EstimatorAccumulator {
  std::uint64_t n = 0;
  double sum = 0.0;
  double sum_sq = 0.0;

  /// Throws NumericError on a non-finite value.
  void add(double value);
  EstimatorAccumulator& operator+=(const EstimatorAccumulator& other) noexcept {
    n += other.n;
    sum += other.sum;
    sum_sq += other.sum_sq;
    return *this;
  }
  bool operator==(const EstimatorAccumulator&) const = default;
};

EstimatorAccumulator accumulate(EstimatorAccumulator acc, double value);
EstimatorAccumulator merge(const EstimatorAccumulator& a, const EstimatorAccumulator& b) noexcept;

/// Scaled-sum estimate of a population total with a confidence half-width.
/// The half-width plays the role of "std" in the stopping rules.
struct EstimateReport {
  double estimate = 0.0;
  double half_width = 0.0;
  std::uint64_t n_seen = 0;
  std::uint64_t population = 0;

  double low() const noexcept { return estimate - half_width; }
  double high() const noexcept { return estimate + half_width; }
  /// Full interval width relative to the estimate.
  double relative_width() const noexcept;
  bool exact() const noexcept { return n_seen == population; }
};

using GradientEstimate = std::vector<EstimateReport>;
using LossEstimate = std::vector<EstimateReport>;

inline constexpr double kDefaultConfidence = 0.95;
inline constexpr double kRelativeFloor = 1e-12;

/// Two-sided normal critical value, z(0.95) = 1.959964.
double z_value(double confidence);

/// Estimate under sampling without replacement with finite-population
/// correction. Throws NoEstimateError if n == 0 and StructuralError if
/// n > population.
EstimateReport report(const EstimatorAccumulator& acc, std::uint64_t population,
                      double confidence = kDefaultConfidence);

/// Per-component report for d aggregates that share one sample count.
GradientEstimate report_vector(std::uint64_t n, std::span<const double> sum, std::span<const double> sum_sq,
                               std::uint64_t population, double confidence = kDefaultConfidence);

}  // namespace specgd
