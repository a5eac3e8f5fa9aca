#include "specgd/estimators.hpp"

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <string>

#include "specgd/errors.hpp"

namespace specgd {

void EstimatorAccumulator::add(double value) {
  if (!std::isfinite(value)) throw NumericError("non-finite value accumulated");
  ++n;
  sum += value;
  sum_sq += value * value;
}

EstimatorAccumulator accumulate(EstimatorAccumulator acc, double value) {
  acc.add(value);
  return acc;
}

EstimatorAccumulator merge(const EstimatorAccumulator& a, const EstimatorAccumulator& b) noexcept {
  EstimatorAccumulator out = a;
  out += b;
  return out;
}

double EstimateReport::relative_width() const noexcept {
  return 2.0 * half_width / std::max(std::fabs(estimate), kRelativeFloor);
}

double z_value(double confidence) {
  if (!(confidence > 0.0 && confidence < 1.0)) throw ConfigError("confidence must lie in (0, 1)");
  static const double z95 = boost::math::quantile(boost::math::normal_distribution<double>(), 0.975);
  if (confidence == kDefaultConfidence) return z95;
  return boost::math::quantile(boost::math::normal_distribution<double>(), 0.5 + 0.5 * confidence);
}

namespace {

double half_width_of(std::uint64_t n, double sum, double sum_sq, std::uint64_t population, double z) {
  if (n < 2 || n == population) return 0.0;
  const double nn = static_cast<double>(n);
  const double big_n = static_cast<double>(population);
  const double s2 = std::max(0.0, (sum_sq - sum * sum / nn) / (nn - 1.0));
  const double var = big_n * big_n * (s2 / nn) * (1.0 - nn / big_n);
  return z * std::sqrt(var);
}

void check_counts(std::uint64_t n, std::uint64_t population) {
  if (n == 0) throw NoEstimateError("no samples accumulated");
  if (n > population)
    throw StructuralError("sample count " + std::to_string(n) + " exceeds population " + std::to_string(population));
}

}  // namespace

EstimateReport report(const EstimatorAccumulator& acc, std::uint64_t population, double confidence) {
  check_counts(acc.n, population);
  const double z = z_value(confidence);
  EstimateReport r;
  r.n_seen = acc.n;
  r.population = population;
  r.estimate = static_cast<double>(population) / static_cast<double>(acc.n) * acc.sum;
  r.half_width = half_width_of(acc.n, acc.sum, acc.sum_sq, population, z);
  return r;
}

GradientEstimate report_vector(std::uint64_t n, std::span<const double> sum, std::span<const double> sum_sq,
                               std::uint64_t population, double confidence) {
  check_counts(n, population);
  if (sum.size() != sum_sq.size()) throw StructuralError("report_vector: length mismatch");
  const double z = z_value(confidence);
  const double scale = static_cast<double>(population) / static_cast<double>(n);
  GradientEstimate out(sum.size());
  for (std::size_t j = 0; j < sum.size(); ++j) {
    out[j].n_seen = n;
    out[j].population = population;
    out[j].estimate = scale * sum[j];
    out[j].half_width = half_width_of(n, sum[j], sum_sq[j], population, z);
  }
  return out;
}

}  // namespace specgd
