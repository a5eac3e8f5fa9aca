#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "specgd/detail/det_math.hpp"

namespace specgd {

enum class LossFamily { kSvmHinge, kLogistic };
enum class Regularizer { kNone, kL1, kL2 };

struct TaskSpec {
  LossFamily family = LossFamily::kSvmHinge;
  Regularizer reg = Regularizer::kNone;
  double mu = 0.0;
};

/// Dense linear model tagged with the iteration that produced it.
struct Model {
  std::vector<double> weights;
  std::uint64_t iter = 0;

  Model() = default;
  explicit Model(std::size_t dim) : weights(dim, 0.0) {}
  Model(std::vector<double> w, std::uint64_t it = 0) : weights(std::move(w)), iter(it) {}

  std::size_t dim() const noexcept { return weights.size(); }
};

/// Non-owning view of one training example; label is -1 or +1.
struct ExampleView {
  std::span<const double> x;
  double y = 1.0;
};

struct Example {
  std::vector<double> features;
  double label = 1.0;

  ExampleView view() const noexcept { return {features, label}; }
};

void validate(const TaskSpec& task);

double example_loss(const TaskSpec& task, const Model& model, ExampleView ex);
std::vector<double> example_gradient(const TaskSpec& task, const Model& model, ExampleView ex);
double regularizer_value(const TaskSpec& task, std::span<const double> w);
std::vector<double> regularizer_subgradient(const TaskSpec& task, std::span<const double> w);

inline double regularizer_value(const TaskSpec& task, const Model& m) {
  return regularizer_value(task, std::span<const double>(m.weights));
}
inline std::vector<double> regularizer_subgradient(const TaskSpec& task, const Model& m) {
  return regularizer_subgradient(task, std::span<const double>(m.weights));
}

/// Writes the regularizer subgradient into out[0, w.size()).
void regularizer_subgradient_into(const TaskSpec& task, std::span<const double> w, std::span<double> out);

/// Deterministic dot product. The summation order depends only on the length,
/// so every code path that calls it produces identical bits.
double dot(std::span<const double> a, std::span<const double> b);

// Per-example terms expressed through the signed margin t = y * (w . x).

/// max(0, 1 - t), propagating NaN.
inline double hinge_loss(double t) {
  const double h = 1.0 - t;
  return h <= 0.0 ? 0.0 : h;
}

/// ln(1 + e^-t) in the overflow-free form max(0, -t) + ln(1 + e^-|t|).
inline double logistic_loss(double t) {
  return (t < 0.0 ? -t : 0.0) + detail::log1p_unit(detail::exp_nonpositive(-std::fabs(t)));
}

/// sigma(-t) = 1 / (1 + e^t), written with e^-|t| so nothing overflows.
inline double logistic_tail(double t) {
  const double e = detail::exp_nonpositive(-std::fabs(t));
  double inv;
  detail::log1p_unit(e, inv);
  return (t >= 0.0 ? e : 1.0) * inv;
}

inline double margin_loss(LossFamily f, double t) {
  return f == LossFamily::kSvmHinge ? hinge_loss(t) : logistic_loss(t);
}

/// Coefficient c such that grad f = c * x. Zero exactly at the hinge kink.
inline double margin_coefficient(LossFamily f, double t, double y) {
  if (f == LossFamily::kSvmHinge) return 1.0 - t > 0.0 ? -y : 0.0;
  return -y * logistic_tail(t);
}

}  // namespace specgd
