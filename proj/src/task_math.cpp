#include "specgd/task_math.hpp"

#include <string>

#include "simd.hpp"
#include "specgd/errors.hpp"

namespace specgd {

namespace {

void check_dims(const Model& model, ExampleView ex) {
  if (model.dim() != ex.x.size()) {
    throw StructuralError("dimension mismatch: model has " + std::to_string(model.dim()) + ", example has " +
                          std::to_string(ex.x.size()));
  }
}

}  // namespace

void validate(const TaskSpec& task) {
  if (!(task.mu >= 0.0) || !std::isfinite(task.mu)) throw ConfigError("regularization coefficient must be >= 0");
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw StructuralError("dot: length mismatch");
  return simd::dot(a.data(), b.data(), a.size());
}

double example_loss(const TaskSpec& task, const Model& model, ExampleView ex) {
  check_dims(model, ex);
  const double t = ex.y * simd::dot(model.weights.data(), ex.x.data(), ex.x.size());
  return margin_loss(task.family, t);
}

std::vector<double> example_gradient(const TaskSpec& task, const Model& model, ExampleView ex) {
  check_dims(model, ex);
  const double t = ex.y * simd::dot(model.weights.data(), ex.x.data(), ex.x.size());
  const double c = margin_coefficient(task.family, t, ex.y);
  std::vector<double> g(ex.x.size(), 0.0);
  if (c != 0.0)
    for (std::size_t j = 0; j < g.size(); ++j) g[j] = c * ex.x[j];
  return g;
}

double regularizer_value(const TaskSpec& task, std::span<const double> w) {
  double acc = 0.0;
  switch (task.reg) {
    case Regularizer::kNone:
      return 0.0;
    case Regularizer::kL1:
      for (double v : w) acc += std::fabs(v);
      break;
    case Regularizer::kL2:
      for (double v : w) acc += v * v;
      break;
  }
  return task.mu * acc;
}

void regularizer_subgradient_into(const TaskSpec& task, std::span<const double> w, std::span<double> out) {
  switch (task.reg) {
    case Regularizer::kNone:
      for (std::size_t j = 0; j < w.size(); ++j) out[j] = 0.0;
      break;
    case Regularizer::kL1:
      for (std::size_t j = 0; j < w.size(); ++j) {
        const double v = w[j];
        out[j] = v > 0.0 ? task.mu : (v < 0.0 ? -task.mu : 0.0);
      }
      break;
    case Regularizer::kL2:
      for (std::size_t j = 0; j < w.size(); ++j) out[j] = 2.0 * task.mu * w[j];
      break;
  }
}

std::vector<double> regularizer_subgradient(const TaskSpec& task, std::span<const double> w) {
  std::vector<double> out(w.size(), 0.0);
  regularizer_subgradient_into(task, w, out);
  return out;
}

}  // namespace specgd
