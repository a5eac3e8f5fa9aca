#include "specgd/stepsize.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "specgd/errors.hpp"

namespace specgd {

StepDistribution StepDistribution::around(double alpha0, double sigma_log, double kappa) {
  if (!(alpha0 > 0.0)) throw ConfigError("initial step size must be > 0");
  StepDistribution d;
  d.mu_log = std::log(alpha0);
  d.sigma_log = sigma_log;
  d.kappa = kappa;
  return d;
}

std::vector<double> sample_steps(const StepDistribution& dist, std::size_t s, std::uint64_t seed) {
  if (s == 0) throw ConfigError("need at least one step size");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> out(s);
  for (double& a : out) a = std::exp(dist.mu_log + dist.sigma_log * normal(rng));
  std::sort(out.begin(), out.end(), std::greater<>());
  return out;
}

std::vector<double> loss_weights(std::span<const double> losses) {
  if (losses.empty()) throw StructuralError("no losses to weight");
  const double worst = *std::max_element(losses.begin(), losses.end());
  std::vector<double> w(losses.size());
  double total = 0.0;
  for (std::size_t i = 0; i < losses.size(); ++i) total += w[i] = worst - losses[i];
  if (!(total > 0.0)) {
    std::fill(w.begin(), w.end(), 1.0 / static_cast<double>(w.size()));
    return w;
  }
  for (double& v : w) v /= total;
  return w;
}

StepDistribution bayes_update(const StepDistribution& dist, std::span<const StepObservation> obs) {
  if (obs.empty()) throw StructuralError("bayes_update: no observations");
  std::vector<double> losses;
  losses.reserve(obs.size());
  for (const StepObservation& o : obs) {
    if (!(o.alpha > 0.0)) throw ConfigError("bayes_update: step sizes must be > 0");
    if (!std::isfinite(o.loss)) throw ConfigError("bayes_update: losses must be finite");
    losses.push_back(o.loss);
  }
  if (std::isinf(dist.kappa)) return dist;
  const std::vector<double> w = loss_weights(losses);
  double m = 0.0;
  for (std::size_t i = 0; i < obs.size(); ++i) m += w[i] * std::log(obs[i].alpha);
  double v = 0.0;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const double dev = std::log(obs[i].alpha) - m;
    v += w[i] * dev * dev;
  }
  const double s_eff = static_cast<double>(obs.size());
  const double total = dist.kappa + s_eff;
  StepDistribution out = dist;
  out.mu_log = (dist.kappa * dist.mu_log + s_eff * m) / total;
  const double var = (dist.kappa * dist.sigma_log * dist.sigma_log + s_eff * v) / total;
  out.sigma_log = std::sqrt(std::max(dist.sigma_floor * dist.sigma_floor, var));
  return out;
}

std::uint32_t adapt_s(SpeculationController& ctl, double last_iter_ms) {
  if (!ctl.has_baseline) {
    ctl.baseline_ms = last_iter_ms;
    ctl.has_baseline = true;
  }
  const double base = ctl.baseline_ms;
  if (ctl.growing) {
    if (last_iter_ms <= (1.0 + ctl.growth_threshold) * base) {
      ctl.s = std::min(ctl.s_max, ctl.s * 2);
    } else {
      ctl.s = std::max<std::uint32_t>(1, ctl.s / 2);
      ctl.growing = false;
    }
  } else if (last_iter_ms > (1.0 + ctl.shrink_threshold) * base) {
    ctl.s = std::max<std::uint32_t>(1, ctl.s / 2);
  }
  return ctl.s;
}

std::array<double, 3> cholesky2(const std::array<std::array<double, 2>, 2>& cov) {
  const double c11 = cov[0][0];
  const double c21 = cov[1][0];
  const double c22 = cov[1][1];
  if (!(c11 >= 0.0) || !(c22 >= 0.0) || !std::isfinite(c21) || cov[0][1] != c21)
    throw NumericError("covariance is not symmetric positive semi-definite");
  const double l11 = std::sqrt(c11);
  double l21 = 0.0;
  if (l11 > 0.0) {
    l21 = c21 / l11;
  } else if (c21 != 0.0) {
    throw NumericError("covariance is not positive semi-definite");
  }
  double r = c22 - l21 * l21;
  if (r < 0.0) {
    if (r < -1e-12 * std::max(1.0, c22)) throw NumericError("covariance is not positive semi-definite");
    r = 0.0;
  }
  return {l11, l21, std::sqrt(r)};
}

std::vector<std::array<double, 2>> draw_step_batch_normal(const StepBatchDistribution& dist, std::size_t s,
                                                          std::uint64_t seed) {
  if (s == 0) throw ConfigError("need at least one (step, batch) pair");
  const auto [l11, l21, l22] = cholesky2(dist.cov);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::array<double, 2>> out(s);
  for (auto& p : out) {
    const double z1 = normal(rng);
    const double z2 = normal(rng);
    p = {dist.mean[0] + l11 * z1, dist.mean[1] + l21 * z1 + l22 * z2};
  }
  return out;
}

std::vector<StepBatch> sample_step_batch(const StepBatchDistribution& dist, std::size_t s, std::uint64_t n_examples,
                                         std::uint64_t seed) {
  if (n_examples == 0) throw ConfigError("batch upper bound must be >= 1");
  const auto raw = draw_step_batch_normal(dist, s, seed);
  std::vector<StepBatch> out(s);
  const double top = static_cast<double>(n_examples);
  for (std::size_t i = 0; i < s; ++i) {
    out[i].alpha = std::max(raw[i][0], 1e-8);
    out[i].batch = static_cast<std::uint64_t>(std::clamp(std::round(raw[i][1]), 1.0, top));
  }
  return out;
}

StepBatchDistribution bayes_update_2d(const StepBatchDistribution& dist, std::span<const StepBatchObservation> obs) {
  if (obs.empty()) throw StructuralError("bayes_update_2d: no observations");
  if (std::isinf(dist.kappa)) return dist;
  std::vector<double> losses;
  for (const StepBatchObservation& o : obs) losses.push_back(o.loss);
  const std::vector<double> w = loss_weights(losses);
  std::array<double, 2> m = {0.0, 0.0};
  for (std::size_t i = 0; i < obs.size(); ++i) {
    m[0] += w[i] * obs[i].point.alpha;
    m[1] += w[i] * static_cast<double>(obs[i].point.batch);
  }
  std::array<std::array<double, 2>, 2> c = {{{0.0, 0.0}, {0.0, 0.0}}};
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const double da = obs[i].point.alpha - m[0];
    const double db = static_cast<double>(obs[i].point.batch) - m[1];
    c[0][0] += w[i] * da * da;
    c[0][1] += w[i] * da * db;
    c[1][1] += w[i] * db * db;
  }
  c[1][0] = c[0][1];
  const double s_eff = static_cast<double>(obs.size());
  const double total = dist.kappa + s_eff;
  StepBatchDistribution out = dist;
  for (int a = 0; a < 2; ++a) {
    out.mean[a] = (dist.kappa * dist.mean[a] + s_eff * m[a]) / total;
    for (int b = 0; b < 2; ++b) out.cov[a][b] = (dist.kappa * dist.cov[a][b] + s_eff * c[a][b]) / total;
  }
  auto positive_definite = [](const std::array<std::array<double, 2>, 2>& k) {
    return k[0][0] > 0.0 && k[0][0] * k[1][1] - k[0][1] * k[1][0] > 0.0;
  };
  for (double jitter = 1e-9; !positive_definite(out.cov) && jitter < 1e6; jitter *= 10.0) {
    out.cov[0][0] += jitter;
    out.cov[1][1] += jitter;
  }
  return out;
}

}  // namespace specgd
