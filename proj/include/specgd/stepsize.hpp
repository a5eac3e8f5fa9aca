#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace specgd {

/// Log-normal distribution over step sizes.
struct StepDistribution {
  double mu_log = 0.0;
  double sigma_log = 1.0;
  double kappa = 1.0;
  double sigma_floor = 0.05;

  /// Centered on alpha0 (mu_log = ln alpha0).
  static StepDistribution around(double alpha0, double sigma_log = 1.0, double kappa = 1.0);
};

struct StepObservation {
  double alpha = 0.0;
  double loss = 0.0;
};

/// s draws of exp(N(mu_log, sigma_log^2)), sorted descending.
std::vector<double> sample_steps(const StepDistribution& dist, std::size_t s, std::uint64_t seed);

/// w_i = (L_max - L_i) / sum_j (L_max - L_j), uniform when all losses are equal.
std::vector<double> loss_weights(std::span<const double> losses);

/// Kappa-weighted blend of the prior with the loss-weighted mean and
/// variance of ln(alpha). Throws StructuralError on empty input and
/// ConfigError on a non-positive alpha or non-finite loss.
StepDistribution bayes_update(const StepDistribution& dist, std::span<const StepObservation> obs);

/// Runtime choice of the speculation degree from iteration timing.
struct SpeculationController {
  std::uint32_t s = 1;
  std::uint32_t s_max = 32;
  double growth_threshold = 0.10;
  double shrink_threshold = 0.25;
  double baseline_ms = 0.0;
  bool has_baseline = false;
  bool growing = true;
};

/// Feeds the time of the iteration that just ran with ctl.s and returns the
/// next s. The first call records the baseline.
std::uint32_t adapt_s(SpeculationController& ctl, double last_iter_ms);

/// 2-D normal over (step size, batch size).
struct StepBatchDistribution {
  std::array<double, 2> mean = {0.1, 1000.0};
  std::array<std::array<double, 2>, 2> cov = {{{0.1, 10.0}, {10.0, 10000.0}}};
  double kappa = 1.0;
};

struct StepBatch {
  double alpha = 0.0;
  std::uint64_t batch = 1;
};

struct StepBatchObservation {
  StepBatch point;
  double loss = 0.0;
};

/// Lower Cholesky factor (l11, l21, l22). Positive semi-definite input with a
/// zero variance is accepted; anything else throws NumericError.
std::array<double, 3> cholesky2(const std::array<std::array<double, 2>, 2>& cov);

/// s raw (step, batch) draws from the 2-D normal via Cholesky, before any
/// clamping or rounding.
std::vector<std::array<double, 2>> draw_step_batch_normal(const StepBatchDistribution& dist, std::size_t s,
                                                          std::uint64_t seed);

/// The draws of draw_step_batch_normal with the same seed; alpha >= 1e-8, batch rounded into [1, n_examples].
std::vector<StepBatch> sample_step_batch(const StepBatchDistribution& dist, std::size_t s, std::uint64_t n_examples,
                                         std::uint64_t seed);

StepBatchDistribution bayes_update_2d(const StepBatchDistribution& dist, std::span<const StepBatchObservation> obs);

}  // namespace specgd
