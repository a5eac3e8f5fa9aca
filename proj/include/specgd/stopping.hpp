#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "specgd/estimators.hpp"

namespace specgd {

struct StoppingConfig {
  /// Per-estimator relative tolerance. eps <= 0 is unreachable: nothing is
  /// pruned and no pass ends early.
  double eps = 0.05;
  std::uint32_t m_min_converged = 2;
  double beta = 0.01;
  /// Slack for the approximate rule, as a fraction of the largest |estimate|.
  double overlap_eps = 0.05;
  bool containment = true;

  bool reachable() const noexcept { return eps > 0.0; }
};

struct PruneRules {
  bool approximate = true;
  bool containment = true;
};

struct PruneVerdict {
  std::vector<std::size_t> surviving;
  std::vector<std::size_t> discarded_exact;
  std::vector<std::size_t> discarded_approx;

  bool survives(std::size_t i) const noexcept;
};

/// Sum over components of the relative interval width, compared with d * eps.
/// Components with fewer than two samples never pass.
bool stop_gradient(std::span<const EstimateReport> g, double eps);

/// Dominance pruning over loss intervals. A candidate is only ever discarded
/// in favor of one that precedes it in (estimate, index) order, so the
/// relation is acyclic, ties keep the lower index and one candidate always
/// survives. Throws StructuralError on empty input.
PruneVerdict stop_loss(std::span<const EstimateReport> losses, double overlap_eps, PruneRules rules = {});

/// Converged-snapshot agreement test.
bool stop_igd_loss(std::span<const EstimateReport> snapshots, double eps, std::uint32_t m, double beta);

struct CombinedDecision {
  bool stop = false;
  std::size_t best = 0;
  PruneVerdict verdict;
  /// Per input candidate: gradient passes stop_gradient.
  std::vector<bool> gradient_converged;
};

/// Exact-rule pruning while more than one candidate's gradient is
/// unconverged, full rules afterwards; stops once a single candidate with a
/// converged gradient remains.
CombinedDecision stop_combined(std::span<const GradientEstimate> gradients, std::span<const EstimateReport> losses,
                               const StoppingConfig& cfg);

}  // namespace specgd
