#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "specgd/data_store.hpp"
#include "specgd/estimators.hpp"
#include "specgd/stepsize.hpp"
#include "specgd/stopping.hpp"
#include "specgd/task_math.hpp"

namespace specgd {

enum class Method { kBgd, kIgd, kMinibatch };
enum class Mode { kPlain, kSpeculative, kApproximate, kLineSearch };
enum class Discipline { kMerge, kLock, kNoLock };

/// Estimation checkpoints: the first after `first_fraction` of the data,
/// then at geometrically growing positions. When the best loss estimate
/// moves by less than densify_below * eps (relative) between two checks,
/// the next gap is halved instead.
struct CheckSchedule {
  double first_fraction = 0.01;
  double growth = 2.0;
  bool densify = true;
  double densify_below = 0.1;
};

/// How a pass is spread over partitions. Partition p owns the blocks with
/// index % workers == p; partial results are folded in scan order, so the
/// numbers do not depend on the worker count.
struct ExecOptions {
  std::uint32_t workers = 1;
};

struct IterationMetrics {
  std::uint64_t iter = 0;
  double wall_ms = 0.0;
  std::uint64_t examples_seen = 0;
  double frac_scanned = 0.0;
  std::uint32_t s_used = 0;
  double selected_alpha = 0.0;
  double loss_est = 0.0;
  double loss_halfwidth = 0.0;
  bool loss_exact = true;
};

// ---------------------------------------------------------------------------
// Batch gradient descent

/// Result of one shared scan over s candidates w_i = base - alpha_i * direction.
struct BgdEpochResult {
  std::size_t selected = 0;
  Model model;
  /// Gradient of the objective at `model`: exact after a full scan, the
  /// scaled estimate otherwise.
  std::vector<double> gradient;
  EstimateReport loss;
  /// Last loss report of every candidate, including pruned ones.
  std::vector<EstimateReport> candidate_losses;
  std::vector<bool> pruned;
  std::uint64_t examples = 0;
  bool early = false;
};

struct BgdIterateResult {
  Model model;
  double loss = 0.0;
  std::vector<double> gradient;
};

/// One full scan at `model` (gradient and exact loss), then one step.
BgdIterateResult bgd_iterate(const Model& model, const TaskSpec& task, const Dataset& ds, double alpha,
                             std::uint64_t start_block = 0, const ExecOptions& exec = {});

/// Exact loss and gradient of the objective at `model` (the alpha = 0 candidate).
BgdEpochResult evaluate_model(const TaskSpec& task, const Dataset& ds, const Model& model,
                              std::uint64_t start_block = 0, const ExecOptions& exec = {});

/// Full shared scan; selects the minimum exact loss, ties to the smaller step.
/// `direction` is the objective gradient at `base`.
BgdEpochResult speculative_bgd_epoch(const TaskSpec& task, const Dataset& ds, const Model& base,
                                     std::span<const double> direction, std::span<const double> steps,
                                     std::uint64_t start_block = 0, const ExecOptions& exec = {});

/// Shared scan with online estimation, pruning and early stop. With an
/// unreachable tolerance it returns exactly what speculative_bgd_epoch does.
/// Empty `steps` evaluates `base` alone, as evaluate_model.
BgdEpochResult approximate_bgd_epoch(const TaskSpec& task, const Dataset& ds, const Model& base,
                                     std::span<const double> direction, std::span<const double> steps,
                                     const StoppingConfig& stopping, const CheckSchedule& schedule,
                                     std::uint64_t start_block = 0, const ExecOptions& exec = {});

struct LineSearchResult {
  Model model;
  double loss = 0.0;
  double alpha = 0.0;
  std::uint32_t passes = 0;
};

/// Backtracking search along the negative gradient with the sufficient
/// decrease test, at most 50 backtracks. `loss` is the objective at the
/// accepted model.
LineSearchResult line_search_baseline(const Model& model, const TaskSpec& task, const Dataset& ds, double c1,
                                      double rho, double alpha0, std::uint64_t start_block = 0,
                                      const ExecOptions& exec = {});

// ---------------------------------------------------------------------------
// Incremental gradient descent

/// Models entering an incremental epoch, each tagged with the (step, batch)
/// that produced it (zero step for the initial model).
struct IgdState {
  std::vector<Model> originals;
  std::vector<StepBatch> origin;

  static IgdState initial(const Model& m);
};

struct IgdEpochResult {
  /// The children of the selected original, one per step.
  IgdState next;
  std::size_t selected = 0;
  std::vector<EstimateReport> original_losses;
  std::vector<bool> pruned;
  std::uint64_t examples = 0;
  bool early = false;
};

/// One pass with one update per example, in scan order from start_block.
Model igd_epoch(const Model& model, const TaskSpec& task, const Dataset& ds, double alpha, Discipline discipline,
                std::uint64_t start_block = 0, const ExecOptions& exec = {});

/// Every example updates all children (original i, step l) and feeds the loss
/// of the frozen originals; keeps the children of the best original.
IgdEpochResult speculative_igd_epoch(const TaskSpec& task, const Dataset& ds, const IgdState& state,
                                     std::span<const double> steps, Discipline discipline,
                                     std::uint64_t start_block = 0, const ExecOptions& exec = {});

struct IgdApproxOptions {
  /// MERGE with several workers: average the worker copies at every check.
  bool intra_sync = false;
};

IgdEpochResult approximate_igd_epoch(const TaskSpec& task, const Dataset& ds, const IgdState& state,
                                     std::span<const double> steps, Discipline discipline,
                                     const StoppingConfig& stopping, const CheckSchedule& schedule,
                                     std::uint64_t start_block = 0, const ExecOptions& exec = {},
                                     const IgdApproxOptions& opts = {});

/// As speculative_igd_epoch, but child (i, l) steps once per group of
/// pairs[l].batch consecutive examples with the group's summed gradient.
IgdEpochResult minibatch_epoch(const TaskSpec& task, const Dataset& ds, const IgdState& state,
                               std::span<const StepBatch> pairs, Discipline discipline,
                               std::uint64_t start_block = 0, const ExecOptions& exec = {});

// ---------------------------------------------------------------------------
// Driver

struct TrainConfig {
  Method method = Method::kBgd;
  Mode mode = Mode::kSpeculative;
  Discipline discipline = Discipline::kMerge;
  std::uint32_t s_initial = 1;
  bool adaptive_s = false;
  std::uint32_t s_max = 32;
  std::uint32_t max_iters = 20;
  double loss_delta_tol = 0.0;
  StoppingConfig stopping;
  CheckSchedule checks;
  /// Center of the initial step distribution, and the PLAIN step.
  double alpha0 = 0.01;
  /// PLAIN step decay: iteration k uses alpha0 * decay^(k-1).
  double decay = 1.0;
  double sigma_log = 1.0;
  double kappa = 1.0;
  /// When set, these are the candidate steps every iteration (no sampling).
  std::vector<double> step_list;
  StepBatchDistribution step_batch;
  double c1 = 1e-4;
  double rho = 0.5;
  std::uint32_t workers = 1;
  std::uint64_t seed = 1;
  bool intra_sync = false;
  Model initial;
};

struct TrainResult {
  Model model;
  std::vector<IterationMetrics> metrics;
};

using MetricsSink = std::function<void(const IterationMetrics&)>;

/// Throws ConfigError before any scan if the configuration is inconsistent.
void validate(const TrainConfig& cfg, const Dataset& ds);

TrainResult train(const TrainConfig& cfg, const Dataset& ds, const TaskSpec& task, const MetricsSink& sink = {});

}  // namespace specgd
