#include <algorithm>
#include <cmath>
#include <limits>

#include "engine/bgd_scan.hpp"
#include "specgd/engine.hpp"
#include "specgd/errors.hpp"

namespace specgd {

using engine::BgdScan;
using engine::CheckPoints;

namespace {

const std::vector<double> kAlone = {0.0};

BgdEpochResult finish(const BgdScan& scan, std::size_t best, std::vector<EstimateReport> last, bool early) {
  BgdEpochResult r;
  r.selected = best;
  r.model = scan.candidate(best);
  r.gradient = scan.gradient(best);
  r.loss = scan.loss_report(best);
  for (std::size_t i = 0; i < scan.size(); ++i) {
    r.pruned.push_back(!scan.active(i));
    if (scan.active(i)) last[i] = scan.loss_report(i);
  }
  r.candidate_losses = std::move(last);
  r.examples = scan.examples();
  r.early = early;
  return r;
}

// NaN losses rank last.
double ordered(double l) { return std::isnan(l) ? std::numeric_limits<double>::infinity() : l; }

// Minimum exact loss among active candidates; ties go to the smaller step.
std::size_t select(const BgdScan& scan) {
  std::size_t best = scan.active_list().front();
  double best_loss = ordered(scan.loss_report(best).estimate);
  for (std::size_t i : scan.active_list()) {
    const double l = ordered(scan.loss_report(i).estimate);
    if (l < best_loss || (l == best_loss && scan.step(i) < scan.step(best))) {
      best = i;
      best_loss = l;
    }
  }
  return best;
}

}  // namespace

BgdEpochResult evaluate_model(const TaskSpec& task, const Dataset& ds, const Model& model,
                              std::uint64_t start_block, const ExecOptions& exec) {
  BgdScan scan(task, ds, model.weights, {}, kAlone, start_block, exec, true, false);
  scan.advance_to(scan.total_blocks());
  return finish(scan, 0, std::vector<EstimateReport>(1), false);
}

BgdIterateResult bgd_iterate(const Model& model, const TaskSpec& task, const Dataset& ds, double alpha,
                             std::uint64_t start_block, const ExecOptions& exec) {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("step size must be finite and >= 0");
  BgdEpochResult e = evaluate_model(task, ds, model, start_block, exec);
  BgdIterateResult r;
  r.model = Model(engine::step_weights(model.weights, e.gradient, alpha), model.iter + 1);
  r.loss = e.loss.estimate;
  r.gradient = std::move(e.gradient);
  return r;
}

BgdEpochResult speculative_bgd_epoch(const TaskSpec& task, const Dataset& ds, const Model& base,
                                     std::span<const double> direction, std::span<const double> steps,
                                     std::uint64_t start_block, const ExecOptions& exec) {
  BgdScan scan(task, ds, base.weights, direction, steps, start_block, exec, true, false);
  scan.advance_to(scan.total_blocks());
  return finish(scan, select(scan), std::vector<EstimateReport>(scan.size()), false);
}

BgdEpochResult approximate_bgd_epoch(const TaskSpec& task, const Dataset& ds, const Model& base,
                                     std::span<const double> direction, std::span<const double> steps,
                                     const StoppingConfig& stopping, const CheckSchedule& schedule,
                                     std::uint64_t start_block, const ExecOptions& exec) {
  if (steps.empty()) steps = kAlone;
  BgdScan scan(task, ds, base.weights, direction, steps, start_block, exec, true, true);
  std::vector<EstimateReport> last(scan.size());
  if (!stopping.reachable()) {
    scan.advance_to(scan.total_blocks());
    return finish(scan, select(scan), std::move(last), false);
  }
  CheckPoints checks(scan.total_blocks(), schedule, stopping.eps);
  while (true) {
    scan.advance_to(checks.next());
    if (scan.done()) break;
    if (scan.examples() < 2) {
      checks.passed(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    const std::vector<std::size_t> act = scan.active_list();
    std::vector<GradientEstimate> grads;
    std::vector<EstimateReport> losses;
    for (std::size_t i : act) {
      grads.push_back(scan.gradient_report(i));
      losses.push_back(scan.loss_report(i));
      last[i] = losses.back();
    }
    const CombinedDecision decision = stop_combined(grads, losses, stopping);
    if (decision.stop) return finish(scan, act[decision.best], std::move(last), true);
    for (std::size_t k : decision.verdict.discarded_exact) scan.deactivate(act[k]);
    for (std::size_t k : decision.verdict.discarded_approx) scan.deactivate(act[k]);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t k : decision.verdict.surviving) best = std::min(best, losses[k].estimate);
    checks.passed(best);
  }
  return finish(scan, select(scan), std::move(last), false);
}

LineSearchResult line_search_baseline(const Model& model, const TaskSpec& task, const Dataset& ds, double c1,
                                      double rho, double alpha0, std::uint64_t start_block,
                                      const ExecOptions& exec) {
  if (!(c1 > 0.0 && c1 < 1.0)) throw ConfigError("line search: c1 must lie in (0, 1)");
  if (!(rho > 0.0 && rho < 1.0)) throw ConfigError("line search: rho must lie in (0, 1)");
  if (!(alpha0 > 0.0) || !std::isfinite(alpha0)) throw ConfigError("line search: initial step must be > 0");
  constexpr int kMaxBacktracks = 50;
  const BgdEpochResult here = evaluate_model(task, ds, model, start_block, exec);
  const double f0 = here.loss.estimate;
  double g2 = 0.0;
  for (double g : here.gradient) g2 += g * g;
  LineSearchResult r;
  r.passes = 1;
  double alpha = alpha0;
  for (int k = 0; k <= kMaxBacktracks; ++k, alpha *= rho) {
    const double steps[1] = {alpha};
    BgdScan scan(task, ds, model.weights, here.gradient, steps, start_block, exec, false, false);
    scan.advance_to(scan.total_blocks());
    ++r.passes;
    const double f = scan.loss_report(0).estimate;
    if (f <= f0 - c1 * alpha * g2) {
      r.model = scan.candidate(0);
      r.model.iter = model.iter + 1;
      r.loss = f;
      r.alpha = alpha;
      return r;
    }
  }
  throw StepFailureError("line search: no sufficient decrease after " + std::to_string(kMaxBacktracks) +
                         " backtracks");
}

}  // namespace specgd
