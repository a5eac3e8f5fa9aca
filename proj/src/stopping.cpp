#include "specgd/stopping.hpp"

#include <algorithm>
#include <cmath>

#include "specgd/errors.hpp"

namespace specgd {

bool PruneVerdict::survives(std::size_t i) const noexcept {
  return std::find(surviving.begin(), surviving.end(), i) != surviving.end();
}

bool stop_gradient(std::span<const EstimateReport> g, double eps) {
  double err = 0.0;
  for (const EstimateReport& r : g) {
    if (r.n_seen < 2) return false;
    err += r.relative_width();
  }
  return err <= static_cast<double>(g.size()) * eps;
}

PruneVerdict stop_loss(std::span<const EstimateReport> losses, double overlap_eps, PruneRules rules) {
  if (losses.empty()) throw StructuralError("stop_loss: no candidates");
  const std::size_t s = losses.size();
  double scale = 0.0;
  for (const EstimateReport& r : losses) scale = std::max(scale, std::fabs(r.estimate));
  const double slack = overlap_eps * scale;

  auto precedes = [&](std::size_t i, std::size_t j) {
    return losses[i].estimate < losses[j].estimate || (losses[i].estimate == losses[j].estimate && i < j);
  };
  auto inside = [&](std::size_t inner, std::size_t outer) {
    return losses[outer].low() < losses[inner].low() && losses[inner].high() < losses[outer].high();
  };

  enum class Fate { kKeep, kExact, kApprox };
  std::vector<Fate> fate(s, Fate::kKeep);
  auto discard = [&](std::size_t j, Fate f) {
    if (fate[j] == Fate::kKeep || (fate[j] == Fate::kApprox && f == Fate::kExact)) fate[j] = f;
  };

  for (std::size_t i = 0; i < s; ++i) {
    for (std::size_t j = 0; j < s; ++j) {
      if (i == j) continue;
      const EstimateReport& a = losses[i];
      const EstimateReport& b = losses[j];
      if (precedes(i, j)) {
        if (a.high() <= b.low()) {
          discard(j, Fate::kExact);
        } else if (rules.approximate && a.high() <= b.low() + slack) {
          discard(j, Fate::kApprox);
        }
      }
      if (rules.containment && inside(j, i)) {
        if (b.low() >= a.estimate && precedes(i, j)) discard(j, Fate::kApprox);
        if (b.high() <= a.estimate && precedes(j, i)) discard(i, Fate::kApprox);
      }
    }
  }

  PruneVerdict v;
  for (std::size_t i = 0; i < s; ++i) {
    switch (fate[i]) {
      case Fate::kKeep: v.surviving.push_back(i); break;
      case Fate::kExact: v.discarded_exact.push_back(i); break;
      case Fate::kApprox: v.discarded_approx.push_back(i); break;
    }
  }
  return v;
}

bool stop_igd_loss(std::span<const EstimateReport> snapshots, double eps, std::uint32_t m, double beta) {
  std::size_t converged = 0;
  double lo = 0.0;
  double hi = 0.0;
  for (const EstimateReport& r : snapshots) {
    if (!(r.relative_width() <= eps)) continue;
    if (converged == 0) {
      lo = hi = r.estimate;
    } else {
      lo = std::min(lo, r.estimate);
      hi = std::max(hi, r.estimate);
    }
    ++converged;
  }
  if (converged < m || converged == 0) return false;
  return (hi - lo) / std::max(std::fabs(hi), kRelativeFloor) <= beta;
}

CombinedDecision stop_combined(std::span<const GradientEstimate> gradients, std::span<const EstimateReport> losses,
                               const StoppingConfig& cfg) {
  if (gradients.size() != losses.size()) throw StructuralError("stop_combined: candidate lists are not aligned");
  if (losses.empty()) throw StructuralError("stop_combined: no candidates");
  const std::size_t s = losses.size();
  CombinedDecision out;
  out.gradient_converged.assign(s, false);
  if (!cfg.reachable()) {
    for (std::size_t i = 0; i < s; ++i) out.verdict.surviving.push_back(i);
    return out;
  }
  std::size_t unconverged = 0;
  for (std::size_t i = 0; i < s; ++i) {
    out.gradient_converged[i] = stop_gradient(gradients[i], cfg.eps);
    if (!out.gradient_converged[i]) ++unconverged;
  }
  PruneRules rules;
  rules.approximate = unconverged <= 1;
  rules.containment = unconverged <= 1 && cfg.containment;
  out.verdict = stop_loss(losses, cfg.overlap_eps, rules);
  if (out.verdict.surviving.size() == 1 && out.gradient_converged[out.verdict.surviving.front()]) {
    out.stop = true;
    out.best = out.verdict.surviving.front();
  }
  return out;
}

}  // namespace specgd
