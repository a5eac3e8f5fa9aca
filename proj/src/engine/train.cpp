#include <chrono>
#include <cmath>
#include <optional>

#include "engine/bgd_scan.hpp"
#include "specgd/detail/seed.hpp"
#include "specgd/engine.hpp"
#include "specgd/errors.hpp"

namespace specgd {

namespace {

enum Purpose : std::uint64_t { kStartBlock = 1, kSteps = 2 };

bool finite_positive(double v) { return v > 0.0 && std::isfinite(v); }

double since_ms(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

IterationMetrics metrics_from(std::uint64_t iter, const EstimateReport& loss, std::uint64_t examples,
                              std::uint64_t n, std::size_t s, double alpha) {
  IterationMetrics m;
  m.iter = iter;
  m.examples_seen = examples;
  m.frac_scanned = static_cast<double>(examples) / static_cast<double>(n);
  m.s_used = static_cast<std::uint32_t>(s);
  m.selected_alpha = alpha;
  m.loss_est = loss.estimate;
  m.loss_halfwidth = loss.half_width;
  m.loss_exact = loss.exact();
  return m;
}

EstimateReport exact_report(double loss, std::uint64_t n) {
  EstimateReport r;
  r.estimate = loss;
  r.n_seen = n;
  r.population = n;
  return r;
}

// Candidate steps for one iteration: a fixed list, or draws from the
// current distribution.
class StepSource {
 public:
  explicit StepSource(const TrainConfig& cfg)
      : cfg_(cfg), dist_(StepDistribution::around(cfg.alpha0, cfg.sigma_log, cfg.kappa)), batch_(cfg.step_batch) {
    ctl_.s = cfg.step_list.empty() ? cfg.s_initial : static_cast<std::uint32_t>(cfg.step_list.size());
    ctl_.s_max = std::max(cfg.s_max, ctl_.s);
  }

  std::vector<double> steps(std::uint64_t iter) const {
    if (!cfg_.step_list.empty()) return cfg_.step_list;
    return sample_steps(dist_, ctl_.s, detail::derive_seed(cfg_.seed, kSteps, iter));
  }

  std::vector<StepBatch> pairs(std::uint64_t iter, std::uint64_t n) const {
    return sample_step_batch(batch_, ctl_.s, n, detail::derive_seed(cfg_.seed, kSteps, iter));
  }

  void observe(std::span<const double> alphas, std::span<const EstimateReport> losses) {
    if (!cfg_.step_list.empty()) return;
    std::vector<StepObservation> obs;
    for (std::size_t i = 0; i < alphas.size(); ++i)
      if (finite_positive(alphas[i]) && losses[i].n_seen > 0 && std::isfinite(losses[i].estimate))
        obs.push_back({alphas[i], losses[i].estimate});
    if (!obs.empty()) dist_ = bayes_update(dist_, obs);
  }

  void observe_pairs(std::span<const StepBatch> pairs, std::span<const EstimateReport> losses) {
    std::vector<StepBatchObservation> obs;
    for (std::size_t i = 0; i < pairs.size(); ++i)
      if (finite_positive(pairs[i].alpha) && losses[i].n_seen > 0 && std::isfinite(losses[i].estimate))
        obs.push_back({pairs[i], losses[i].estimate});
    if (!obs.empty()) batch_ = bayes_update_2d(batch_, obs);
  }

  void timed(double ms) {
    if (cfg_.adaptive_s && cfg_.step_list.empty()) adapt_s(ctl_, ms);
  }

 private:
  const TrainConfig& cfg_;
  StepDistribution dist_;
  StepBatchDistribution batch_;
  SpeculationController ctl_;
};

class Driver {
 public:
  Driver(const TrainConfig& cfg, const Dataset& ds, const TaskSpec& task, const MetricsSink& sink)
      : cfg_(cfg), ds_(ds), task_(task), sink_(sink), exec_{cfg.workers}, source_(cfg) {
    model_ = cfg.initial.dim() == 0 ? Model(ds.dim()) : cfg.initial;
  }

  TrainResult run() {
    TrainResult out;
    if (cfg_.max_iters == 0) {
      out.model = model_;
      return out;
    }
    if (cfg_.method == Method::kBgd)
      bgd(out);
    else
      igd(out);
    return out;
  }

 private:
  std::uint64_t start_block(std::uint64_t iter) const {
    return detail::derive_seed(cfg_.seed, kStartBlock, iter) % ds_.num_blocks();
  }

  double plain_step(std::uint64_t iter) const {
    return cfg_.alpha0 * std::pow(cfg_.decay, static_cast<double>(iter - 1));
  }

  // Records one iteration; true when the loss change meets the tolerance.
  bool emit(TrainResult& out, IterationMetrics m) {
    if (!std::isfinite(m.loss_est)) throw NumericError("loss is not finite at iteration " + std::to_string(m.iter));
    out.metrics.push_back(m);
    if (sink_) sink_(m);
    const bool converged = prev_loss_ && std::fabs(m.loss_est - *prev_loss_) <= cfg_.loss_delta_tol * std::fabs(*prev_loss_);
    prev_loss_ = m.loss_est;
    return converged;
  }

  void bgd(TrainResult& out) {
    const std::uint64_t n = ds_.size();
    std::vector<double> gradient;
    for (std::uint64_t k = 1; k <= cfg_.max_iters; ++k) {
      const auto t0 = std::chrono::steady_clock::now();
      const std::uint64_t start = start_block(k);
      IterationMetrics m;
      if (cfg_.mode == Mode::kPlain) {
        const double alpha = plain_step(k);
        BgdIterateResult r = bgd_iterate(model_, task_, ds_, alpha, start, exec_);
        model_ = std::move(r.model);
        m = metrics_from(k, exact_report(r.loss, n), n, n, 1, alpha);
      } else if (cfg_.mode == Mode::kLineSearch) {
        const LineSearchResult r = line_search_baseline(model_, task_, ds_, cfg_.c1, cfg_.rho, cfg_.alpha0, start, exec_);
        model_ = r.model;
        m = metrics_from(k, exact_report(r.loss, n), n * r.passes, n, 1, r.alpha);
      } else if (k == 1) {
        // No gradient yet: the first pass evaluates the starting model.
        const BgdEpochResult r = cfg_.mode == Mode::kApproximate
                                     ? approximate_bgd_epoch(task_, ds_, model_, {}, {}, cfg_.stopping, cfg_.checks, start, exec_)
                                     : evaluate_model(task_, ds_, model_, start, exec_);
        gradient = r.gradient;
        m = metrics_from(k, r.loss, r.examples, n, 1, 0.0);
      } else {
        const std::vector<double> steps = source_.steps(k);
        const BgdEpochResult r =
            cfg_.mode == Mode::kApproximate
                ? approximate_bgd_epoch(task_, ds_, model_, gradient, steps, cfg_.stopping, cfg_.checks, start, exec_)
                : speculative_bgd_epoch(task_, ds_, model_, gradient, steps, start, exec_);
        model_ = r.model;
        model_.iter = k - 1;
        gradient = r.gradient;
        m = metrics_from(k, r.loss, r.examples, n, steps.size(), steps[r.selected]);
        source_.observe(steps, r.candidate_losses);
      }
      m.wall_ms = since_ms(t0);
      if (k > 1) source_.timed(m.wall_ms);
      if (emit(out, m)) break;
    }
    out.model = model_;
  }

  void igd(TrainResult& out) {
    const std::uint64_t n = ds_.size();
    IgdState state = IgdState::initial(model_);
    for (std::uint64_t k = 1; k <= cfg_.max_iters; ++k) {
      const auto t0 = std::chrono::steady_clock::now();
      const std::uint64_t start = start_block(k);
      IgdEpochResult r;
      std::size_t s = 0;
      if (cfg_.method == Method::kMinibatch) {
        const std::vector<StepBatch> pairs = source_.pairs(k, n);
        s = pairs.size();
        r = minibatch_epoch(task_, ds_, state, pairs, cfg_.discipline, start, exec_);
        source_.observe_pairs(state.origin, r.original_losses);
      } else {
        const std::vector<double> steps = cfg_.mode == Mode::kPlain ? std::vector<double>{plain_step(k)} : source_.steps(k);
        s = steps.size();
        if (cfg_.mode == Mode::kApproximate) {
          r = approximate_igd_epoch(task_, ds_, state, steps, cfg_.discipline, cfg_.stopping, cfg_.checks, start,
                                    exec_, {cfg_.intra_sync});
        } else {
          r = speculative_igd_epoch(task_, ds_, state, steps, cfg_.discipline, start, exec_);
        }
        // Losses of the originals are those of the previous iteration's steps.
        std::vector<double> alphas;
        for (const StepBatch& o : state.origin) alphas.push_back(o.alpha);
        if (cfg_.mode != Mode::kPlain) source_.observe(alphas, r.original_losses);
      }
      IterationMetrics m = metrics_from(k, r.original_losses[r.selected], r.examples, n, s,
                                        state.origin[r.selected].alpha);
      state = std::move(r.next);
      m.wall_ms = since_ms(t0);
      if (k > 1) source_.timed(m.wall_ms);
      if (emit(out, m)) break;
    }
    out.model = best_of(state);
  }

  // The state holds one model per step; the exact loss picks among several.
  Model best_of(const IgdState& state) const {
    if (state.originals.size() == 1) return state.originals.front();
    std::size_t best = 0;
    double best_loss = 0.0;
    for (std::size_t i = 0; i < state.originals.size(); ++i) {
      const double l = evaluate_model(task_, ds_, state.originals[i], 0, exec_).loss.estimate;
      if (i == 0 || l < best_loss) {
        best = i;
        best_loss = l;
      }
    }
    return state.originals[best];
  }

  const TrainConfig& cfg_;
  const Dataset& ds_;
  const TaskSpec& task_;
  const MetricsSink& sink_;
  ExecOptions exec_;
  StepSource source_;
  Model model_;
  std::optional<double> prev_loss_;
};

}  // namespace

void validate(const TrainConfig& cfg, const Dataset& ds) {
  if (ds.size() == 0) throw ConfigError("dataset is empty");
  if (!(cfg.loss_delta_tol >= 0.0) || !std::isfinite(cfg.loss_delta_tol))
    throw ConfigError("loss tolerance must be finite and >= 0");
  if (cfg.s_initial < 1) throw ConfigError("the number of steps must be at least 1");
  if (cfg.adaptive_s && cfg.s_max < cfg.s_initial) throw ConfigError("s_max must be at least the initial s");
  if (!finite_positive(cfg.alpha0)) throw ConfigError("alpha0 must be finite and > 0");
  if (!finite_positive(cfg.decay)) throw ConfigError("decay must be finite and > 0");
  if (!finite_positive(cfg.sigma_log)) throw ConfigError("sigma_log must be finite and > 0");
  if (!(cfg.kappa > 0.0)) throw ConfigError("kappa must be > 0");
  for (double a : cfg.step_list)
    if (!finite_positive(a)) throw ConfigError("listed steps must be finite and > 0");
  if (cfg.workers < 1) throw ConfigError("workers must be at least 1");
  if (cfg.workers > ds.num_blocks()) throw ConfigError("more workers than blocks");
  if (cfg.initial.dim() != 0 && cfg.initial.dim() != ds.dim())
    throw ConfigError("initial model dimension does not match the dataset");
  if (cfg.mode == Mode::kLineSearch) {
    if (cfg.method != Method::kBgd) throw ConfigError("line search applies to BGD only");
    if (!(cfg.c1 > 0.0 && cfg.c1 < 1.0)) throw ConfigError("c1 must lie in (0, 1)");
    if (!(cfg.rho > 0.0 && cfg.rho < 1.0)) throw ConfigError("rho must lie in (0, 1)");
  }
  if (cfg.method == Method::kMinibatch && cfg.mode != Mode::kSpeculative)
    throw ConfigError("mini-batch runs are speculative only");
  if (cfg.method != Method::kMinibatch && cfg.mode == Mode::kApproximate && cfg.stopping.reachable()) {
    if (!(cfg.stopping.overlap_eps >= 0.0)) throw ConfigError("overlap_eps must be >= 0");
    if (cfg.stopping.m_min_converged < 1) throw ConfigError("m_min must be at least 1");
    if (!(cfg.stopping.beta >= 0.0)) throw ConfigError("beta must be >= 0");
  }
  if (!(cfg.checks.first_fraction > 0.0 && cfg.checks.first_fraction <= 1.0))
    throw ConfigError("first check fraction must lie in (0, 1]");
  if (!(cfg.checks.growth > 1.0)) throw ConfigError("check growth must be > 1");
}

TrainResult train(const TrainConfig& cfg, const Dataset& ds, const TaskSpec& task, const MetricsSink& sink) {
  validate(task);
  validate(cfg, ds);
  return Driver(cfg, ds, task, sink).run();
}

}  // namespace specgd
