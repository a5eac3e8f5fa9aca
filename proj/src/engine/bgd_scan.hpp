#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "specgd/data_store.hpp"
#include "specgd/detail/aligned.hpp"
#include "specgd/engine.hpp"
#include "specgd/estimators.hpp"

namespace specgd::engine {

/// One shared pass evaluating candidates w_i = base - alpha_i * direction.
///
/// Candidate margins are formed as y * (u - alpha_i * v) with u = base . x and
/// v = direction . x, so the per-row cost of the dot products does not grow
/// with the number of candidates. Every block produces fresh partial sums
/// (rows in order, gradient restarted every kSubBlockRows rows) and partials
/// are folded into the totals in scan order. Neither the worker count nor the
/// set of other active candidates changes any candidate's bits.
class BgdScan {
 public:
  BgdScan(const TaskSpec& task, const Dataset& ds, std::span<const double> base, std::span<const double> direction,
          std::span<const double> steps, std::uint64_t start_block, const ExecOptions& exec, bool want_gradient,
          bool want_squares);

  std::size_t size() const noexcept { return steps_.size(); }
  double step(std::size_t i) const noexcept { return steps_[i]; }
  std::uint64_t blocks_done() const noexcept { return done_blocks_; }
  std::uint64_t total_blocks() const noexcept { return ds_->num_blocks(); }
  std::uint64_t examples() const noexcept { return n_; }
  bool done() const noexcept { return done_blocks_ == ds_->num_blocks(); }

  /// Processes scan positions up to (not including) `position`.
  void advance_to(std::uint64_t position);

  void deactivate(std::size_t i);
  bool active(std::size_t i) const noexcept { return active_[i]; }
  const std::vector<std::size_t>& active_list() const noexcept { return act_; }

  const Model& candidate(std::size_t i) const noexcept { return models_[i]; }
  /// Loss of the objective (sample part scaled, regularizer exact).
  EstimateReport loss_report(std::size_t i) const;
  GradientEstimate gradient_report(std::size_t i) const;
  /// Scaled gradient sum plus the regularizer subgradient; exact after a
  /// full scan. Throws NumericError on a non-finite component.
  std::vector<double> gradient(std::size_t i) const;

 private:
  struct Slot {
    std::vector<double> loss_sum;
    std::vector<double> loss_sq;
    detail::AlignedDoubles grad;
    detail::AlignedDoubles grad_sq;
  };
  struct Scratch {
    std::vector<double> coef;
    std::vector<double> u;
    std::vector<double> v;
  };

  void process_block(const BlockView& b, Scratch& sc, Slot& slot) const;
  void fold(const Slot& slot);
  void prepare(Slot& slot) const;

  TaskSpec task_;
  const Dataset* ds_;
  std::size_t d_;
  std::size_t stride_;
  detail::AlignedDoubles base_;
  detail::AlignedDoubles dir_;
  bool has_dir_;
  std::vector<double> steps_;
  std::vector<Model> models_;
  std::vector<double> reg_value_;
  std::vector<std::vector<double>> reg_grad_;
  std::uint64_t start_;
  std::uint32_t workers_;
  bool want_grad_;
  bool want_sq_;

  std::vector<bool> active_;
  std::vector<std::size_t> act_;
  std::vector<double> act_steps_;

  std::uint64_t done_blocks_ = 0;
  std::uint64_t n_ = 0;
  std::vector<double> loss_sum_;
  std::vector<double> loss_sq_;
  detail::AlignedDoubles grad_;
  detail::AlignedDoubles grad_sq_;

  std::vector<BlockReader> readers_;
  std::vector<Scratch> scratch_;
  std::vector<Slot> slots_;
};

/// Positions (in blocks) at which estimates are examined.
class CheckPoints {
 public:
  CheckPoints(std::uint64_t blocks, const CheckSchedule& schedule, double eps);

  std::uint64_t next() const noexcept { return next_; }
  /// Moves past the current check given the best loss estimate seen there.
  void passed(double best_loss);

 private:
  std::uint64_t blocks_;
  CheckSchedule schedule_;
  double eps_;
  std::uint64_t next_;
  std::uint64_t gap_;
  bool has_prev_ = false;
  double prev_ = 0.0;
};

/// w - alpha * g, one rounding per component.
std::vector<double> step_weights(std::span<const double> w, std::span<const double> g, double alpha);

}  // namespace specgd::engine
