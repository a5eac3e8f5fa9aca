#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <memory>
#include <mutex>

#include "engine/bgd_scan.hpp"
#include "engine/parallel.hpp"
#include "simd.hpp"
#include "specgd/engine.hpp"
#include "specgd/errors.hpp"

namespace specgd {

IgdState IgdState::initial(const Model& m) { return {{m}, {StepBatch{0.0, 1}}}; }

namespace {

// NaN losses rank last.
double ordered(double l) { return std::isnan(l) ? std::numeric_limits<double>::infinity() : l; }

using engine::CheckPoints;
using simd::kSubBlockRows;

// Children are indexed k = original * L + step. Every example updates each
// active child and feeds the loss sums of the frozen originals and of the
// open snapshot. Loss sums are kept per block and folded in scan order.
class IgdRunner {
 public:
  IgdRunner(const TaskSpec& task, const Dataset& ds, const IgdState& state, std::span<const StepBatch> pairs,
            Discipline discipline, std::uint64_t start_block, const ExecOptions& exec, bool grouped,
            bool track_originals)
      : task_(task),
        ds_(&ds),
        d_(ds.dim()),
        stride_(ds.stride()),
        pairs_(pairs.begin(), pairs.end()),
        discipline_(discipline),
        start_(start_block),
        workers_(std::max<std::uint32_t>(1, exec.workers)),
        grouped_(grouped),
        track_(track_originals) {
    validate(task);
    if (state.originals.empty()) throw ConfigError("at least one original model is required");
    if (pairs_.empty()) throw ConfigError("at least one step size is required");
    if (start_block >= ds.num_blocks()) throw StructuralError("start block out of range");
    if (workers_ > ds.num_blocks()) partition(ds, workers_);
    for (const StepBatch& p : pairs_) {
      if (!(p.alpha >= 0.0) || !std::isfinite(p.alpha)) throw ConfigError("step sizes must be finite and >= 0");
      if (p.batch < 1 || p.batch > ds.size()) throw ConfigError("batch size must lie in [1, N]");
    }
    so_ = state.originals.size();
    L_ = pairs_.size();
    nchild_ = so_ * L_;
    origins_ = state.originals;

    orig_.assign(so_ * stride_, 0.0);
    for (std::size_t i = 0; i < so_; ++i) {
      const auto& w = state.originals[i].weights;
      if (w.size() != d_) throw StructuralError("model dimension does not match the dataset");
      std::copy(w.begin(), w.end(), orig_.begin() + i * stride_);
      orig_reg_.push_back(regularizer_value(task_, std::span<const double>(w)));
    }
    orig_active_.assign(so_, true);
    orig_sum_.assign(so_, 0.0);
    orig_sq_.assign(so_, 0.0);
    last_.resize(so_);
    history_.resize(nchild_);

    AlignedDoubles seeded(nchild_ * stride_, 0.0);
    for (std::size_t k = 0; k < nchild_; ++k)
      std::copy_n(orig_.begin() + (k / L_) * stride_, stride_, seeded.begin() + k * stride_);
    const bool private_copies = discipline_ == Discipline::kMerge;
    if (!private_copies) {
      shared_ = std::move(seeded);
      locks_ = std::make_unique<std::mutex[]>(nchild_);
    }
    workers_state_.resize(workers_);
    for (std::uint32_t p = 0; p < workers_; ++p) {
      Worker& w = workers_state_[p];
      w.reader = std::make_unique<BlockReader>(ds);
      if (private_copies) {
        w.own = seeded;
        w.models = w.own.data();
      } else {
        w.models = shared_.data();
      }
      w.buf.assign(stride_, 0.0);
      w.reg.assign(stride_, 0.0);
      if (grouped_) {
        w.sub.assign(nchild_ * stride_, 0.0);
        w.blk.assign(nchild_ * stride_, 0.0);
        w.grp.assign(nchild_ * stride_, 0.0);
        w.count.assign(nchild_, 0);
      }
    }
    refresh_active();
  }

  std::uint64_t total_blocks() const noexcept { return ds_->num_blocks(); }
  std::uint64_t examples() const noexcept { return n_; }
  bool done() const noexcept { return done_blocks_ == ds_->num_blocks(); }
  std::size_t steps() const noexcept { return L_; }
  const std::vector<std::size_t>& active_originals() const noexcept { return act_orig_; }

  void advance_to(std::uint64_t position) {
    const std::uint64_t total = ds_->num_blocks();
    position = std::min(position, total);
    if (position <= done_blocks_) return;
    const std::uint64_t q0 = done_blocks_;
    const std::uint64_t q1 = position;
    const std::size_t width = 2 * (act_orig_.size() + snap_child_.size());
    std::vector<double> slots((q1 - q0) * width, 0.0);
    auto block_at = [&](std::uint64_t q) { return (start_ + q) % total; };
    engine::run_workers(workers_, [&](std::uint32_t p) {
      Worker& w = workers_state_[p];
      for (std::uint64_t q = q0; q < q1; ++q) {
        const std::uint64_t b = block_at(q);
        if (b % workers_ != p) continue;
        process_block(w, w.reader->read(b), slots.data() + (q - q0) * width);
      }
    });
    const DatasetHeader& h = ds_->header();
    for (std::uint64_t q = q0; q < q1; ++q) {
      const double* slot = slots.data() + (q - q0) * width;
      for (std::size_t a = 0; a < act_orig_.size(); ++a) {
        const std::size_t i = act_orig_[a];
        orig_sum_[i] = orig_sum_[i] + slot[2 * a];
        orig_sq_[i] = orig_sq_[i] + slot[2 * a + 1];
      }
      const double* ss = slot + 2 * act_orig_.size();
      for (std::size_t m = 0; m < snap_child_.size(); ++m) {
        snap_sum_[m] = snap_sum_[m] + ss[2 * m];
        snap_sq_[m] = snap_sq_[m] + ss[2 * m + 1];
      }
      const std::uint32_t c = h.block_count(block_at(q));
      n_ += c;
      snap_n_ += c;
    }
    done_blocks_ = q1;
  }

  EstimateReport original_report(std::size_t i) const {
    EstimateReport r = report({n_, orig_sum_[i], orig_sq_[i]}, ds_->size());
    r.estimate = r.estimate + orig_reg_[i];
    return r;
  }

  void deactivate_original(std::size_t i) {
    last_[i] = original_report(i);
    orig_active_[i] = false;
    refresh_active();
  }

  /// Moves the open snapshot's reports into the per-child history.
  void close_snapshot() {
    if (snap_n_ >= 2) {
      for (std::size_t m = 0; m < snap_child_.size(); ++m) {
        EstimateReport r = report({snap_n_, snap_sum_[m], snap_sq_[m]}, ds_->size());
        r.estimate = r.estimate + snap_reg_[m];
        history_[snap_child_[m]].push_back(r);
      }
    }
    snap_child_.clear();
    snap_models_.clear();
    snap_reg_.clear();
    snap_sum_.clear();
    snap_sq_.clear();
    snap_n_ = 0;
  }

  void open_snapshot() {
    close_snapshot();
    snap_child_ = act_child_;
    snap_models_.assign(snap_child_.size() * stride_, 0.0);
    for (std::size_t m = 0; m < snap_child_.size(); ++m) {
      const std::vector<double> w = child(snap_child_[m]);
      std::copy(w.begin(), w.end(), snap_models_.begin() + m * stride_);
      snap_reg_.push_back(regularizer_value(task_, std::span<const double>(w)));
    }
    snap_sum_.assign(snap_child_.size(), 0.0);
    snap_sq_.assign(snap_child_.size(), 0.0);
  }

  const std::vector<EstimateReport>& history(std::size_t k) const { return history_[k]; }

  /// Replaces every worker copy with the example-weighted average.
  void synchronize() {
    if (discipline_ != Discipline::kMerge || workers_ == 1) return;
    for (std::size_t k : act_child_) {
      const std::vector<double> w = child(k);
      for (Worker& wk : workers_state_) std::copy(w.begin(), w.end(), wk.models + k * stride_);
    }
  }

  /// Current child model. MERGE with several workers averages the copies as
  /// w_0 + sum_{p>=1} (n_p / n) (w_p - w_0).
  std::vector<double> child(std::size_t k) const {
    const double* w0 = workers_state_[0].models + k * stride_;
    std::vector<double> out(w0, w0 + d_);
    if (discipline_ != Discipline::kMerge || workers_ == 1) return out;
    std::uint64_t n = 0;
    for (const Worker& wk : workers_state_) n += wk.seen;
    if (n == 0) return out;
    for (std::uint32_t p = 1; p < workers_; ++p) {
      const Worker& wk = workers_state_[p];
      const double share = static_cast<double>(wk.seen) / static_cast<double>(n);
      const double* wp = wk.models + k * stride_;
      for (std::size_t j = 0; j < d_; ++j) out[j] = out[j] + share * (wp[j] - w0[j]);
    }
    return out;
  }

  /// Steps every child with whatever its unfinished group holds.
  void flush_groups() {
    if (!grouped_) return;
    for (Worker& w : workers_state_)
      for (std::size_t k : act_child_)
        if (w.count[k] > 0) finish_group(w, k);
  }

  IgdEpochResult result(std::size_t selected, bool early) {
    IgdEpochResult r;
    r.selected = selected;
    r.examples = n_;
    r.early = early;
    for (std::size_t i = 0; i < so_; ++i) {
      r.pruned.push_back(!orig_active_[i]);
      r.original_losses.push_back(orig_active_[i] && track_ ? original_report(i) : last_[i]);
    }
    const std::uint64_t iter = origins_[selected].iter + 1;
    for (std::size_t l = 0; l < L_; ++l) {
      r.next.originals.emplace_back(child(selected * L_ + l), iter);
      r.next.origin.push_back(pairs_[l]);
    }
    return r;
  }

  /// Minimum full-scan loss among active originals, ties to the lower index.
  std::size_t select() const {
    std::size_t best = act_orig_.front();
    if (!track_) return best;
    double best_loss = ordered(original_report(best).estimate);
    for (std::size_t i : act_orig_) {
      const double l = ordered(original_report(i).estimate);
      if (l < best_loss) {
        best = i;
        best_loss = l;
      }
    }
    return best;
  }

 private:
  using AlignedDoubles = detail::AlignedDoubles;

  struct Worker {
    std::unique_ptr<BlockReader> reader;
    AlignedDoubles own;
    double* models = nullptr;
    AlignedDoubles buf;
    AlignedDoubles reg;
    AlignedDoubles sub;
    AlignedDoubles blk;
    AlignedDoubles grp;
    std::vector<std::uint64_t> count;
    std::uint64_t seen = 0;
  };

  void refresh_active() {
    act_orig_.clear();
    act_child_.clear();
    for (std::size_t i = 0; i < so_; ++i) {
      if (!orig_active_[i]) continue;
      act_orig_.push_back(i);
      for (std::size_t l = 0; l < L_; ++l) act_child_.push_back(i * L_ + l);
    }
  }

  void process_block(Worker& w, const BlockView& b, double* slot) {
    const LossFamily fam = task_.family;
    const std::size_t no = act_orig_.size();
    double* ss = slot + 2 * no;
    for (std::size_t r = 0; r < b.count; ++r) {
      const double* x = b.row(r);
      const double y = b.labels[r];
      if (track_) {
        for (std::size_t a = 0; a < no; ++a) {
          const double f = margin_loss(fam, y * simd::dot(orig_.data() + act_orig_[a] * stride_, x, d_));
          slot[2 * a] += f;
          slot[2 * a + 1] += f * f;
        }
      }
      for (std::size_t m = 0; m < snap_child_.size(); ++m) {
        const double f = margin_loss(fam, y * simd::dot(snap_models_.data() + m * stride_, x, d_));
        ss[2 * m] += f;
        ss[2 * m + 1] += f * f;
      }
      if (grouped_) {
        const bool sub_end = (r + 1) % kSubBlockRows == 0 || r + 1 == b.count;
        const bool block_end = r + 1 == b.count;
        for (std::size_t k : act_child_) group_row(w, k, x, y, sub_end, block_end);
      } else {
        for (std::size_t k : act_child_) update(w, k, x, y);
      }
      ++w.seen;
    }
  }

  // w <- w - alpha * (v + r), with v = c * x for a single example or the
  // group's summed gradient. r is the regularizer subgradient at w.
  void apply(double* w, const double* v, double c, const double* x, double alpha, double* r) const {
    if (task_.reg == Regularizer::kNone) {
      if (v == nullptr) {
        for (std::size_t j = 0; j < d_; ++j) w[j] = w[j] - alpha * (c * x[j] + 0.0);
      } else {
        for (std::size_t j = 0; j < d_; ++j) w[j] = w[j] - alpha * (v[j] + 0.0);
      }
      return;
    }
    regularizer_subgradient_into(task_, {w, d_}, {r, d_});
    if (v == nullptr) {
      for (std::size_t j = 0; j < d_; ++j) w[j] = w[j] - alpha * (c * x[j] + r[j]);
    } else {
      for (std::size_t j = 0; j < d_; ++j) w[j] = w[j] - alpha * (v[j] + r[j]);
    }
  }

  void load(const double* w, double* buf) const {
    for (std::size_t j = 0; j < d_; ++j)
      buf[j] = std::atomic_ref<double>(const_cast<double&>(w[j])).load(std::memory_order_relaxed);
  }
  void store(double* w, const double* buf) const {
    for (std::size_t j = 0; j < d_; ++j) std::atomic_ref<double>(w[j]).store(buf[j], std::memory_order_relaxed);
  }

  double coefficient(const double* w, const double* x, double y) const {
    return margin_coefficient(task_.family, y * simd::dot(w, x, d_), y);
  }

  // One example, one step, under the worker's discipline.
  void update(Worker& wk, std::size_t k, const double* x, double y) {
    const double alpha = pairs_[k % L_].alpha;
    double* w = wk.models + k * stride_;
    auto step = [&](double* target) {
      const double c = coefficient(target, x, y);
      if (c == 0.0 && task_.reg == Regularizer::kNone) return false;
      apply(target, nullptr, c, x, alpha, wk.reg.data());
      return true;
    };
    switch (discipline_) {
      case Discipline::kMerge:
        step(w);
        break;
      case Discipline::kLock: {
        std::lock_guard<std::mutex> g(locks_[k]);
        step(w);
        break;
      }
      case Discipline::kNoLock:
        load(w, wk.buf.data());
        if (step(wk.buf.data())) store(w, wk.buf.data());
        break;
    }
  }

  // Adds one example to the child's open group, folding the partial sums in
  // the same order as a full gradient pass, and steps when the group is full.
  void group_row(Worker& wk, std::size_t k, const double* x, double y, bool sub_end, bool block_end) {
    double* w = wk.models + k * stride_;
    double c;
    switch (discipline_) {
      case Discipline::kMerge:
        c = coefficient(w, x, y);
        break;
      case Discipline::kLock: {
        std::lock_guard<std::mutex> g(locks_[k]);
        c = coefficient(w, x, y);
        break;
      }
      default:
        load(w, wk.buf.data());
        c = coefficient(wk.buf.data(), x, y);
        break;
    }
    double* sub = wk.sub.data() + k * stride_;
    double* blk = wk.blk.data() + k * stride_;
    double* grp = wk.grp.data() + k * stride_;
    if (c != 0.0)
      for (std::size_t j = 0; j < stride_; ++j) sub[j] = std::fma(c, x[j], sub[j]);
    if (sub_end) {
      for (std::size_t j = 0; j < stride_; ++j) blk[j] = blk[j] + sub[j];
      std::fill_n(sub, stride_, 0.0);
    }
    if (block_end) {
      for (std::size_t j = 0; j < stride_; ++j) grp[j] = grp[j] + blk[j];
      std::fill_n(blk, stride_, 0.0);
    }
    if (++wk.count[k] == pairs_[k % L_].batch) finish_group(wk, k, sub_end, block_end);
  }

  void finish_group(Worker& wk, std::size_t k, bool sub_flushed = true, bool block_flushed = true) {
    double* sub = wk.sub.data() + k * stride_;
    double* blk = wk.blk.data() + k * stride_;
    double* grp = wk.grp.data() + k * stride_;
    if (!sub_flushed) {
      for (std::size_t j = 0; j < stride_; ++j) blk[j] = blk[j] + sub[j];
      std::fill_n(sub, stride_, 0.0);
    }
    if (!block_flushed) {
      for (std::size_t j = 0; j < stride_; ++j) grp[j] = grp[j] + blk[j];
      std::fill_n(blk, stride_, 0.0);
    }
    const double alpha = pairs_[k % L_].alpha;
    double* w = wk.models + k * stride_;
    switch (discipline_) {
      case Discipline::kMerge:
        apply(w, grp, 0.0, nullptr, alpha, wk.reg.data());
        break;
      case Discipline::kLock: {
        std::lock_guard<std::mutex> g(locks_[k]);
        apply(w, grp, 0.0, nullptr, alpha, wk.reg.data());
        break;
      }
      case Discipline::kNoLock:
        load(w, wk.buf.data());
        apply(wk.buf.data(), grp, 0.0, nullptr, alpha, wk.reg.data());
        store(w, wk.buf.data());
        break;
    }
    std::fill_n(grp, stride_, 0.0);
    wk.count[k] = 0;
  }

  TaskSpec task_;
  const Dataset* ds_;
  std::size_t d_;
  std::size_t stride_;
  std::vector<StepBatch> pairs_;
  Discipline discipline_;
  std::uint64_t start_;
  std::uint32_t workers_;
  bool grouped_;
  bool track_;

  std::size_t so_ = 0;
  std::size_t L_ = 0;
  std::size_t nchild_ = 0;
  std::vector<Model> origins_;
  AlignedDoubles orig_;
  std::vector<double> orig_reg_;
  std::vector<bool> orig_active_;
  std::vector<double> orig_sum_;
  std::vector<double> orig_sq_;
  std::vector<EstimateReport> last_;
  std::vector<std::size_t> act_orig_;
  std::vector<std::size_t> act_child_;

  AlignedDoubles shared_;
  std::unique_ptr<std::mutex[]> locks_;
  std::vector<Worker> workers_state_;

  std::vector<std::size_t> snap_child_;
  AlignedDoubles snap_models_;
  std::vector<double> snap_reg_;
  std::vector<double> snap_sum_;
  std::vector<double> snap_sq_;
  std::uint64_t snap_n_ = 0;
  std::vector<std::vector<EstimateReport>> history_;

  std::uint64_t done_blocks_ = 0;
  std::uint64_t n_ = 0;
};

std::vector<StepBatch> single_pairs(std::span<const double> steps) {
  std::vector<StepBatch> pairs;
  for (double a : steps) pairs.push_back({a, 1});
  return pairs;
}

IgdEpochResult run_approximate(IgdRunner& run, const StoppingConfig& stopping, const CheckSchedule& schedule,
                               bool intra_sync) {
  if (!stopping.reachable()) {
    run.advance_to(run.total_blocks());
    return run.result(run.select(), false);
  }
  CheckPoints checks(run.total_blocks(), schedule, stopping.eps);
  const PruneRules rules{true, stopping.containment};
  while (true) {
    run.advance_to(checks.next());
    if (run.done()) break;
    if (run.examples() < 2) {
      checks.passed(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    run.close_snapshot();
    const std::vector<std::size_t> act = run.active_originals();
    std::vector<EstimateReport> losses;
    for (std::size_t i : act) losses.push_back(run.original_report(i));
    const PruneVerdict verdict = stop_loss(losses, stopping.overlap_eps, rules);
    for (std::size_t a : verdict.discarded_exact) run.deactivate_original(act[a]);
    for (std::size_t a : verdict.discarded_approx) run.deactivate_original(act[a]);
    if (run.active_originals().size() == 1) {
      const std::size_t i = run.active_originals().front();
      for (std::size_t l = 0; l < run.steps(); ++l) {
        const auto& h = run.history(i * run.steps() + l);
        if (stop_igd_loss(h, stopping.eps, stopping.m_min_converged, stopping.beta)) return run.result(i, true);
      }
    }
    if (intra_sync) run.synchronize();
    run.open_snapshot();
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t a : verdict.surviving) best = std::min(best, losses[a].estimate);
    checks.passed(best);
  }
  run.close_snapshot();
  return run.result(run.select(), false);
}

}  // namespace

Model igd_epoch(const Model& model, const TaskSpec& task, const Dataset& ds, double alpha, Discipline discipline,
                std::uint64_t start_block, const ExecOptions& exec) {
  const StepBatch pair{alpha, 1};
  IgdRunner run(task, ds, IgdState::initial(model), {&pair, 1}, discipline, start_block, exec, false, false);
  run.advance_to(run.total_blocks());
  return run.result(0, false).next.originals.front();
}

IgdEpochResult speculative_igd_epoch(const TaskSpec& task, const Dataset& ds, const IgdState& state,
                                     std::span<const double> steps, Discipline discipline,
                                     std::uint64_t start_block, const ExecOptions& exec) {
  const std::vector<StepBatch> pairs = single_pairs(steps);
  IgdRunner run(task, ds, state, pairs, discipline, start_block, exec, false, true);
  run.advance_to(run.total_blocks());
  return run.result(run.select(), false);
}

IgdEpochResult approximate_igd_epoch(const TaskSpec& task, const Dataset& ds, const IgdState& state,
                                     std::span<const double> steps, Discipline discipline,
                                     const StoppingConfig& stopping, const CheckSchedule& schedule,
                                     std::uint64_t start_block, const ExecOptions& exec,
                                     const IgdApproxOptions& opts) {
  const std::vector<StepBatch> pairs = single_pairs(steps);
  IgdRunner run(task, ds, state, pairs, discipline, start_block, exec, false, true);
  return run_approximate(run, stopping, schedule, opts.intra_sync);
}

IgdEpochResult minibatch_epoch(const TaskSpec& task, const Dataset& ds, const IgdState& state,
                               std::span<const StepBatch> pairs, Discipline discipline, std::uint64_t start_block,
                               const ExecOptions& exec) {
  IgdRunner run(task, ds, state, pairs, discipline, start_block, exec, true, true);
  run.advance_to(run.total_blocks());
  run.flush_groups();
  return run.result(run.select(), false);
}

}  // namespace specgd
