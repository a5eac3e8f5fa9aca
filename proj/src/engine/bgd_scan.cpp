#include "engine/bgd_scan.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "engine/parallel.hpp"
#include "simd.hpp"
#include "specgd/errors.hpp"

namespace specgd::engine {

namespace {

constexpr std::uint64_t kWindowPerWorker = 16;

}  // namespace

std::vector<double> step_weights(std::span<const double> w, std::span<const double> g, double alpha) {
  std::vector<double> out(w.size());
  for (std::size_t j = 0; j < w.size(); ++j) out[j] = w[j] - alpha * g[j];
  return out;
}

BgdScan::BgdScan(const TaskSpec& task, const Dataset& ds, std::span<const double> base,
                 std::span<const double> direction, std::span<const double> steps, std::uint64_t start_block,
                 const ExecOptions& exec, bool want_gradient, bool want_squares)
    : task_(task),
      ds_(&ds),
      d_(ds.dim()),
      stride_(ds.stride()),
      has_dir_(!direction.empty()),
      steps_(steps.begin(), steps.end()),
      start_(start_block),
      workers_(std::max<std::uint32_t>(1, exec.workers)),
      want_grad_(want_gradient),
      want_sq_(want_squares) {
  validate(task);
  if (base.size() != d_) throw StructuralError("model dimension does not match the dataset");
  if (has_dir_ && direction.size() != d_) throw StructuralError("direction dimension does not match the dataset");
  if (steps_.empty()) throw ConfigError("at least one candidate is required");
  if (start_block >= ds.num_blocks()) throw StructuralError("start block out of range");
  if (workers_ > ds.num_blocks()) partition(ds, workers_);  // throws the configuration error

  base_.assign(stride_, 0.0);
  dir_.assign(stride_, 0.0);
  std::copy(base.begin(), base.end(), base_.begin());
  if (has_dir_) std::copy(direction.begin(), direction.end(), dir_.begin());

  const std::size_t s = steps_.size();
  models_.reserve(s);
  for (double a : steps_) {
    if (!(a >= 0.0) || !std::isfinite(a)) throw ConfigError("step sizes must be finite and >= 0");
    models_.emplace_back(has_dir_ ? step_weights(base, direction, a) : std::vector<double>(base.begin(), base.end()));
    reg_value_.push_back(regularizer_value(task_, models_.back()));
    reg_grad_.push_back(regularizer_subgradient(task_, models_.back()));
  }
  active_.assign(s, true);
  for (std::size_t i = 0; i < s; ++i) act_.push_back(i);
  act_steps_ = steps_;

  loss_sum_.assign(s, 0.0);
  loss_sq_.assign(s, 0.0);
  if (want_grad_) grad_.assign(s * stride_, 0.0);
  if (want_grad_ && want_sq_) grad_sq_.assign(s * stride_, 0.0);

  for (std::uint32_t p = 0; p < workers_; ++p) readers_.emplace_back(ds);
  scratch_.resize(workers_);
  for (auto& sc : scratch_) {
    sc.coef.resize(simd::kSubBlockRows * s);
    sc.u.resize(simd::kSubBlockRows);
    sc.v.resize(simd::kSubBlockRows);
  }
  slots_.resize(workers_ == 1 ? 1 : kWindowPerWorker * workers_);
  for (auto& slot : slots_) {
    slot.loss_sum.resize(s);
    slot.loss_sq.resize(s);
    if (want_grad_) slot.grad.resize(s * stride_);
    if (want_grad_ && want_sq_) slot.grad_sq.resize(s * stride_);
  }
}

void BgdScan::deactivate(std::size_t i) {
  if (!active_[i]) return;
  active_[i] = false;
  act_.clear();
  act_steps_.clear();
  for (std::size_t k = 0; k < steps_.size(); ++k) {
    if (!active_[k]) continue;
    act_.push_back(k);
    act_steps_.push_back(steps_[k]);
  }
}

void BgdScan::prepare(Slot& slot) const {
  const std::size_t a = act_.size();
  std::fill_n(slot.loss_sum.begin(), a, 0.0);
  std::fill_n(slot.loss_sq.begin(), a, 0.0);
  if (want_grad_) std::fill_n(slot.grad.begin(), a * stride_, 0.0);
  if (want_grad_ && want_sq_) std::fill_n(slot.grad_sq.begin(), a * stride_, 0.0);
}

void BgdScan::process_block(const BlockView& b, Scratch& sc, Slot& slot) const {
  const std::size_t a = act_.size();
  const bool logistic = task_.family == LossFamily::kLogistic;
  prepare(slot);
  for (std::size_t r0 = 0; r0 < b.count; r0 += simd::kSubBlockRows) {
    const std::size_t rows = std::min(simd::kSubBlockRows, b.count - r0);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* x = b.row(r0 + r);
      sc.u[r] = simd::dot(base_.data(), x, d_);
      sc.v[r] = has_dir_ ? simd::dot(dir_.data(), x, d_) : 0.0;
    }
    simd::margin_terms(logistic, sc.u.data(), sc.v.data(), b.labels + r0, rows, act_steps_.data(), a,
                       slot.loss_sum.data(), slot.loss_sq.data(), sc.coef.data());
    if (!want_grad_) continue;
    if (want_sq_) {
      simd::accumulate_rows_sq(b.row(r0), rows, stride_, sc.coef.data(), a, a, slot.grad.data(),
                               slot.grad_sq.data());
    } else {
      simd::accumulate_rows(b.row(r0), rows, stride_, sc.coef.data(), a, a, slot.grad.data());
    }
  }
}

void BgdScan::fold(const Slot& slot) {
  for (std::size_t k = 0; k < act_.size(); ++k) {
    const std::size_t i = act_[k];
    loss_sum_[i] = loss_sum_[i] + slot.loss_sum[k];
    loss_sq_[i] = loss_sq_[i] + slot.loss_sq[k];
    if (!want_grad_) continue;
    double* g = grad_.data() + i * stride_;
    const double* p = slot.grad.data() + k * stride_;
    for (std::size_t j = 0; j < stride_; ++j) g[j] = g[j] + p[j];
    if (!want_sq_) continue;
    double* q = grad_sq_.data() + i * stride_;
    const double* pq = slot.grad_sq.data() + k * stride_;
    for (std::size_t j = 0; j < stride_; ++j) q[j] = q[j] + pq[j];
  }
}

void BgdScan::advance_to(std::uint64_t position) {
  const std::uint64_t total = ds_->num_blocks();
  position = std::min(position, total);
  const DatasetHeader& h = ds_->header();
  auto block_at = [&](std::uint64_t q) { return (start_ + q) % total; };
  while (done_blocks_ < position) {
    if (workers_ == 1) {
      const std::uint64_t b = block_at(done_blocks_);
      process_block(readers_[0].read(b), scratch_[0], slots_[0]);
      fold(slots_[0]);
      n_ += h.block_count(b);
      ++done_blocks_;
      continue;
    }
    const std::uint64_t q0 = done_blocks_;
    const std::uint64_t q1 = std::min<std::uint64_t>(position, q0 + slots_.size());
    run_workers(workers_, [&](std::uint32_t p) {
      for (std::uint64_t q = q0; q < q1; ++q) {
        const std::uint64_t b = block_at(q);
        if (b % workers_ != p) continue;
        process_block(readers_[p].read(b), scratch_[p], slots_[q - q0]);
      }
    });
    for (std::uint64_t q = q0; q < q1; ++q) {
      fold(slots_[q - q0]);
      n_ += h.block_count(block_at(q));
    }
    done_blocks_ = q1;
  }
}

EstimateReport BgdScan::loss_report(std::size_t i) const {
  EstimateReport r = report({n_, loss_sum_[i], loss_sq_[i]}, ds_->size());
  r.estimate = r.estimate + reg_value_[i];
  return r;
}

GradientEstimate BgdScan::gradient_report(std::size_t i) const {
  if (!want_grad_ || !want_sq_) throw StructuralError("gradient variance was not collected");
  GradientEstimate g = report_vector(n_, {grad_.data() + i * stride_, d_}, {grad_sq_.data() + i * stride_, d_},
                                     ds_->size());
  for (std::size_t j = 0; j < d_; ++j) g[j].estimate = g[j].estimate + reg_grad_[i][j];
  return g;
}

std::vector<double> BgdScan::gradient(std::size_t i) const {
  if (!want_grad_) throw StructuralError("gradient was not collected");
  if (n_ == 0) throw NoEstimateError("no examples scanned");
  const double scale = static_cast<double>(ds_->size()) / static_cast<double>(n_);
  std::vector<double> g(d_);
  const double* sum = grad_.data() + i * stride_;
  for (std::size_t j = 0; j < d_; ++j) {
    g[j] = scale * sum[j] + reg_grad_[i][j];
    if (!std::isfinite(g[j])) throw NumericError("non-finite gradient in dimension " + std::to_string(j));
  }
  return g;
}

CheckPoints::CheckPoints(std::uint64_t blocks, const CheckSchedule& schedule, double eps)
    : blocks_(blocks), schedule_(schedule), eps_(eps) {
  const double first = std::ceil(schedule.first_fraction * static_cast<double>(blocks));
  gap_ = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(first));
  next_ = std::min(gap_, blocks_);
}

void CheckPoints::passed(double best_loss) {
  const std::uint64_t here = next_;
  bool dense = false;
  if (schedule_.densify && has_prev_) {
    const double change = std::fabs(best_loss - prev_) / std::max(std::fabs(prev_), kRelativeFloor);
    dense = change < schedule_.densify_below * eps_;
  }
  has_prev_ = true;
  prev_ = best_loss;
  if (dense) {
    gap_ = std::max<std::uint64_t>(1, gap_ / 2);
  } else {
    const auto grown = static_cast<std::uint64_t>(std::ceil(static_cast<double>(here) * schedule_.growth));
    gap_ = grown > here ? grown - here : 1;
  }
  next_ = std::min(here + gap_, blocks_);
}

}  // namespace specgd::engine
