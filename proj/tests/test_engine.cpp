#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "specgd/engine.hpp"
#include "specgd/errors.hpp"
#include "support.hpp"

using namespace specgd;
using specgd::testing::raw_dataset;
using specgd::testing::serial_igd;
using specgd::testing::TempDir;

namespace {

const TaskSpec kSvm{LossFamily::kSvmHinge, Regularizer::kNone, 0.0};
const TaskSpec kLr{LossFamily::kLogistic, Regularizer::kNone, 0.0};
const TaskSpec kLrL2{LossFamily::kLogistic, Regularizer::kL2, 0.01};

Dataset small_data(std::uint64_t n = 2000, std::uint32_t d = 7, std::uint32_t bs = 100, double noise = 0.05) {
  return generate(n, d, kLr, noise, 11, bs).data;
}

double direct_loss(const TaskSpec& task, const Dataset& ds, const Model& m) {
  double acc = 0.0;
  for (const auto& e : ds.examples()) acc += example_loss(task, m, e.view());
  return acc + regularizer_value(task, m);
}

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

Model some_model(std::size_t d, double scale = 0.1) {
  std::vector<double> w(d);
  for (std::size_t j = 0; j < d; ++j) w[j] = scale * std::sin(1.0 + static_cast<double>(j));
  return Model(w);
}

}  // namespace

TEST_CASE("bgd_iterate with a zero step leaves the model and reports the objective") {
  const Dataset ds = small_data();
  const Model m = some_model(ds.dim());
  const BgdIterateResult r = bgd_iterate(m, kLrL2, ds, 0.0);
  CHECK(same_bits(r.model.weights, m.weights));
  CHECK(r.loss == doctest::Approx(direct_loss(kLrL2, ds, m)).epsilon(1e-12));
}

TEST_CASE("bgd_iterate matches a hand-computed logistic step") {
  TempDir dir;
  const std::vector<Example> rows = {{{1.0, 2.0}, 1.0}, {{-1.0, 0.5}, -1.0}};
  const Dataset ds = raw_dataset(dir, "two.sgd", rows, 8);
  const Model w(std::vector<double>{0.1, -0.2});
  // t1 = 1 * (0.1 - 0.4) = -0.3, t2 = -1 * (-0.1 - 0.1) = 0.2.
  const double c1 = -1.0 / (1.0 + std::exp(-0.3));
  const double c2 = 1.0 / (1.0 + std::exp(0.2));
  const double g0 = c1 * 1.0 + c2 * -1.0;
  const double g1 = c1 * 2.0 + c2 * 0.5;
  const double loss = std::log1p(std::exp(0.3)) + std::log1p(std::exp(-0.2));
  const BgdIterateResult r = bgd_iterate(w, kLr, ds, 0.5);
  CHECK(r.loss == doctest::Approx(loss).epsilon(1e-14));
  CHECK(r.gradient[0] == doctest::Approx(g0).epsilon(1e-14));
  CHECK(r.gradient[1] == doctest::Approx(g1).epsilon(1e-14));
  CHECK(r.model.weights[0] == doctest::Approx(0.1 - 0.5 * g0).epsilon(1e-14));
  CHECK(r.model.weights[1] == doctest::Approx(-0.2 - 0.5 * g1).epsilon(1e-14));
  CHECK(r.model.iter == 1);
}

TEST_CASE("bgd results do not depend on the worker count") {
  const Dataset ds = small_data(5000, 13, 128);
  const Model m = some_model(ds.dim());
  const BgdIterateResult one = bgd_iterate(m, kLrL2, ds, 0.1, 3, {1});
  for (std::uint32_t workers : {2u, 4u, 7u}) {
    const BgdIterateResult many = bgd_iterate(m, kLrL2, ds, 0.1, 3, {workers});
    CHECK(same_bits(one.gradient, many.gradient));
    CHECK(std::memcmp(&one.loss, &many.loss, sizeof(double)) == 0);
  }
  const std::vector<double> steps = {0.5, 0.1, 0.02};
  const BgdEpochResult a = speculative_bgd_epoch(kSvm, ds, m, one.gradient, steps, 5, {1});
  const BgdEpochResult b = speculative_bgd_epoch(kSvm, ds, m, one.gradient, steps, 5, {4});
  CHECK(same_bits(a.gradient, b.gradient));
  for (std::size_t i = 0; i < steps.size(); ++i)
    CHECK(a.candidate_losses[i].estimate == b.candidate_losses[i].estimate);
}

TEST_CASE("bgd reports a numeric error naming the dimension") {
  TempDir dir;
  const std::vector<Example> rows = {{{1.0, 1e308}, 1.0}, {{1.0, 1e308}, 1.0}};
  const Dataset ds = raw_dataset(dir, "big.sgd", rows, 8);
  try {
    bgd_iterate(Model(std::vector<double>{0.0, -1.0}), kSvm, ds, 0.1);
    FAIL("expected a numeric error");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("dimension 1") != std::string::npos);
  }
}

TEST_CASE("speculative bgd candidates agree with independent single-step runs") {
  const Dataset ds = small_data();
  const Model m = some_model(ds.dim());
  const BgdEpochResult here = evaluate_model(kLrL2, ds, m);
  const std::vector<double> steps = {1e-4, 1e-3, 1e-2, 1e-1};
  const BgdEpochResult spec = speculative_bgd_epoch(kLrL2, ds, m, here.gradient, steps);
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const BgdIterateResult single = bgd_iterate(m, kLrL2, ds, steps[i]);
    const double l = evaluate_model(kLrL2, ds, single.model).loss.estimate;
    CHECK(spec.candidate_losses[i].estimate == doctest::Approx(l).epsilon(1e-12));
    CHECK(spec.loss.estimate <= spec.candidate_losses[i].estimate);
  }
  CHECK(spec.loss.exact());
  CHECK(spec.loss.half_width == 0.0);
  CHECK(spec.examples == ds.size());
}

TEST_CASE("speculative bgd is invariant to candidate order") {
  const Dataset ds = small_data();
  const Model m = some_model(ds.dim());
  const BgdEpochResult here = evaluate_model(kSvm, ds, m);
  const std::vector<double> fwd = {0.3, 0.01, 0.07, 0.001, 0.2};
  std::vector<double> rev(fwd.rbegin(), fwd.rend());
  const BgdEpochResult a = speculative_bgd_epoch(kSvm, ds, m, here.gradient, fwd);
  const BgdEpochResult b = speculative_bgd_epoch(kSvm, ds, m, here.gradient, rev);
  for (std::size_t i = 0; i < fwd.size(); ++i)
    CHECK(std::memcmp(&a.candidate_losses[i].estimate, &b.candidate_losses[fwd.size() - 1 - i].estimate,
                      sizeof(double)) == 0);
  CHECK(same_bits(a.model.weights, b.model.weights));
  CHECK(same_bits(a.gradient, b.gradient));
  // One candidate alone gives the same bits as inside the group.
  const std::vector<double> one = {0.07};
  const BgdEpochResult c = speculative_bgd_epoch(kSvm, ds, m, here.gradient, one);
  CHECK(std::memcmp(&c.candidate_losses[0].estimate, &a.candidate_losses[2].estimate, sizeof(double)) == 0);
}

TEST_CASE("speculative ties go to the smaller step") {
  const Dataset ds = small_data();
  const Model m = some_model(ds.dim());
  const std::vector<double> zero(ds.dim(), 0.0);
  const std::vector<double> steps = {0.5, 0.1, 0.3};
  const BgdEpochResult r = speculative_bgd_epoch(kSvm, ds, m, zero, steps);
  CHECK(r.selected == 1);
}

TEST_CASE("approximate bgd with an unreachable tolerance equals speculative") {
  const Dataset ds = small_data(6000, 9, 64);
  const Model m = some_model(ds.dim());
  const BgdEpochResult here = evaluate_model(kLr, ds, m, 4);
  const std::vector<double> steps = {0.002, 0.0005, 0.01};
  StoppingConfig off;
  off.eps = 0.0;
  const BgdEpochResult spec = speculative_bgd_epoch(kLr, ds, m, here.gradient, steps, 4);
  const BgdEpochResult approx = approximate_bgd_epoch(kLr, ds, m, here.gradient, steps, off, {}, 4);
  CHECK(approx.selected == spec.selected);
  CHECK(same_bits(approx.model.weights, spec.model.weights));
  CHECK(same_bits(approx.gradient, spec.gradient));
  CHECK(approx.loss.estimate == spec.loss.estimate);
  CHECK_FALSE(approx.early);
  const BgdEpochResult boot = approximate_bgd_epoch(kLr, ds, m, {}, {}, off, {}, 4);
  CHECK(same_bits(boot.gradient, here.gradient));
}

TEST_CASE("approximate bgd with a wide tolerance stops at the first check") {
  const Dataset ds = small_data(20000, 5, 100);
  const Model m = some_model(ds.dim());
  const BgdEpochResult here = evaluate_model(kLr, ds, m);
  StoppingConfig wide;
  wide.eps = 10.0;
  const std::vector<double> steps = {0.001};
  const BgdEpochResult r = approximate_bgd_epoch(kLr, ds, m, here.gradient, steps, wide, {}, 0);
  CHECK(r.early);
  CHECK(r.examples == 2 * 100);  // ceil(1% of 200 blocks) = 2 blocks
  CHECK_FALSE(r.loss.exact());
  CHECK(r.loss.half_width > 0.0);
}

TEST_CASE("approximate bgd prunes poor candidates and keeps the best") {
  const Dataset ds = small_data(20000, 5, 100, 0.0);
  const Model m = some_model(ds.dim());
  const BgdEpochResult here = evaluate_model(kLr, ds, m);
  StoppingConfig cfg;
  cfg.eps = 1e-9;  // gradient never converges; only pruning acts
  const std::vector<double> steps = {1e-6, 1e-4, 1e-3, 5e-4};
  const BgdEpochResult approx = approximate_bgd_epoch(kLr, ds, m, here.gradient, steps, cfg, {}, 0);
  const BgdEpochResult spec = speculative_bgd_epoch(kLr, ds, m, here.gradient, steps, 0);
  CHECK_FALSE(approx.early);
  CHECK(std::count(approx.pruned.begin(), approx.pruned.end(), true) >= 1);
  CHECK_FALSE(approx.pruned[spec.selected]);
  CHECK(approx.selected == spec.selected);
  CHECK(same_bits(approx.model.weights, spec.model.weights));
}

TEST_CASE("line search satisfies sufficient decrease") {
  const Dataset ds = small_data(3000, 4, 100);
  const Model m = some_model(ds.dim(), 1.0);
  const BgdEpochResult here = evaluate_model(kLr, ds, m);
  double g2 = 0.0;
  for (double g : here.gradient) g2 += g * g;
  const LineSearchResult r = line_search_baseline(m, kLr, ds, 1e-4, 0.5, 1.0);
  CHECK(r.passes >= 2);
  CHECK(r.loss <= here.loss.estimate - 1e-4 * r.alpha * g2);
  CHECK(r.loss == doctest::Approx(direct_loss(kLr, ds, r.model)).epsilon(1e-10));
  CHECK_THROWS_AS(line_search_baseline(m, kLr, ds, 0.0, 0.5, 1.0), ConfigError);
  CHECK_THROWS_AS(line_search_baseline(m, kLr, ds, 0.5, 1.0, 1.0), ConfigError);
  CHECK_THROWS_AS(line_search_baseline(m, kLr, ds, 0.5, 0.5, 0.0), ConfigError);
}

TEST_CASE("line search at a minimizer accepts the first trial") {
  TempDir dir;
  // Symmetric data: the zero model is the logistic minimizer.
  const std::vector<Example> rows = {{{1.0}, 1.0}, {{1.0}, -1.0}};
  const Dataset ds = raw_dataset(dir, "sym.sgd", rows, 8);
  const LineSearchResult r = line_search_baseline(Model(std::vector<double>{0.0}), kLr, ds, 1e-4, 0.5, 1.0);
  CHECK(r.passes == 2);
  CHECK(r.alpha == 1.0);
}

TEST_CASE("igd matches two hand-computed updates") {
  TempDir dir;
  const std::vector<Example> rows = {{{1.0, 2.0}, 1.0}, {{-1.0, 0.5}, -1.0}};
  const Dataset ds = raw_dataset(dir, "two.sgd", rows, 8);
  // Hinge from zero: both examples sit inside the margin.
  const Model w = igd_epoch(Model(2), kSvm, ds, 0.1, Discipline::kMerge);
  // After the first: (0.1, 0.2). Second: t = -(−0.1 + 0.1) = 0, c = +1.
  CHECK(w.weights[0] == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(w.weights[1] == doctest::Approx(0.15).epsilon(1e-15));
}

TEST_CASE("single-worker igd disciplines agree with the serial pass") {
  const Dataset ds = small_data(3000, 11, 128);
  const Model m = some_model(ds.dim());
  for (const TaskSpec& task : {kSvm, kLrL2}) {
    const Model ref = serial_igd(task, ds, m, 0.01, 5);
    for (Discipline disc : {Discipline::kMerge, Discipline::kLock, Discipline::kNoLock}) {
      const Model got = igd_epoch(m, task, ds, 0.01, disc, 5, {1});
      CHECK(same_bits(got.weights, ref.weights));
    }
  }
}

TEST_CASE("merge averaging over identical shards returns the shard model") {
  TempDir dir;
  const Dataset src = small_data(64, 6, 64);
  std::vector<Example> half = src.examples();
  std::vector<Example> twice = half;
  twice.insert(twice.end(), half.begin(), half.end());
  const Dataset one = raw_dataset(dir, "one.sgd", half, 64);
  const Dataset two = raw_dataset(dir, "two.sgd", twice, 64);
  const Model m = some_model(6);
  const Model single = igd_epoch(m, kLr, one, 0.05, Discipline::kMerge, 0, {1});
  const Model merged = igd_epoch(m, kLr, two, 0.05, Discipline::kMerge, 0, {2});
  CHECK(same_bits(single.weights, merged.weights));
}

TEST_CASE("shared-model disciplines run with several workers") {
  const Dataset ds = small_data(20000, 8, 128, 0.0);
  const Model m(ds.dim());
  const double before = direct_loss(kLr, ds, m);
  for (Discipline disc : {Discipline::kMerge, Discipline::kLock, Discipline::kNoLock}) {
    const Model got = igd_epoch(m, kLr, ds, 0.01, disc, 0, {4});
    for (double v : got.weights) CHECK(std::isfinite(v));
    CHECK(direct_loss(kLr, ds, got) < 0.5 * before);
  }
}

TEST_CASE("speculative igd with one step is plain igd plus the exact input loss") {
  const Dataset ds = small_data();
  const Model m = some_model(ds.dim());
  const std::vector<double> steps = {0.02};
  const IgdEpochResult r = speculative_igd_epoch(kLrL2, ds, IgdState::initial(m), steps, Discipline::kMerge, 7);
  const Model plain = igd_epoch(m, kLrL2, ds, 0.02, Discipline::kMerge, 7);
  REQUIRE(r.next.originals.size() == 1);
  CHECK(same_bits(r.next.originals[0].weights, plain.weights));
  CHECK(same_bits(r.next.originals[0].weights, serial_igd(kLrL2, ds, m, 0.02, 7).weights));
  const BgdEpochResult exact = evaluate_model(kLrL2, ds, m, 7);
  CHECK(std::memcmp(&r.original_losses[0].estimate, &exact.loss.estimate, sizeof(double)) == 0);
  CHECK(r.original_losses[0].exact());
}

TEST_CASE("speculative igd keeps the children of the best original") {
  const Dataset ds = small_data();
  const Model m = some_model(ds.dim());
  const std::vector<double> steps = {0.05, 0.001};
  const IgdEpochResult first = speculative_igd_epoch(kSvm, ds, IgdState::initial(m), steps, Discipline::kMerge);
  REQUIRE(first.next.originals.size() == 2);
  CHECK(first.next.origin[0].alpha == 0.05);
  CHECK(first.next.origin[1].alpha == 0.001);
  const IgdEpochResult second = speculative_igd_epoch(kSvm, ds, first.next, steps, Discipline::kMerge, 3);
  REQUIRE(second.next.originals.size() == 2);
  REQUIRE(second.original_losses.size() == 2);
  const std::size_t m_best = second.original_losses[0].estimate <= second.original_losses[1].estimate ? 0 : 1;
  CHECK(second.selected == m_best);
  for (std::size_t i = 0; i < 2; ++i) {
    const double l = evaluate_model(kSvm, ds, first.next.originals[i], 3).loss.estimate;
    CHECK(std::memcmp(&second.original_losses[i].estimate, &l, sizeof(double)) == 0);
  }
  const Model child = igd_epoch(first.next.originals[m_best], kSvm, ds, 0.001, Discipline::kMerge, 3);
  CHECK(same_bits(second.next.originals[1].weights, child.weights));
}

TEST_CASE("approximate igd with an unreachable tolerance equals speculative") {
  const Dataset ds = small_data(4000, 6, 50);
  const Model m = some_model(ds.dim());
  const std::vector<double> steps = {0.03, 0.003, 0.0003};
  StoppingConfig off;
  off.eps = 0.0;
  IgdState state = IgdState::initial(m);
  for (int it = 0; it < 3; ++it) {
    const IgdEpochResult spec = speculative_igd_epoch(kLr, ds, state, steps, Discipline::kMerge, it);
    const IgdEpochResult approx = approximate_igd_epoch(kLr, ds, state, steps, Discipline::kMerge, off, {}, it);
    CHECK(approx.selected == spec.selected);
    CHECK_FALSE(approx.early);
    for (std::size_t l = 0; l < steps.size(); ++l)
      CHECK(same_bits(approx.next.originals[l].weights, spec.next.originals[l].weights));
    state = spec.next;
  }
}

TEST_CASE("approximate igd needs m completed snapshots before stopping") {
  const Dataset ds = small_data(20000, 4, 100);
  const Model m = some_model(ds.dim());
  StoppingConfig loose;
  loose.eps = 10.0;
  loose.beta = 1.0;
  CheckSchedule sched;
  sched.densify = false;
  const std::vector<double> steps = {0.01};
  // Checks at blocks 2, 4, 8, 16. Snapshots open at 2 and 4 and complete at 4 and 8.
  for (std::uint32_t need : {1u, 2u, 3u}) {
    loose.m_min_converged = need;
    const IgdEpochResult r =
        approximate_igd_epoch(kLr, ds, IgdState::initial(m), steps, Discipline::kMerge, loose, sched, 0);
    CHECK(r.early);
    CHECK(r.examples == (std::uint64_t{2} << need) * 100);
  }
}

TEST_CASE("approximate igd stops early once snapshots agree") {
  const Dataset ds = generate(200000, 5, kLr, 0.1, 2, 100).data;
  const std::vector<double> steps = {0.01, 0.001};
  const IgdEpochResult warm =
      speculative_igd_epoch(kLr, ds, IgdState::initial(Model(ds.dim())), steps, Discipline::kMerge, 0);
  StoppingConfig cfg;
  cfg.beta = 0.05;
  const IgdEpochResult r = approximate_igd_epoch(kLr, ds, warm.next, steps, Discipline::kMerge, cfg, {}, 17);
  CHECK(r.early);
  CHECK(r.examples < ds.size());
  CHECK(r.next.originals.size() == 2);
  CHECK(std::count(r.pruned.begin(), r.pruned.end(), false) == 1);
}

TEST_CASE("mini-batch degenerate sizes") {
  const Dataset ds = small_data(1000, 6, 64);
  const Model m = some_model(ds.dim());
  SUBCASE("batch 1 is speculative igd") {
    const std::vector<double> steps = {0.02, 0.004};
    const std::vector<StepBatch> pairs = {{0.02, 1}, {0.004, 1}};
    const IgdEpochResult a = speculative_igd_epoch(kLrL2, ds, IgdState::initial(m), steps, Discipline::kMerge, 3);
    const IgdEpochResult b = minibatch_epoch(kLrL2, ds, IgdState::initial(m), pairs, Discipline::kMerge, 3);
    for (std::size_t l = 0; l < 2; ++l) CHECK(same_bits(a.next.originals[l].weights, b.next.originals[l].weights));
  }
  SUBCASE("batch N is one full gradient step") {
    for (const TaskSpec& task : {kSvm, kLrL2}) {
      const std::vector<StepBatch> pairs = {{0.001, ds.size()}};
      const IgdEpochResult b = minibatch_epoch(task, ds, IgdState::initial(m), pairs, Discipline::kMerge, 9);
      const BgdIterateResult full = bgd_iterate(m, task, ds, 0.001, 9);
      CHECK(same_bits(b.next.originals[0].weights, full.model.weights));
    }
  }
}

TEST_CASE("mini-batch groups count examples per candidate") {
  TempDir dir;
  const std::vector<Example> rows = {
      {{1.0, 0.0}, 1.0}, {{0.0, 1.0}, -1.0}, {{1.0, 1.0}, 1.0}, {{-1.0, 2.0}, -1.0}};
  const Dataset ds = raw_dataset(dir, "four.sgd", rows, 8);
  auto group_step = [&](Model w, std::size_t from, std::size_t to, double alpha) {
    std::vector<double> g(2, 0.0);
    for (std::size_t i = from; i < to; ++i) {
      const auto gi = example_gradient(kLr, w, rows[i].view());
      for (std::size_t j = 0; j < 2; ++j) g[j] += gi[j];
    }
    for (std::size_t j = 0; j < 2; ++j) w.weights[j] -= alpha * g[j];
    return w;
  };
  const Model zero(2);
  const Model two = group_step(group_step(zero, 0, 2, 0.5), 2, 4, 0.5);
  const Model three = group_step(group_step(zero, 0, 3, 0.5), 3, 4, 0.5);
  const std::vector<StepBatch> pairs = {{0.5, 2}, {0.5, 3}};
  const IgdEpochResult r = minibatch_epoch(kLr, ds, IgdState::initial(zero), pairs, Discipline::kMerge);
  for (std::size_t j = 0; j < 2; ++j) {
    CHECK(r.next.originals[0].weights[j] == doctest::Approx(two.weights[j]).epsilon(1e-14));
    CHECK(r.next.originals[1].weights[j] == doctest::Approx(three.weights[j]).epsilon(1e-14));
  }
  const std::vector<StepBatch> bad = {{0.5, 5}};
  CHECK_THROWS_AS(minibatch_epoch(kLr, ds, IgdState::initial(zero), bad, Discipline::kMerge), ConfigError);
}

TEST_CASE("train with zero iterations returns the initial model") {
  const Dataset ds = small_data();
  TrainConfig cfg;
  cfg.max_iters = 0;
  cfg.initial = some_model(ds.dim());
  const TrainResult r = train(cfg, ds, kLr);
  CHECK(r.metrics.empty());
  CHECK(same_bits(r.model.weights, cfg.initial.weights));
}

TEST_CASE("train rejects inconsistent configurations") {
  const Dataset ds = small_data();
  TrainConfig cfg;
  cfg.loss_delta_tol = -1.0;
  CHECK_THROWS_AS(train(cfg, ds, kLr), ConfigError);
  cfg = {};
  cfg.s_initial = 0;
  CHECK_THROWS_AS(train(cfg, ds, kLr), ConfigError);
  cfg = {};
  cfg.workers = 1000;
  CHECK_THROWS_AS(train(cfg, ds, kLr), ConfigError);
  cfg = {};
  cfg.method = Method::kIgd;
  cfg.mode = Mode::kLineSearch;
  CHECK_THROWS_AS(train(cfg, ds, kLr), ConfigError);
  cfg = {};
  cfg.initial = Model(3);
  CHECK_THROWS_AS(train(cfg, ds, kLr), ConfigError);
}

TEST_CASE("plain bgd on separable data decreases the loss every iteration") {
  const Dataset ds = generate(5000, 10, kLr, 0.0, 3, 256).data;
  // Pre-run sweep: the largest of these steps that keeps the loss decreasing.
  double chosen = 0.0;
  for (double alpha : {1e-3, 3e-4, 1e-4, 3e-5}) {
    TrainConfig cfg;
    cfg.method = Method::kBgd;
    cfg.mode = Mode::kPlain;
    cfg.alpha0 = alpha;
    const TrainResult r = train(cfg, ds, kLr);
    bool decreasing = true;
    for (std::size_t k = 1; k < r.metrics.size(); ++k)
      decreasing = decreasing && r.metrics[k].loss_est < r.metrics[k - 1].loss_est;
    if (decreasing) {
      chosen = alpha;
      CHECK(r.metrics.size() == 20);
      for (const auto& m : r.metrics) CHECK(m.frac_scanned == 1.0);
      break;
    }
  }
  CHECK(chosen > 0.0);
}

TEST_CASE("speculative training dominates plain when the plain step is a candidate") {
  const Dataset ds = generate(5000, 10, kLr, 0.0, 3, 256).data;
  TrainConfig plain;
  plain.mode = Mode::kPlain;
  plain.alpha0 = 1e-4;
  plain.max_iters = 8;
  TrainConfig spec = plain;
  spec.mode = Mode::kSpeculative;
  spec.step_list = {1e-4, 3e-4, 1e-3};
  const TrainResult a = train(plain, ds, kLr);
  const TrainResult b = train(spec, ds, kLr);
  REQUIRE(a.metrics.size() == b.metrics.size());
  for (std::size_t k = 0; k < a.metrics.size(); ++k) CHECK(b.metrics[k].loss_est <= a.metrics[k].loss_est);
}

TEST_CASE("training is reproducible and honors the loss tolerance") {
  const Dataset ds = small_data(4000, 6, 100);
  for (Method method : {Method::kBgd, Method::kIgd}) {
    TrainConfig cfg;
    cfg.method = method;
    cfg.mode = Mode::kSpeculative;
    cfg.s_initial = 4;
    cfg.max_iters = 6;
    cfg.alpha0 = method == Method::kBgd ? 1e-3 : 1e-2;
    const TrainResult a = train(cfg, ds, kLrL2);
    const TrainResult b = train(cfg, ds, kLrL2);
    REQUIRE(a.metrics.size() == b.metrics.size());
    for (std::size_t k = 0; k < a.metrics.size(); ++k) {
      CHECK(a.metrics[k].loss_est == b.metrics[k].loss_est);
      CHECK(a.metrics[k].selected_alpha == b.metrics[k].selected_alpha);
      CHECK(a.metrics[k].s_used == (method == Method::kBgd && k == 0 ? 1u : 4u));
    }
    CHECK(same_bits(a.model.weights, b.model.weights));
    cfg.loss_delta_tol = 1e9;
    CHECK(train(cfg, ds, kLrL2).metrics.size() == 2);
  }
}

TEST_CASE("mini-batch and line-search training run") {
  const Dataset ds = small_data(3000, 5, 100);
  TrainConfig mb;
  mb.method = Method::kMinibatch;
  mb.mode = Mode::kSpeculative;
  mb.s_initial = 3;
  mb.max_iters = 3;
  const TrainResult a = train(mb, ds, kLr);
  CHECK(a.metrics.size() == 3);
  TrainConfig ls;
  ls.mode = Mode::kLineSearch;
  ls.alpha0 = 1.0;
  ls.max_iters = 3;
  const TrainResult b = train(ls, ds, kLr);
  REQUIRE(b.metrics.size() == 3);
  CHECK(b.metrics[2].loss_est < b.metrics[0].loss_est);
  CHECK(b.metrics[0].frac_scanned >= 2.0);
}
