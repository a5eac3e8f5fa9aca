#include <cmath>
#include <random>

#include "doctest.h"
#include "specgd/data_store.hpp"
#include "specgd/errors.hpp"
#include "specgd/estimators.hpp"

using namespace specgd;

namespace {

EstimatorAccumulator acc_of(std::initializer_list<double> values) {
  EstimatorAccumulator a;
  for (double v : values) a.add(v);
  return a;
}

// Per-example hinge losses of a partially trained model, in storage order.
std::vector<double> example_losses(const Dataset& ds, const std::vector<double>& truth) {
  const TaskSpec task{LossFamily::kSvmHinge, Regularizer::kNone, 0.0};
  std::vector<double> w = truth;
  for (double& v : w) v *= 0.3;
  const Model m(w);
  std::vector<double> out;
  for (const auto& e : ds.examples()) out.push_back(example_loss(task, m, e.view()));
  return out;
}

EstimatorAccumulator prefix(const std::vector<double>& values, const DatasetHeader& h, std::uint64_t start,
                            std::uint64_t n) {
  EstimatorAccumulator a;
  std::uint64_t b = start;
  while (a.n < n) {
    const std::uint64_t first = h.block_first_row(b);
    for (std::uint64_t i = 0; i < h.block_count(b); ++i) a.add(values[first + i]);
    b = (b + 1) % h.num_blocks();
  }
  return a;
}

}  // namespace

TEST_CASE("accumulate by hand") {
  const auto a = accumulate({}, 3.0);
  CHECK(a == EstimatorAccumulator{1, 3.0, 9.0});
  CHECK(accumulate(a, -1.0) == EstimatorAccumulator{2, 2.0, 10.0});
  EstimatorAccumulator z;
  for (int i = 0; i < 17; ++i) z = accumulate(z, 0.0);
  CHECK(z == EstimatorAccumulator{17, 0.0, 0.0});
  CHECK_THROWS_AS(accumulate({}, NAN), NumericError);
  CHECK_THROWS_AS(accumulate({}, INFINITY), NumericError);
}

TEST_CASE("merge identity and commutativity") {
  const auto a = acc_of({1.0, 2.5, -3.0});
  const auto b = acc_of({4.0, 0.5});
  CHECK(merge(a, EstimatorAccumulator{}) == a);
  CHECK(merge(EstimatorAccumulator{}, a) == a);
  CHECK(merge(a, b) == merge(b, a));
}

TEST_CASE("fold of four partitions equals a single pass") {
  // Integer values keep every partial sum exact, so equality is bitwise.
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> pick(-1000, 1000);
  std::vector<double> values(1000);
  for (double& v : values) v = pick(rng);
  EstimatorAccumulator single;
  EstimatorAccumulator parts[4];
  for (std::size_t i = 0; i < values.size(); ++i) {
    single.add(values[i]);
    parts[i % 4].add(values[i]);
  }
  const auto folded = merge(merge(parts[0], parts[1]), merge(parts[2], parts[3]));
  CHECK(folded == single);
  const auto r1 = report(folded, 5000);
  const auto r2 = report(single, 5000);
  CHECK(r1.estimate == r2.estimate);
  CHECK(r1.half_width == r2.half_width);
}

TEST_CASE("report by hand") {
  CHECK(z_value(0.95) == doctest::Approx(1.959964).epsilon(1e-6));
  const auto r = report(acc_of({0.0, 2.0}), 4);
  CHECK(r.estimate == 4.0);
  CHECK(r.half_width == doctest::Approx(1.959964 * std::sqrt(8.0)).epsilon(1e-6));
  CHECK(r.half_width == doctest::Approx(5.543).epsilon(1e-4));
  const auto flat = report(acc_of({1.0, 1.0, 1.0}), 6);
  CHECK(flat.estimate == 6.0);
  CHECK(flat.half_width == 0.0);
  const auto one = report(acc_of({5.0}), 10);
  CHECK(one.estimate == 50.0);
  CHECK(one.half_width == 0.0);
}

TEST_CASE("full scan is exact") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal;
  EstimatorAccumulator a;
  double direct = 0.0;
  for (int i = 0; i < 777; ++i) {
    const double v = normal(rng);
    a.add(v);
    direct += v;
  }
  const auto r = report(a, 777);
  CHECK(r.estimate == direct);
  CHECK(r.half_width == 0.0);
  CHECK(r.exact());
}

TEST_CASE("report preconditions") {
  CHECK_THROWS_AS(report({}, 10), NoEstimateError);
  CHECK_THROWS_AS(report(acc_of({1.0, 2.0, 3.0}), 2), StructuralError);
  CHECK_THROWS_AS(report(acc_of({1.0}), 2, 1.0), ConfigError);
}

TEST_CASE("report_vector agrees with scalar reports") {
  const std::vector<double> sum = {3.0, -1.0};
  const std::vector<double> sq = {9.0, 5.0};
  const auto g = report_vector(3, sum, sq, 30);
  const auto r0 = report({3, 3.0, 9.0}, 30);
  const auto r1 = report({3, -1.0, 5.0}, 30);
  CHECK(g[0].estimate == r0.estimate);
  CHECK(g[0].half_width == r0.half_width);
  CHECK(g[1].estimate == r1.estimate);
  CHECK(g[1].half_width == r1.half_width);
}

TEST_CASE("prefix estimates are unbiased over random starts") {
  const auto g = generate(20000, 8, {}, 0.1, 3, 100);
  const auto values = example_losses(g.data, g.truth);
  double exact = 0.0;
  for (double v : values) exact += v;
  std::mt19937_64 rng(4);
  const int trials = 2000;
  double mean = 0.0, sq = 0.0;
  for (int t = 0; t < trials; ++t) {
    const auto r = report(prefix(values, g.data.header(), rng() % g.data.num_blocks(), 1000), 20000);
    mean += r.estimate;
    sq += r.estimate * r.estimate;
  }
  mean /= trials;
  const double sd = std::sqrt(sq / trials - mean * mean);
  CHECK(std::fabs(mean - exact) < 3.0 * sd / std::sqrt(static_cast<double>(trials)));
}

TEST_CASE("intervals cover the exact sum about 95% of the time") {
  const auto g = generate(20000, 8, {}, 0.1, 5, 100);
  const auto base = example_losses(g.data, g.truth);
  double exact = 0.0;
  for (double v : base) exact += v;
  int covered = 0;
  const int trials = 1000;
  for (int t = 0; t < trials; ++t) {
    const Dataset shuffled = g.data.reshuffle(1000 + t);
    const auto values = example_losses(shuffled, g.truth);
    const auto r = report(prefix(values, shuffled.header(), 0, 2000), 20000);
    covered += std::fabs(r.estimate - exact) <= r.half_width;
  }
  const double rate = static_cast<double>(covered) / trials;
  CHECK(rate >= 0.92);
  CHECK(rate <= 0.98);
}

TEST_CASE("half-width shrinks when the sample doubles") {
  const auto g = generate(20000, 8, {}, 0.1, 6, 100);
  const auto values = example_losses(g.data, g.truth);
  std::mt19937_64 rng(7);
  double at_n = 0.0, at_2n = 0.0;
  for (int t = 0; t < 200; ++t) {
    const std::uint64_t start = rng() % g.data.num_blocks();
    at_n += report(prefix(values, g.data.header(), start, 1000), 20000).half_width;
    at_2n += report(prefix(values, g.data.header(), start, 2000), 20000).half_width;
  }
  CHECK(at_n > at_2n);
}
