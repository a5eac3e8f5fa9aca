#pragma once

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "specgd/data_store.hpp"
#include "specgd/task_math.hpp"

namespace specgd::testing {

/// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("specgd-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

/// Central finite difference of example_loss with respect to each weight.
inline std::vector<double> fd_gradient(const TaskSpec& task, const Model& m, ExampleView ex, double h) {
  std::vector<double> g(m.dim());
  Model probe = m;
  for (std::size_t j = 0; j < m.dim(); ++j) {
    const double w = m.weights[j];
    probe.weights[j] = w + h;
    const double up = example_loss(task, probe, ex);
    probe.weights[j] = w - h;
    const double down = example_loss(task, probe, ex);
    probe.weights[j] = w;
    g[j] = (up - down) / (2.0 * h);
  }
  return g;
}

/// Largest componentwise relative error, with the denominator floored at a
/// small fraction of the gradient's largest component.
inline double max_relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double scale = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) scale = std::max({scale, std::fabs(a[j]), std::fabs(b[j])});
  double worst = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double den = std::max({std::fabs(a[j]), std::fabs(b[j]), 1e-6 * scale, 1e-300});
    worst = std::max(worst, std::fabs(a[j] - b[j]) / den);
  }
  return worst;
}

/// Random (model, example) pair whose margin y*(w.x) equals `margin`.
struct FdPoint {
  Model model;
  Example ex;
};

inline FdPoint random_point(std::mt19937_64& rng, std::size_t d, double margin) {
  std::normal_distribution<double> normal(0.0, 1.0);
  FdPoint p;
  p.ex.features.resize(d);
  for (double& v : p.ex.features) v = normal(rng);
  p.ex.label = std::bernoulli_distribution(0.5)(rng) ? 1.0 : -1.0;
  std::vector<double> w(d);
  for (double& v : w) v = normal(rng);
  const double t = p.ex.label * dot(w, p.ex.features);
  if (std::fabs(t) > 1e-9)
    for (double& v : w) v *= margin / t;
  p.model = Model(std::move(w));
  return p;
}

/// Writes `rows` in exactly the given storage order (no shuffle) and loads
/// the file back.
inline Dataset raw_dataset(const TempDir& dir, const std::string& name, const std::vector<Example>& rows,
                           std::uint32_t block_size) {
  DatasetHeader h;
  h.n_examples = rows.size();
  h.dim = static_cast<std::uint32_t>(rows.front().features.size());
  h.block_size = block_size;
  std::ofstream out(dir / name, std::ios::binary);
  const auto head = h.encode();
  out.write(reinterpret_cast<const char*>(head.data()), head.size());
  for (std::uint64_t b = 0; b < h.num_blocks(); ++b) {
    const std::uint32_t count = h.block_count(b);
    std::vector<unsigned char> buf(4 + static_cast<std::size_t>(count) * (h.dim + 1) * 8);
    std::memcpy(buf.data(), &count, 4);
    unsigned char* p = buf.data() + 4;
    for (std::uint32_t r = 0; r < count; ++r) {
      const Example& e = rows[h.block_first_row(b) + r];
      for (double v : e.features) std::memcpy(p, &v, 8), p += 8;
      std::memcpy(p, &e.label, 8);
      p += 8;
    }
    const std::uint32_t crc = crc32(buf);
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    out.write(reinterpret_cast<const char*>(&crc), 4);
  }
  out.close();
  return Dataset::load(dir / name);
}

/// Plain sequential incremental pass in storage order from `start_block`.
inline Model serial_igd(const TaskSpec& task, const Dataset& ds, Model m, double alpha, std::uint64_t start_block) {
  ScanStream stream(ds, start_block);
  stream.for_each_example([&](ExampleView ex) {
    const std::vector<double> g = example_gradient(task, m, ex);
    const std::vector<double> r = regularizer_subgradient(task, m);
    for (std::size_t j = 0; j < m.dim(); ++j) m.weights[j] = m.weights[j] - alpha * (g[j] + r[j]);
  });
  return m;
}

}  // namespace specgd::testing
