#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "specgd/cli.hpp"

namespace specgd::cli {

namespace {

static_assert(std::endian::native == std::endian::little, "model files are written in host order");

}  // namespace

void write_model(const std::filesystem::path& path, const Model& model) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  const auto d = static_cast<std::uint32_t>(model.dim());
  f.write(reinterpret_cast<const char*>(&d), sizeof d);
  f.write(reinterpret_cast<const char*>(model.weights.data()), static_cast<std::streamsize>(d * sizeof(double)));
  if (!f) throw IoError("write failed: " + path.string());
}

Model read_model(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read " + path.string());
  std::uint32_t d = 0;
  f.read(reinterpret_cast<char*>(&d), sizeof d);
  if (!f) throw IoError(path.string() + ": truncated model file");
  std::vector<double> w(d);
  f.read(reinterpret_cast<char*>(w.data()), static_cast<std::streamsize>(d * sizeof(double)));
  if (!f) throw IoError(path.string() + ": truncated model file");
  if (f.peek() != std::char_traits<char>::eof()) throw IoError(path.string() + ": trailing bytes after the weights");
  return Model(std::move(w));
}

std::string metrics_row(const IterationMetrics& m) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%llu,%.3f,%llu,%.17g,%u,%.17g,%.17g,%.17g,%d",
                static_cast<unsigned long long>(m.iter), m.wall_ms, static_cast<unsigned long long>(m.examples_seen),
                m.frac_scanned, m.s_used, m.selected_alpha, m.loss_est, m.loss_halfwidth, m.loss_exact ? 1 : 0);
  return buf;
}

}  // namespace specgd::cli
