#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "specgd/engine.hpp"
#include "specgd/errors.hpp"

namespace specgd::cli {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr const char* kMetricsVersionLine = "# specgd-metrics v1";
inline constexpr const char* kMetricsColumns =
    "iter,wall_ms,examples_seen,frac_scanned,s_used,selected_alpha,loss_est,loss_halfwidth,loss_exact_flag";

/// Process exit codes.
enum Exit : int {
  kOk = 0,
  kUsage = 2,
  kIo = 3,
  kParse = 4,
  kNumeric = 5,
};

int exit_code(ErrorKind kind) noexcept;

/// Runs one subcommand (gen, convert, train, bench). argv[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

/// Little-endian u32 dimension followed by the weights as f64.
void write_model(const std::filesystem::path& path, const Model& model);
Model read_model(const std::filesystem::path& path);

std::string metrics_row(const IterationMetrics& m);

}  // namespace specgd::cli
