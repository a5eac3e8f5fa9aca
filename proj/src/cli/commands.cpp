#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "cli/manifest.hpp"
#include "specgd/cli.hpp"

namespace specgd::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct TaskFlags {
  std::string task = "svm";
  std::string reg = "none";
  double mu = 0.0;

  void add(CLI::App& app, bool required_task) {
    auto* t = app.add_option("--task", task, "loss family")->check(CLI::IsMember({"svm", "lr"}));
    if (required_task) t->required();
    app.add_option("--reg", reg, "regularizer")->check(CLI::IsMember({"none", "l1", "l2"}));
    app.add_option("--mu", mu, "regularization weight");
  }
  TaskSpec spec() const { return TaskSpec{parse_task(task), parse_reg(reg), mu}; }
};

// Flags shared by train and bench.
struct TrainFlags {
  std::string data;
  TaskFlags task;
  std::string method = "bgd";
  std::string mode = "spec";
  std::string discipline = "merge";
  std::uint32_t steps = 1;
  bool adaptive_s = false;
  std::uint32_t s_max = 32;
  double eps = 0.05;
  std::uint32_t m_min = 2;
  double beta = 0.01;
  std::uint32_t iters = 20;
  double loss_tol = 0.0;
  std::uint32_t workers = 1;
  std::uint64_t seed = 1;
  std::optional<double> alpha0;
  double decay = 1.0;
  double sigma_log = 1.0;
  std::vector<double> step_list;
  bool intra_sync = false;
  bool no_containment = false;

  void add(CLI::App& app) {
    app.add_option("--data", data, "dataset file");
    task.add(app, false);
    app.add_option("--method", method)->check(CLI::IsMember({"bgd", "igd", "minibatch"}));
    app.add_option("--mode", mode)->check(CLI::IsMember({"plain", "spec", "approx", "linesearch"}));
    app.add_option("--discipline", discipline)->check(CLI::IsMember({"merge", "lock", "nolock"}));
    app.add_option("--steps", steps, "initial number of candidate steps s");
    app.add_flag("--adaptive-s", adaptive_s, "adapt s between iterations");
    app.add_option("--s-max", s_max);
    app.add_option("--eps", eps, "relative tolerance for early stopping (<= 0 disables)");
    app.add_option("--m-min", m_min, "converged snapshots required by the IGD stop rule");
    app.add_option("--beta", beta, "IGD stop rule tolerance");
    app.add_option("--iters", iters, "maximum iterations");
    app.add_option("--loss-tol", loss_tol, "stop when |dloss| <= tol * |loss|");
    app.add_option("--workers", workers, "partition workers (SPECGD_THREADS overrides)");
    app.add_option("--seed", seed);
    app.add_option("--alpha0", alpha0, "plain step, and center of the step distribution (default 1/N)");
    app.add_option("--decay", decay, "plain step decay per iteration");
    app.add_option("--sigma-log", sigma_log, "log-scale spread of the step distribution");
    app.add_option("--step-list", step_list, "fixed candidate steps")->delimiter(',');
    app.add_flag("--intra-sync", intra_sync, "average IGD models at every check");
    app.add_flag("--no-containment", no_containment, "disable the containment pruning rule");
  }

  // alpha0 defaults to 1/N: the objective is a sum over examples, so its
  // curvature grows with N.
  RunSpec spec(const Dataset& ds) const {
    RunSpec r;
    r.data = data;
    r.task = task.spec();
    TrainConfig& c = r.config;
    c.method = parse_method(method);
    c.mode = parse_mode(mode);
    c.discipline = parse_discipline(discipline);
    c.s_initial = steps;
    c.adaptive_s = adaptive_s;
    c.s_max = s_max;
    c.stopping.eps = eps;
    c.stopping.m_min_converged = m_min;
    c.stopping.beta = beta;
    c.stopping.containment = !no_containment;
    c.max_iters = iters;
    c.loss_delta_tol = loss_tol;
    c.workers = workers;
    c.seed = seed;
    c.alpha0 = alpha0 ? *alpha0 : 1.0 / static_cast<double>(std::max<std::uint64_t>(ds.size(), 1));
    c.decay = decay;
    c.sigma_log = sigma_log;
    c.step_list = step_list;
    c.intra_sync = intra_sync;
    return r;
  }
};

void apply_thread_override(TrainConfig& c) {
  const char* env = std::getenv("SPECGD_THREADS");
  if (env == nullptr || *env == '\0') return;
  char* end = nullptr;
  const unsigned long v = std::strtoul(env, &end, 10);
  if (*end != '\0' || v == 0 || v > 65536) throw ConfigError(std::string("SPECGD_THREADS must be a positive integer, got '") + env + "'");
  c.workers = static_cast<std::uint32_t>(v);
}

std::string command_line(const std::vector<std::string>& args) {
  std::string s;
  for (const auto& a : args) {
    if (!s.empty()) s += ' ';
    s += a;
  }
  return s;
}

fs::path sidecar(const fs::path& p) { return fs::path(p.string() + ".manifest.json"); }

void print_header(std::ostream& out, const DatasetHeader& h) {
  out << "examples " << h.n_examples << "\ndim " << h.dim << "\nblock_size " << h.block_size << "\nblocks "
      << h.num_blocks() << "\nshuffle_seed " << h.shuffle_seed << "\ndigest " << header_digest(h) << '\n';
}

int cmd_gen(std::uint64_t n, std::uint32_t d, const TaskFlags& tf, double noise, std::uint64_t seed,
            std::uint32_t block_size, const std::string& out_path, const std::string& cmd, std::ostream& out) {
  const TaskSpec task = tf.spec();
  const GeneratedData g = generate(n, d, task, noise, seed, block_size);
  g.data.write(out_path);
  json m = {{"tool", "specgd"},
            {"version", kToolVersion},
            {"command", cmd},
            {"generator", {{"n", n}, {"d", d}, {"task", tf.task}, {"noise", noise}, {"seed", seed}}},
            {"dataset", {{"path", out_path}, {"header", header_json(g.data.header())}}},
            {"truth", g.truth}};
  write_json(sidecar(out_path), m);
  print_header(out, g.data.header());
  return kOk;
}

int cmd_convert(const std::string& in, const std::string& format, std::uint32_t block_size, std::uint64_t seed,
                const std::string& out_path, const std::string& cmd, std::ostream& out) {
  const Dataset ds = convert_file(in, format == "csv" ? TextFormat::kCsv : TextFormat::kSparse, block_size, seed);
  ds.write(out_path);
  json m = {{"tool", "specgd"},
            {"version", kToolVersion},
            {"command", cmd},
            {"source", {{"path", in}, {"format", format}}},
            {"dataset", {{"path", out_path}, {"header", header_json(ds.header())}}}};
  write_json(sidecar(out_path), m);
  print_header(out, ds.header());
  return kOk;
}

Dataset load_data(const fs::path& path, bool stream) {
  if (path.empty()) throw ConfigError("--data is required");
  return stream ? Dataset::open(path) : Dataset::load(path);
}

int cmd_train(RunSpec run, const Dataset& ds, const std::string& init, const std::string& metrics_out,
              const std::string& model_out, std::string manifest_out, const std::string& cmd, std::ostream& out) {
  apply_thread_override(run.config);
  if (!init.empty()) run.config.initial = read_model(init);
  validate(run.task);
  validate(run.config, ds);

  if (manifest_out.empty()) {
    if (!metrics_out.empty()) manifest_out = sidecar(metrics_out).string();
    else if (!model_out.empty()) manifest_out = sidecar(model_out).string();
    else manifest_out = "specgd-run.manifest.json";
  }
  write_json(manifest_out, manifest_json(run, ds.header(), cmd));

  std::ofstream file;
  std::ostream* csv = &out;
  if (!metrics_out.empty()) {
    file.open(metrics_out);
    if (!file) throw IoError("cannot write " + metrics_out);
    csv = &file;
  }
  *csv << kMetricsVersionLine << '\n' << kMetricsColumns << '\n';
  csv->flush();
  const TrainResult r = train(run.config, ds, run.task, [&](const IterationMetrics& m) {
    *csv << metrics_row(m) << '\n';
    csv->flush();
  });
  if (!*csv) throw IoError("write failed: " + (metrics_out.empty() ? std::string("stdout") : metrics_out));
  if (!model_out.empty()) write_model(model_out, r.model);
  return kOk;
}

int cmd_bench(RunSpec run, const Dataset& ds, const std::vector<std::uint32_t>& s_list, std::uint32_t repeats,
              const std::string& out_path, std::ostream& out) {
  apply_thread_override(run.config);
  if (s_list.empty()) throw ConfigError("--s-list is empty");
  if (repeats < 1) throw ConfigError("--repeats must be >= 1");
  if (run.config.max_iters < 2) throw ConfigError("bench needs --iters >= 2 (the first iteration is not timed)");
  validate(run.task);
  run.config.adaptive_s = false;
  for (std::uint32_t s : s_list) {
    TrainConfig c = run.config;
    c.s_initial = s;
    validate(c, ds);
  }

  std::ofstream file;
  std::ostream* csv = &out;
  if (!out_path.empty()) {
    file.open(out_path);
    if (!file) throw IoError("cannot write " + out_path);
    csv = &file;
  }
  *csv << "# specgd-bench v1\ns,repeats,ms_per_iter,final_loss,ratio_to_first\n";
  double first = 0.0;
  for (std::size_t i = 0; i < s_list.size(); ++i) {
    TrainConfig c = run.config;
    c.s_initial = s_list[i];
    double ms_sum = 0.0;
    double loss_sum = 0.0;
    for (std::uint32_t rep = 0; rep < repeats; ++rep) {
      const TrainResult r = train(c, ds, run.task);
      double ms = 0.0;
      std::size_t timed = 0;
      for (const IterationMetrics& m : r.metrics) {
        if (m.iter < 2) continue;
        ms += m.wall_ms;
        ++timed;
      }
      // A run that converged after one iteration has nothing to time.
      ms_sum += timed ? ms / static_cast<double>(timed) : 0.0;
      loss_sum += r.metrics.empty() ? 0.0 : r.metrics.back().loss_est;
    }
    const double ms = ms_sum / repeats;
    if (i == 0) first = ms;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%u,%u,%.3f,%.17g,%.4f", s_list[i], repeats, ms, loss_sum / repeats,
                  first > 0.0 ? ms / first : 0.0);
    *csv << buf << '\n';
    csv->flush();
  }
  return kOk;
}

}  // namespace

int exit_code(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::kConfig:
    case ErrorKind::kStructural: return kUsage;
    case ErrorKind::kIo: return kIo;
    case ErrorKind::kParse: return kParse;
    case ErrorKind::kNumeric:
    case ErrorKind::kNoEstimate:
    case ErrorKind::kStepFailure: return kNumeric;
  }
  return kUsage;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Speculative gradient descent with early stopping"};
  app.name(args.empty() ? "specgd" : fs::path(args[0]).filename().string());
  app.require_subcommand(1);
  const std::string cmd = command_line(args);

  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  std::uint64_t g_n = 0;
  std::uint32_t g_d = 0;
  TaskFlags g_task;
  double g_noise = 0.0;
  std::uint64_t g_seed = 0;
  std::uint32_t g_block = kDefaultBlockSize;
  std::string g_out;
  gen->add_option("--n", g_n, "examples")->required();
  gen->add_option("--d", g_d, "features")->required();
  g_task.add(*gen, true);
  gen->add_option("--noise", g_noise, "label flip probability")->required();
  gen->add_option("--seed", g_seed)->required();
  gen->add_option("--block-size", g_block);
  gen->add_option("--out", g_out, "output dataset file")->required();

  auto* conv = app.add_subcommand("convert", "convert CSV or sparse text to the binary format");
  std::string c_in;
  std::string c_format = "csv";
  std::uint32_t c_block = kDefaultBlockSize;
  std::uint64_t c_seed = 0;
  std::string c_out;
  conv->add_option("--in", c_in, "input text file")->required();
  conv->add_option("--format", c_format)->check(CLI::IsMember({"csv", "sparse"}));
  conv->add_option("--block-size", c_block);
  conv->add_option("--seed", c_seed, "shuffle seed");
  conv->add_option("--out", c_out, "output dataset file")->required();

  auto* tr = app.add_subcommand("train", "train a model and write per-iteration metrics");
  TrainFlags t_flags;
  t_flags.add(*tr);
  std::string t_manifest;
  std::string t_init;
  std::string t_metrics;
  std::string t_model;
  std::string t_manifest_out;
  bool t_stream = false;
  tr->add_option("--manifest", t_manifest, "rerun the configuration recorded in a manifest");
  tr->add_option("--init", t_init, "initial model file");
  tr->add_option("--metrics-out", t_metrics, "metrics CSV (default stdout)");
  tr->add_option("--model-out", t_model, "final model file");
  tr->add_option("--manifest-out", t_manifest_out, "run manifest (default next to the metrics or model)");
  tr->add_flag("--stream", t_stream, "scan the file instead of loading it into memory");

  auto* be = app.add_subcommand("bench", "time iterations over a sweep of s");
  TrainFlags b_flags;
  b_flags.iters = 5;
  b_flags.add(*be);
  std::vector<std::uint32_t> b_s = {1, 2, 4, 8, 16, 32};
  std::uint32_t b_repeats = 3;
  std::string b_out;
  bool b_stream = false;
  be->add_option("--s-list", b_s, "values of s")->delimiter(',');
  be->add_option("--repeats", b_repeats);
  be->add_option("--out", b_out, "summary CSV (default stdout)");
  be->add_flag("--stream", b_stream, "scan the file instead of loading it into memory");

  // CLI11 consumes a reversed argument list without the program name.
  std::vector<std::string> rev(args.begin() + (args.empty() ? 0 : 1), args.end());
  std::reverse(rev.begin(), rev.end());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const CLI::App* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << sub->help();
    return kUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen(g_n, g_d, g_task, g_noise, g_seed, g_block, g_out, cmd, out);
    if (conv->parsed()) return cmd_convert(c_in, c_format, c_block, c_seed, c_out, cmd, out);
    if (tr->parsed()) {
      if (t_manifest.empty()) {
        const Dataset ds = load_data(t_flags.data, t_stream);
        return cmd_train(t_flags.spec(ds), ds, t_init, t_metrics, t_model, t_manifest_out, cmd, out);
      }
      RunSpec r = run_from_manifest(read_json(t_manifest));
      if (!t_flags.data.empty()) r.data = t_flags.data;
      const Dataset ds = load_data(r.data, t_stream);
      return cmd_train(std::move(r), ds, t_init, t_metrics, t_model, t_manifest_out, cmd, out);
    }
    if (be->parsed()) {
      const Dataset ds = load_data(b_flags.data, b_stream);
      return cmd_bench(b_flags.spec(ds), ds, b_s, b_repeats, b_out, out);
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::bad_alloc&) {
    err << "error: out of memory\n";
    return kIo;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kIo;
  }
  return kUsage;
}

int run(int argc, char** argv) { return run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr); }

}  // namespace specgd::cli
