#include "cli/manifest.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <map>

#include "specgd/cli.hpp"
#include "specgd/errors.hpp"

namespace specgd::cli {

namespace {

using nlohmann::json;

template <class E>
const std::map<std::string, E>& names();

template <>
const std::map<std::string, LossFamily>& names() {
  static const std::map<std::string, LossFamily> m{{"svm", LossFamily::kSvmHinge}, {"lr", LossFamily::kLogistic}};
  return m;
}
template <>
const std::map<std::string, Regularizer>& names() {
  static const std::map<std::string, Regularizer> m{
      {"none", Regularizer::kNone}, {"l1", Regularizer::kL1}, {"l2", Regularizer::kL2}};
  return m;
}
template <>
const std::map<std::string, Method>& names() {
  static const std::map<std::string, Method> m{
      {"bgd", Method::kBgd}, {"igd", Method::kIgd}, {"minibatch", Method::kMinibatch}};
  return m;
}
template <>
const std::map<std::string, Mode>& names() {
  static const std::map<std::string, Mode> m{{"plain", Mode::kPlain},
                                             {"spec", Mode::kSpeculative},
                                             {"approx", Mode::kApproximate},
                                             {"linesearch", Mode::kLineSearch}};
  return m;
}
template <>
const std::map<std::string, Discipline>& names() {
  static const std::map<std::string, Discipline> m{
      {"merge", Discipline::kMerge}, {"lock", Discipline::kLock}, {"nolock", Discipline::kNoLock}};
  return m;
}

template <class E>
std::string name_of(E v) {
  for (const auto& [k, e] : names<E>())
    if (e == v) return k;
  return "?";
}

template <class E>
E parse_name(const std::string& s, const char* what) {
  const auto& m = names<E>();
  const auto it = m.find(s);
  if (it == m.end()) throw ConfigError(std::string("unknown ") + what + " '" + s + "'");
  return it->second;
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

std::string task_name(LossFamily f) { return name_of(f); }
LossFamily parse_task(const std::string& s) { return parse_name<LossFamily>(s, "task"); }
std::string reg_name(Regularizer r) { return name_of(r); }
Regularizer parse_reg(const std::string& s) { return parse_name<Regularizer>(s, "regularizer"); }
std::string method_name(Method m) { return name_of(m); }
Method parse_method(const std::string& s) { return parse_name<Method>(s, "method"); }
std::string mode_name(Mode m) { return name_of(m); }
Mode parse_mode(const std::string& s) { return parse_name<Mode>(s, "mode"); }
std::string discipline_name(Discipline d) { return name_of(d); }
Discipline parse_discipline(const std::string& s) { return parse_name<Discipline>(s, "discipline"); }

std::string header_digest(const DatasetHeader& h) {
  const auto bytes = h.encode();
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", crc32(bytes));
  return buf;
}

json header_json(const DatasetHeader& h) {
  return {{"n_examples", h.n_examples},
          {"dim", h.dim},
          {"block_size", h.block_size},
          {"shuffle_seed", h.shuffle_seed},
          {"digest", header_digest(h)}};
}

json manifest_json(const RunSpec& run, const DatasetHeader& h, const std::string& command) {
  const TrainConfig& c = run.config;
  json cfg = {
      {"method", method_name(c.method)},
      {"mode", mode_name(c.mode)},
      {"discipline", discipline_name(c.discipline)},
      {"s_initial", c.s_initial},
      {"adaptive_s", c.adaptive_s},
      {"s_max", c.s_max},
      {"max_iters", c.max_iters},
      {"loss_delta_tol", c.loss_delta_tol},
      {"stopping",
       {{"eps", c.stopping.eps},
        {"m_min_converged", c.stopping.m_min_converged},
        {"beta", c.stopping.beta},
        {"overlap_eps", c.stopping.overlap_eps},
        {"containment", c.stopping.containment}}},
      {"checks",
       {{"first_fraction", c.checks.first_fraction},
        {"growth", c.checks.growth},
        {"densify", c.checks.densify},
        {"densify_below", c.checks.densify_below}}},
      {"alpha0", c.alpha0},
      {"decay", c.decay},
      {"sigma_log", c.sigma_log},
      {"kappa", c.kappa},
      {"step_list", c.step_list},
      {"step_batch",
       {{"mean", c.step_batch.mean}, {"cov", c.step_batch.cov}, {"kappa", c.step_batch.kappa}}},
      {"c1", c.c1},
      {"rho", c.rho},
      {"workers", c.workers},
      {"seed", c.seed},
      {"intra_sync", c.intra_sync},
      {"initial", c.initial.weights},
  };
  return {{"tool", "specgd"},
          {"version", kToolVersion},
          {"command", command},
          {"started", utc_now()},
          {"task", {{"family", task_name(run.task.family)}, {"reg", reg_name(run.task.reg)}, {"mu", run.task.mu}}},
          {"dataset", {{"path", run.data.string()}, {"header", header_json(h)}}},
          {"seeds", {{"train", c.seed}, {"shuffle", h.shuffle_seed}}},
          {"config", cfg}};
}

RunSpec run_from_manifest(const json& j) {
  try {
    RunSpec r;
    const json& t = j.at("task");
    r.task = TaskSpec{parse_task(t.at("family")), parse_reg(t.at("reg")), t.at("mu").get<double>()};
    r.data = j.at("dataset").at("path").get<std::string>();
    const json& c = j.at("config");
    TrainConfig& cfg = r.config;
    cfg.method = parse_method(c.at("method"));
    cfg.mode = parse_mode(c.at("mode"));
    cfg.discipline = parse_discipline(c.at("discipline"));
    c.at("s_initial").get_to(cfg.s_initial);
    c.at("adaptive_s").get_to(cfg.adaptive_s);
    c.at("s_max").get_to(cfg.s_max);
    c.at("max_iters").get_to(cfg.max_iters);
    c.at("loss_delta_tol").get_to(cfg.loss_delta_tol);
    const json& st = c.at("stopping");
    st.at("eps").get_to(cfg.stopping.eps);
    st.at("m_min_converged").get_to(cfg.stopping.m_min_converged);
    st.at("beta").get_to(cfg.stopping.beta);
    st.at("overlap_eps").get_to(cfg.stopping.overlap_eps);
    st.at("containment").get_to(cfg.stopping.containment);
    const json& ch = c.at("checks");
    ch.at("first_fraction").get_to(cfg.checks.first_fraction);
    ch.at("growth").get_to(cfg.checks.growth);
    ch.at("densify").get_to(cfg.checks.densify);
    ch.at("densify_below").get_to(cfg.checks.densify_below);
    c.at("alpha0").get_to(cfg.alpha0);
    c.at("decay").get_to(cfg.decay);
    c.at("sigma_log").get_to(cfg.sigma_log);
    c.at("kappa").get_to(cfg.kappa);
    c.at("step_list").get_to(cfg.step_list);
    const json& sb = c.at("step_batch");
    sb.at("mean").get_to(cfg.step_batch.mean);
    sb.at("cov").get_to(cfg.step_batch.cov);
    sb.at("kappa").get_to(cfg.step_batch.kappa);
    c.at("c1").get_to(cfg.c1);
    c.at("rho").get_to(cfg.rho);
    c.at("workers").get_to(cfg.workers);
    c.at("seed").get_to(cfg.seed);
    c.at("intra_sync").get_to(cfg.intra_sync);
    cfg.initial = Model(c.at("initial").get<std::vector<double>>());
    return r;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("manifest: ") + e.what());
  }
}

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  f << j.dump(2) << '\n';
  if (!f) throw IoError("write failed: " + path.string());
}

json read_json(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read " + path.string());
  try {
    return json::parse(f);
  } catch (const json::parse_error& e) {
    throw ParseError(0, path.string() + ": " + e.what());
  }
}

}  // namespace specgd::cli
