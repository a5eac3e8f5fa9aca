#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"
#include "specgd/data_store.hpp"
#include "specgd/engine.hpp"

namespace specgd::cli {

struct RunSpec {
  TrainConfig config;
  TaskSpec task;
  std::filesystem::path data;
};

std::string task_name(LossFamily f);
LossFamily parse_task(const std::string& s);
std::string reg_name(Regularizer r);
Regularizer parse_reg(const std::string& s);
std::string method_name(Method m);
Method parse_method(const std::string& s);
std::string mode_name(Mode m);
Mode parse_mode(const std::string& s);
std::string discipline_name(Discipline d);
Discipline parse_discipline(const std::string& s);

/// crc32 of the encoded header, as 8 hex digits.
std::string header_digest(const DatasetHeader& h);

nlohmann::json header_json(const DatasetHeader& h);
nlohmann::json manifest_json(const RunSpec& run, const DatasetHeader& h, const std::string& command);
/// Inverse of manifest_json for the parts that determine the run.
RunSpec run_from_manifest(const nlohmann::json& j);

void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace specgd::cli
