#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace wc {

struct RunOptions {
  std::filesystem::path out_dir = ".";
  int threads = 0;      // 0 keeps the current setting
  int grid_depth = -1;  // -1 keeps each grid's own depth
  bool write_files = true;
};

// exit_code: 0 all certificates passed, 1 a certificate failed, 2 parse error, 3 precondition violation.
struct RunResult {
  int exit_code = 0;
  nlohmann::json report;
  std::vector<std::filesystem::path> files;
};

RunResult run_scenario(const nlohmann::json& scenario, const RunOptions& opt = {});
RunResult run_scenario_file(const std::filesystem::path& file, const RunOptions& opt = {});

const std::vector<std::string>& scenario_commands();

}  // namespace wc
