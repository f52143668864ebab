#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

namespace biomm {

/// One per command invocation, written next to the command's outputs.
struct RunManifest {
  std::string command;
  std::string config_hash;  // FNV-1a of the canonical config JSON, hex
  std::uint64_t seed = 0;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::string version;
  double wall_time_s = 0.0;
};

nlohmann::json to_json(const RunManifest& m);
std::string config_hash(const nlohmann::json& config);

/// Exit codes: 0 success, 1 validation error (bad flags, config, input
/// data), 2 runtime failure.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace biomm
