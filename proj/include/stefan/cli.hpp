#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "stefan/scenario.hpp"

namespace stefan::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitIo = 3;

struct RunManifest {
  std::string scenario;     // builtin name, empty when a config file is used
  std::string config_path;  // config file, empty for builtins
  std::uint64_t seed = 0;
  std::string out_dir;
  std::vector<std::string> overrides;  // key=value in command-line order

  /// Resolves the scenario and applies the overrides.
  ScenarioConfig resolve() const;
  std::string to_json(const ScenarioConfig& resolved) const;
  /// Creates out_dir and writes manifest.json; IoError if one exists and !force.
  void write(const ScenarioConfig& resolved, bool force) const;
};

/// Full command-line entry point; returns the process exit code.
int run(int argc, char** argv);

/// Parses "0,0.5,1" into numbers; ConfigError naming `field` on bad input.
std::vector<double> parse_list(const std::string& text, const std::string& field);

}  // namespace stefan::cli
