#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "stefan/autodiff.hpp"
#include "stefan/levelset.hpp"
#include "stefan/scenario.hpp"

namespace stefan {

/// Shortest representation that parses back to the same double ('.' decimal).
std::string format_double(double v);
/// Fixed notation with `digits` decimals.
std::string format_fixed(double v, int digits);

/// Whole-string parses; errors name `field`.
double parse_double(std::string_view text, std::string_view field);
long long parse_int(std::string_view text, std::string_view field);
bool parse_bool(std::string_view text, std::string_view field);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& contents);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

/// Comma separated, LF line endings.
std::string format_csv(const CsvTable& table);
CsvTable parse_csv(const std::string& text);
void write_csv(const std::string& path, const CsvTable& table);
CsvTable read_csv(const std::string& path);

struct Checkpoint {
  NetworkArch arch;
  ScenarioConfig scenario;
  std::uint64_t iteration = 0;
  ad::ParamStore params;
};

/// One JSON header line followed by the parameters as little-endian float64.
void write_checkpoint(const std::string& path, const Checkpoint& ckpt);
/// Throws IoError when the file is unreadable, truncated or fails its checksum.
Checkpoint read_checkpoint(const std::string& path);

std::string hex64(std::uint64_t v);

}  // namespace stefan
