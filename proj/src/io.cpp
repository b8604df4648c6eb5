#include "stefan/io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

namespace stefan {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string format_fixed(double v, int digits) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, digits);
  return std::string(buf, res.ptr);
}

namespace {
std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}
}  // namespace

double parse_double(std::string_view text, std::string_view field) {
  text = trim(text);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw ConfigError(std::string(field) + ": expected a number, got '" + std::string(text) + "'");
  }
  return v;
}

long long parse_int(std::string_view text, std::string_view field) {
  text = trim(text);
  long long v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw ConfigError(std::string(field) + ": expected an integer, got '" + std::string(text) + "'");
  }
  return v;
}

bool parse_bool(std::string_view text, std::string_view field) {
  text = trim(text);
  if (text == "1" || text == "true" || text == "yes" || text == "on") return true;
  if (text == "0" || text == "false" || text == "no" || text == "off") return false;
  throw ConfigError(std::string(field) + ": expected a boolean, got '" + std::string(text) + "'");
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << contents;
  if (!out) throw IoError("write failed for " + path);
}

std::string format_csv(const CsvTable& table) {
  std::string out;
  for (std::size_t i = 0; i < table.header.size(); ++i) {
    if (i) out += ',';
    out += table.header[i];
  }
  out += '\n';
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      out += format_double(row[i]);
    }
    out += '\n';
  }
  return out;
}

CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  std::stringstream ss(text);
  std::string line;
  bool header = true;
  while (std::getline(ss, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ls(line);
    std::string cell;
    if (header) {
      while (std::getline(ls, cell, ',')) t.header.push_back(cell);
      header = false;
      continue;
    }
    std::vector<double> row;
    while (std::getline(ls, cell, ',')) row.push_back(parse_double(cell, "csv cell"));
    t.rows.push_back(std::move(row));
  }
  return t;
}

void write_csv(const std::string& path, const CsvTable& table) { write_text_file(path, format_csv(table)); }

CsvTable read_csv(const std::string& path) {
  try {
    return parse_csv(read_text_file(path));
  } catch (const ConfigError& e) {
    throw IoError(path + ": " + e.what());
  }
}

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

namespace {

std::string encode_le(const std::vector<double>& values) {
  std::string bytes(values.size() * 8, '\0');
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(values[i]);
    for (int b = 0; b < 8; ++b) {
      bytes[i * 8 + b] = static_cast<char>(bits & 0xff);
      bits >>= 8;
    }
  }
  return bytes;
}

std::vector<double> decode_le(std::string_view bytes) {
  std::vector<double> values(bytes.size() / 8);
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 7; b >= 0; --b) bits = (bits << 8) | static_cast<unsigned char>(bytes[i * 8 + b]);
    values[i] = std::bit_cast<double>(bits);
  }
  return values;
}

}  // namespace

void write_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const std::string payload = encode_le(ckpt.params.data());
  nlohmann::json h;
  h["format"] = "stefan-dls-checkpoint";
  h["version"] = 1;
  h["arch"] = {{"dim", ckpt.arch.dim},
               {"hidden_layers", ckpt.arch.hidden_layers},
               {"width", ckpt.arch.width},
               {"horizon", ckpt.arch.horizon},
               {"activation", ckpt.arch.activation}};
  h["scenario_hash"] = hex64(ckpt.scenario.hash());
  h["scenario"] = ckpt.scenario.to_kv();
  h["iteration"] = ckpt.iteration;
  h["param_count"] = ckpt.params.size();
  h["payload_fnv1a"] = hex64(fnv1a(payload));

  const std::string tmp = path + ".tmp";
  write_text_file(tmp, h.dump() + "\n" + payload);
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place: " + path);
}

Checkpoint read_checkpoint(const std::string& path) {
  const std::string bytes = read_text_file(path);
  const auto nl = bytes.find('\n');
  if (nl == std::string::npos) throw IoError(path + ": checkpoint header missing");
  Checkpoint ck;
  try {
    const auto h = nlohmann::json::parse(bytes.substr(0, nl));
    if (h.at("format") != "stefan-dls-checkpoint") throw IoError(path + ": not a checkpoint file");
    const auto& a = h.at("arch");
    ck.arch.dim = a.at("dim");
    ck.arch.hidden_layers = a.at("hidden_layers");
    ck.arch.width = a.at("width");
    ck.arch.horizon = a.at("horizon");
    ck.arch.activation = a.at("activation");
    ck.iteration = h.at("iteration");
    ck.scenario = ScenarioConfig::from_kv(h.at("scenario").get<std::map<std::string, std::string>>());
    const std::size_t count = h.at("param_count");
    const std::string_view payload(bytes.data() + nl + 1, bytes.size() - nl - 1);
    if (payload.size() != count * 8) throw IoError(path + ": parameter block truncated or oversized");
    if (hex64(fnv1a(payload)) != h.at("payload_fnv1a").get<std::string>()) {
      throw IoError(path + ": parameter block checksum mismatch");
    }
    if (hex64(ck.scenario.hash()) != h.at("scenario_hash").get<std::string>()) {
      throw IoError(path + ": scenario hash mismatch");
    }
    ck.params = zero_params(ck.arch);
    if (ck.params.size() != count) throw IoError(path + ": parameter count does not match architecture");
    ck.params.data() = decode_le(payload);
    if (!ck.params.all_finite()) throw IoError(path + ": non-finite parameters");
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": malformed checkpoint header (" + e.what() + ")");
  } catch (const ConfigError& e) {
    throw IoError(path + ": invalid scenario in checkpoint (" + e.what() + ")");
  }
  return ck;
}

}  // namespace stefan
