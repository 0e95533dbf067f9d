#pragma once

// Flat key=value configuration files and RFC-4180-style CSV output with
// full-precision, deterministic number formatting.

#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace qkd {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// Parses `key = value` lines; '#' starts a comment, blank lines are skipped.
// Duplicate keys keep the last occurrence.
inline std::map<std::string, std::string> parse_config(std::istream& in) {
  std::map<std::string, std::string> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config line " + std::to_string(lineno) +
                               ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw std::runtime_error("config line " + std::to_string(lineno) +
                               ": empty key");
    out[key] = value;
  }
  return out;
}

inline double config_double(const std::map<std::string, std::string>& cfg,
                            const std::string& key) {
  const auto it = cfg.find(key);
  if (it == cfg.end())
    throw std::runtime_error("config: missing key '" + key + "'");
  size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(it->second, &pos);
  } catch (const std::exception&) {
    throw std::runtime_error("config: key '" + key + "' is not a number");
  }
  if (pos != it->second.size())
    throw std::runtime_error("config: key '" + key + "' is not a number");
  return v;
}

inline double config_double_or(const std::map<std::string, std::string>& cfg,
                               const std::string& key, double fallback) {
  return cfg.count(key) ? config_double(cfg, key) : fallback;
}

// 17 significant digits: doubles round-trip exactly
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.16e", v);
  return buf;
}

// RFC-4180 field quoting: quote when the field contains comma, quote, or
// newline; double embedded quotes.
inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    out += c;
    if (c == '"') out += '"';
  }
  out += '"';
  return out;
}

class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& out) : out_(out) {}

  void row(const std::vector<std::string>& fields) {
    for (size_t i = 0; i < fields.size(); ++i) {
      if (i) out_ << ',';
      out_ << csv_field(fields[i]);
    }
    out_ << '\n';
  }

 private:
  std::ostream& out_;
};

}  // namespace qkd
