#include "frvi/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "frvi/tensor.hpp"

namespace frvi {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const char* kind) {
  throw InputError("config key '" + key + "': expected " + kind + ", got '" + value + "'");
}

}  // namespace

Settings parse_settings(std::istream& in, const std::string& source) {
  Settings out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto sep = line.find_first_of(" \t");
    if (sep == std::string::npos) {
      throw InputError(source + ":" + std::to_string(lineno) + ": missing value for '" +
                       line + "'");
    }
    out[line.substr(0, sep)] = trim(line.substr(sep));
  }
  return out;
}

Settings read_settings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  return parse_settings(in, path);
}

std::string format_settings(const Settings& settings) {
  std::ostringstream os;
  for (const auto& [k, v] : settings) os << k << ' ' << v << '\n';
  return os.str();
}

std::string format_double(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

std::int64_t parse_int(const std::string& key, const std::string& value) {
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || p != value.data() + value.size()) bad_value(key, value, "an integer");
  return v;
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || p != value.data() + value.size()) {
    bad_value(key, value, "a non-negative integer");
  }
  return v;
}

double parse_double(const std::string& key, const std::string& value) {
  std::istringstream is(value);
  is.imbue(std::locale::classic());
  double v = 0;
  is >> v;
  if (!is || !is.eof()) bad_value(key, value, "a number");
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true" || value == "yes" || value == "on") return true;
  if (value == "0" || value == "false" || value == "no" || value == "off") return false;
  bad_value(key, value, "a boolean");
}

}  // namespace frvi
