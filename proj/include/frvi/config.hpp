#pragma once

// Flat "key value" text configuration. Blank lines and lines starting with
// '#' are ignored; the value is the rest of the line after the first run of
// whitespace.

#include <cstdint>
#include <istream>
#include <map>
#include <string>

namespace frvi {

using Settings = std::map<std::string, std::string>;

Settings parse_settings(std::istream& in, const std::string& source);
Settings read_settings(const std::string& path);
std::string format_settings(const Settings& settings);

// Shortest round-trip representation ("%.17g").
std::string format_double(double value);

// Typed accessors; a malformed value throws InputError naming the key.
std::int64_t parse_int(const std::string& key, const std::string& value);
std::uint64_t parse_u64(const std::string& key, const std::string& value);
double parse_double(const std::string& key, const std::string& value);
bool parse_bool(const std::string& key, const std::string& value);

}  // namespace frvi
