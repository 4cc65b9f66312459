#pragma once

#include <map>
#include <string>
#include <vector>

namespace orbitlab {

// Key-value configuration text: `[section]` headers, `key = value` lines,
// `#` comments. Keys before any header belong to section "".
using ConfigSection = std::map<std::string, std::string>;
using ConfigDoc = std::map<std::string, ConfigSection>;

ConfigDoc parse_config(const std::string& text);
std::string write_config(const ConfigDoc& doc);

// Top-level items of a bracketed array, e.g. "[1, [2, 3]]" -> {"1", "[2, 3]"}.
std::vector<std::string> parse_array(const std::string& raw);
double parse_number(const std::string& raw);
long long parse_integer(const std::string& raw);

// Shortest decimal that round-trips.
std::string format_double(double x);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

// 64-bit FNV-1a, hex encoded. Stable across platforms, used for content hashes.
std::string content_hash(const std::string& data);

}  // namespace orbitlab
