#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

namespace mpa::io {

using KeyValues = std::map<std::string, std::string>;

// `key = value` lines; `#` starts a comment; blank lines ignored. Throws
// FormatError on a malformed line or duplicate key.
KeyValues parse_key_values(std::string_view text, std::string_view origin = "<config>");
KeyValues load_key_values(const std::filesystem::path& path);
std::string format_key_values(const KeyValues& kv);

// Strict numeric parsing; FormatError names the key on failure.
std::size_t parse_size(const std::string& key, const std::string& value);
std::uint64_t parse_u64(const std::string& key, const std::string& value);
double parse_double(const std::string& key, const std::string& value);
bool parse_bool(const std::string& key, const std::string& value);

// Shortest text that parses back to the same float.
std::string format_float(float v);

}  // namespace mpa::io
