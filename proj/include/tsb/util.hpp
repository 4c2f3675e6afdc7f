#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace tsb {

// Hex-encoded SHA-256 of `data`. Used for content-addressed cache keys.
std::string sha256_hex(std::string_view data);

// Stable 64-bit FNV-1a. Seed derivation must be identical across
// processes and platforms, so std::hash is not usable here.
std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ULL);

// "Sat 05/15/2004 4PM" for 2004-05-15T16:00:00Z. Always UTC.
std::string format_timestamp(std::int64_t epoch_seconds);

// Lowercase alphanumeric tokens, split on everything else.
std::vector<std::string> tokenize(std::string_view text);

// Whitespace-separated token count; the summary "length".
int word_count(std::string_view text);

std::string to_lower(std::string_view s);
std::string trim(std::string_view s);

// Write `content` to `path` via a temp file + rename.
void atomic_write_file(const std::string& path, const std::string& content);

}  // namespace tsb
