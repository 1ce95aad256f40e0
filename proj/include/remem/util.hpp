#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace remem {

// ---- string helpers ------------------------------------------------------
// ASCII-only transforms; multibyte sequences pass through untouched.

std::string ascii_lower(std::string_view s);
std::string trim(std::string_view s);

// Collapses runs of whitespace to single spaces and trims the ends.
std::string collapse_whitespace(std::string_view s);

// Canonical phrase key: lowercased + whitespace-collapsed. Two surface forms
// with the same key share one phrase node.
std::string dedup_key(std::string_view surface);

// Splits on any of the given delimiter characters; empty pieces are dropped.
std::vector<std::string> split(std::string_view s, std::string_view delims);

bool starts_with(std::string_view s, std::string_view prefix);
bool ends_with(std::string_view s, std::string_view suffix);
bool contains_fold(std::string_view haystack, std::string_view needle);

// ---- hashing / deterministic RNG ----------------------------------------

std::uint64_t fnv1a64(std::string_view data);

// splitmix64 step: advances state, returns the mixed output.
std::uint64_t splitmix64(std::uint64_t& state);

// ---- logging -------------------------------------------------------------
// Warnings go to stderr by default; tests can capture them.

void log_warn(const std::string& message);
void set_warn_sink(std::function<void(const std::string&)> sink);

// ---- parallel map --------------------------------------------------------
// Applies fn to [0, n) across worker threads, preserving index order in the
// caller's output. Exceptions from workers are rethrown on the caller thread
// (first one wins). workers == 0 means hardware_concurrency.

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn,
                  unsigned workers = 0);

}  // namespace remem
