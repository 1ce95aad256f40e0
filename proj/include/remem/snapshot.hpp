#pragma once

#include <filesystem>
#include <optional>

#include "json.hpp"

#include "remem/graph.hpp"

namespace remem {

inline constexpr int kSnapshotFormatVersion = 1;

// Scope codec shared by snapshots and tool-result payloads.
// Point  -> {"point": "2002-02"}
// Interval -> {"interval": {"start": "2001"|null, "end": "2003"|null}}
nlohmann::json scope_to_json(const TimeScope& scope);
TimeScope scope_from_json(const nlohmann::json& j);

nlohmann::json optional_scope_to_json(const std::optional<TimeScope>& scope);
std::optional<TimeScope> optional_scope_from_json(const nlohmann::json& j);

// Writes meta.json, gists.jsonl, phrases.jsonl, relations.jsonl,
// contexts.jsonl, synonyms.jsonl, and embeddings.bin into dir. Output is
// byte-deterministic for a given graph.
void save_snapshot(const MemoryGraph& graph, const std::filesystem::path& dir);

// Loads and freezes a graph; verifies format version, referential integrity,
// and count reconciliation. Throws SnapshotFormat / Io.
MemoryGraph load_snapshot(const std::filesystem::path& dir);

}  // namespace remem
