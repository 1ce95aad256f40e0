#pragma once

#include <optional>
#include <string>
#include <vector>

#include "remem/graph.hpp"

namespace remem {

enum class Ordering { None, ChronoAsc, ChronoDesc };
enum class Aggregation { None, Count };

// Filtered fact query. At least one of subject/object/predicate must be set;
// offset may only be combined with an ordering.
struct EntityQuery {
  std::optional<std::string> subject;
  std::optional<std::string> object;
  std::optional<std::string> predicate;
  TemporalConstraint constraint;
  std::optional<std::size_t> limit;
  Ordering ordering = Ordering::None;
  std::size_t offset = 0;
  Aggregation aggregation = Aggregation::None;
};

struct GistContexts {
  std::vector<GistId> gists;  // anchor first, then synonymy neighbors
  std::vector<EdgeId> facts;
};

struct EntityQueryResult {
  std::vector<GistId> gists;
  std::vector<EdgeId> facts;
  std::optional<std::uint64_t> count;  // set iff aggregation == Count
};

// Anchor gist plus temporally matching synonymy neighbors; facts from the
// anchor's chunk neighborhood, temporally filtered.
GistContexts find_gist_contexts(const MemoryGraph& graph, GistId anchor,
                                const TemporalConstraint& constraint);

// Slot-matched, temporally filtered, ordered, windowed fact query. Phrase
// slots match by dedup-key equality first, falling back to a case-folded
// substring test when no exact node exists; the predicate slot always
// matches by case-folded substring. Ordering sorts by the scope's earliest
// instant (untimed last, ties by edge id). Count aggregation reports the
// post-filter, pre-window size.
EntityQueryResult find_entity_contexts(const MemoryGraph& graph,
                                       const EntityQuery& query);

}  // namespace remem
