#include "remem/exploration.hpp"

#include <algorithm>
#include <unordered_set>

#include "remem/errors.hpp"
#include "remem/util.hpp"

namespace remem {

namespace {

void require_frozen(const MemoryGraph& graph) {
  if (!graph.frozen()) {
    raise(ErrorCode::BadState, "exploration requires a frozen graph");
  }
}

// Matcher for one phrase slot: exact phrase-node hit when the graph has a
// node under the query's dedup key, substring fallback otherwise.
class SlotMatcher {
 public:
  SlotMatcher(const MemoryGraph& graph, const std::string& wanted)
      : graph_(graph), needle_(wanted) {
    exact_ = graph.find_phrase(wanted);
  }

  bool matches(PhraseId id) const {
    if (exact_) return *exact_ == id;
    return contains_fold(graph_.phrase(id).name, needle_);
  }

 private:
  const MemoryGraph& graph_;
  std::string needle_;
  std::optional<PhraseId> exact_;
};

bool has_value(const std::optional<std::string>& slot) {
  return slot && !trim(*slot).empty();
}

}  // namespace

GistContexts find_gist_contexts(const MemoryGraph& graph, GistId anchor,
                                const TemporalConstraint& constraint) {
  require_frozen(graph);
  MemoryGraph::GistNeighborhood hood = graph.neighbors_of_gist(anchor);

  GistContexts out;
  out.gists.push_back(anchor);
  for (const auto& [neighbor, sim] : hood.synonym_gists) {
    if (scope_matches(graph.gist(neighbor).scope, constraint)) {
      out.gists.push_back(neighbor);
    }
  }
  for (EdgeId e : hood.facts) {
    if (scope_matches(graph.relation(e).scope, constraint)) {
      out.facts.push_back(e);
    }
  }
  return out;
}

EntityQueryResult find_entity_contexts(const MemoryGraph& graph,
                                       const EntityQuery& query) {
  require_frozen(graph);
  bool has_subject = has_value(query.subject);
  bool has_object = has_value(query.object);
  bool has_predicate = has_value(query.predicate);
  if (!has_subject && !has_object && !has_predicate) {
    raise(ErrorCode::EmptyQuery,
          "entity query needs at least one of subject/object/predicate");
  }
  if (query.offset != 0 && query.ordering == Ordering::None) {
    raise(ErrorCode::BadWindow, "offset requires an ordering");
  }

  std::optional<SlotMatcher> subject_matcher, object_matcher;
  std::string predicate_needle;
  if (has_subject) subject_matcher.emplace(graph, trim(*query.subject));
  if (has_object) object_matcher.emplace(graph, trim(*query.object));
  if (has_predicate) predicate_needle = trim(*query.predicate);

  std::vector<EdgeId> survivors;
  for (const RelationEdge& edge : graph.relations()) {
    if (subject_matcher && !subject_matcher->matches(edge.subject)) continue;
    if (object_matcher && !object_matcher->matches(edge.object)) continue;
    if (has_predicate && !contains_fold(edge.predicate, predicate_needle)) {
      continue;
    }
    if (!scope_matches(edge.scope, query.constraint)) continue;
    survivors.push_back(edge.id);
  }

  EntityQueryResult result;
  if (query.aggregation == Aggregation::Count) {
    result.count = survivors.size();
    return result;
  }

  if (query.ordering != Ordering::None) {
    bool ascending = query.ordering == Ordering::ChronoAsc;
    std::stable_sort(
        survivors.begin(), survivors.end(), [&](EdgeId x, EdgeId y) {
          const auto& sx = graph.relation(x).scope;
          const auto& sy = graph.relation(y).scope;
          std::optional<AbsSeconds> kx =
              sx ? scope_earliest(*sx) : std::nullopt;
          std::optional<AbsSeconds> ky =
              sy ? scope_earliest(*sy) : std::nullopt;
          // Untimed (or unbounded-start) scopes sort last in either direction.
          if (kx.has_value() != ky.has_value()) return kx.has_value();
          if (kx && ky && *kx != *ky) {
            return ascending ? *kx < *ky : *kx > *ky;
          }
          return x < y;
        });
  }

  std::size_t begin = std::min(query.offset, survivors.size());
  std::size_t end = survivors.size();
  if (query.limit) end = std::min(end, begin + *query.limit);
  result.facts.assign(survivors.begin() + begin, survivors.begin() + end);

  // Provenance gists: context-bound to a surviving fact's phrases within the
  // fact's own source chunk, first-encounter order, deduped.
  std::unordered_set<GistId> seen;
  for (EdgeId e : result.facts) {
    const RelationEdge& edge = graph.relation(e);
    for (PhraseId p : {edge.subject, edge.object}) {
      for (GistId g : graph.gists_of_phrase(p)) {
        if (graph.gist(g).source_chunk != edge.source_chunk) continue;
        if (seen.insert(g).second) result.gists.push_back(g);
      }
    }
  }
  return result;
}

}  // namespace remem
