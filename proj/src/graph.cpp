#include "remem/graph.hpp"

#include <algorithm>

#include "remem/errors.hpp"
#include "remem/util.hpp"

namespace remem {

namespace {

std::uint64_t pack_pair(std::uint32_t a, std::uint32_t b) {
  return (static_cast<std::uint64_t>(a) << 32) | b;
}

}  // namespace

MemoryGraph::MemoryGraph(BuildConfig config) : config_(std::move(config)) {
  if (config_.synonymy_threshold <= 0.0 || config_.synonymy_threshold > 1.0) {
    raise(ErrorCode::InvalidArgument, "threshold must be in (0,1]");
  }
}

void MemoryGraph::require_unfrozen() const {
  if (frozen_) raise(ErrorCode::BadState, "graph is frozen");
}

void MemoryGraph::require_gist(GistId id) const {
  if (id >= gists_.size()) {
    raise(ErrorCode::UnknownNode, "unknown gist id " + std::to_string(id));
  }
}

void MemoryGraph::require_phrase(PhraseId id) const {
  if (id >= phrases_.size()) {
    raise(ErrorCode::UnknownNode, "unknown phrase id " + std::to_string(id));
  }
}

GistId MemoryGraph::add_gist(const std::string& text,
                             std::optional<TimeScope> scope,
                             const std::string& source_chunk) {
  require_unfrozen();
  if (trim(text).empty()) {
    raise(ErrorCode::InvalidArgument, "gist text must be non-empty");
  }
  if (scope) validate_scope(*scope);
  GistId id = static_cast<GistId>(gists_.size());
  gists_.push_back({id, text, std::move(scope), source_chunk});
  gist_phrases_.emplace_back();
  gist_synonyms_.emplace_back();
  return id;
}

PhraseId MemoryGraph::upsert_phrase(const std::string& name) {
  require_unfrozen();
  std::string surface = collapse_whitespace(name);
  if (surface.empty()) {
    raise(ErrorCode::EmptyPhrase, "phrase name is empty after normalization");
  }
  std::string key = dedup_key(surface);
  auto it = phrase_by_key_.find(key);
  if (it != phrase_by_key_.end()) return it->second;
  PhraseId id = static_cast<PhraseId>(phrases_.size());
  phrases_.push_back({id, surface});
  phrase_by_key_.emplace(std::move(key), id);
  phrase_gists_.emplace_back();
  return id;
}

EdgeId MemoryGraph::add_fact(const std::string& subject,
                             const std::string& predicate,
                             const std::string& object,
                             std::optional<TimeScope> scope,
                             const std::string& source_chunk) {
  require_unfrozen();
  std::string pred = collapse_whitespace(predicate);
  if (pred.empty()) {
    raise(ErrorCode::EmptyPhrase, "fact predicate is empty");
  }
  if (scope) validate_scope(*scope);
  PhraseId subj_id = upsert_phrase(subject);
  PhraseId obj_id = upsert_phrase(object);
  EdgeId id = static_cast<EdgeId>(relations_.size());
  relations_.push_back(
      {id, subj_id, std::move(pred), obj_id, std::move(scope), source_chunk});
  relations_by_chunk_[source_chunk].push_back(id);
  return id;
}

std::size_t MemoryGraph::bind_context(const std::vector<GistId>& gist_ids,
                                      const std::vector<PhraseId>& phrase_ids) {
  require_unfrozen();
  for (GistId g : gist_ids) require_gist(g);
  for (PhraseId p : phrase_ids) require_phrase(p);
  std::size_t added = 0;
  for (GistId g : gist_ids) {
    for (PhraseId p : phrase_ids) {
      if (!context_pairs_.insert(pack_pair(g, p)).second) continue;
      contexts_.push_back({g, p});
      gist_phrases_[g].push_back(p);
      phrase_gists_[p].push_back(g);
      ++added;
    }
  }
  return added;
}

bool MemoryGraph::add_synonymy(GistId a, GistId b, float similarity) {
  require_unfrozen();
  require_gist(a);
  require_gist(b);
  if (a == b) {
    raise(ErrorCode::InvalidArgument, "synonymy edge endpoints must differ");
  }
  if (similarity < -1.0f || similarity > 1.0f) {
    raise(ErrorCode::InvalidArgument, "similarity out of [-1,1]");
  }
  if (a > b) std::swap(a, b);
  if (!synonym_pairs_.insert(pack_pair(a, b)).second) return false;
  synonyms_.push_back({a, b, similarity});
  gist_synonyms_[a].emplace_back(b, similarity);
  gist_synonyms_[b].emplace_back(a, similarity);
  return true;
}

void MemoryGraph::set_embeddings(std::size_t dimension,
                                 std::vector<float> gist_rows,
                                 std::vector<float> fact_rows) {
  require_unfrozen();
  if (dimension == 0) {
    raise(ErrorCode::InvalidArgument, "embedding dimension must be positive");
  }
  if (gist_rows.size() != gists_.size() * dimension ||
      fact_rows.size() != relations_.size() * dimension) {
    raise(ErrorCode::DimensionMismatch,
          "embedding row counts do not match graph contents");
  }
  embedding_dim_ = dimension;
  gist_emb_ = std::move(gist_rows);
  fact_emb_ = std::move(fact_rows);
}

void MemoryGraph::freeze() {
  if (frozen_) return;
  frozen_ = true;
  // Deterministic neighbor order: similarity descending, id ascending.
  for (auto& neighbors : gist_synonyms_) {
    std::sort(neighbors.begin(), neighbors.end(),
              [](const auto& x, const auto& y) {
                if (x.second != y.second) return x.second > y.second;
                return x.first < y.first;
              });
  }
}

const GistNode& MemoryGraph::gist(GistId id) const {
  require_gist(id);
  return gists_[id];
}

const PhraseNode& MemoryGraph::phrase(PhraseId id) const {
  require_phrase(id);
  return phrases_[id];
}

const RelationEdge& MemoryGraph::relation(EdgeId id) const {
  if (id >= relations_.size()) {
    raise(ErrorCode::UnknownNode, "unknown relation id " + std::to_string(id));
  }
  return relations_[id];
}

std::optional<PhraseId> MemoryGraph::find_phrase(const std::string& name) const {
  auto it = phrase_by_key_.find(dedup_key(name));
  if (it == phrase_by_key_.end()) return std::nullopt;
  return it->second;
}

const std::vector<PhraseId>& MemoryGraph::phrases_of_gist(GistId id) const {
  require_gist(id);
  return gist_phrases_[id];
}

const std::vector<GistId>& MemoryGraph::gists_of_phrase(PhraseId id) const {
  require_phrase(id);
  return phrase_gists_[id];
}

MemoryGraph::GistNeighborhood MemoryGraph::neighbors_of_gist(GistId id) const {
  require_gist(id);
  GistNeighborhood out;
  out.phrases = gist_phrases_[id];
  out.synonym_gists = gist_synonyms_[id];

  const std::string& chunk = gists_[id].source_chunk;
  auto it = relations_by_chunk_.find(chunk);
  if (it != relations_by_chunk_.end()) {
    std::unordered_set<PhraseId> adjacent(out.phrases.begin(),
                                          out.phrases.end());
    for (EdgeId e : it->second) {
      const RelationEdge& edge = relations_[e];
      if (adjacent.count(edge.subject) || adjacent.count(edge.object)) {
        out.facts.push_back(e);
      }
    }
  }
  return out;
}

GraphStats MemoryGraph::stats() const {
  GraphStats s;
  s.gist_nodes = gists_.size();
  s.phrase_nodes = phrases_.size();
  s.relation_edges = relations_.size();
  s.context_edges = contexts_.size();
  s.synonymy_edges = synonyms_.size();
  s.triples = relations_.size();

  if (!gists_.empty()) {
    std::uint64_t total = 0;
    for (GistId g = 0; g < gists_.size(); ++g) {
      total += gist_phrases_[g].size() + gist_synonyms_[g].size();
    }
    s.mean_gist_degree = static_cast<double>(total) / gists_.size();
  }
  if (!phrases_.empty()) {
    // Relation endpoints count individually, so a self-relation adds 2.
    std::uint64_t total = contexts_.size() + 2 * relations_.size();
    s.mean_phrase_degree = static_cast<double>(total) / phrases_.size();
  }
  return s;
}

const float* MemoryGraph::gist_embedding(GistId id) const {
  require_gist(id);
  if (embedding_dim_ == 0) {
    raise(ErrorCode::BadState, "graph has no embeddings");
  }
  return gist_emb_.data() + static_cast<std::size_t>(id) * embedding_dim_;
}

const float* MemoryGraph::fact_embedding(EdgeId id) const {
  if (id >= relations_.size()) {
    raise(ErrorCode::UnknownNode, "unknown relation id " + std::to_string(id));
  }
  if (embedding_dim_ == 0) {
    raise(ErrorCode::BadState, "graph has no embeddings");
  }
  return fact_emb_.data() + static_cast<std::size_t>(id) * embedding_dim_;
}

std::string render_scope_suffix(const std::optional<TimeScope>& scope) {
  if (!scope) return "";
  if (scope->kind == ScopeKind::Point) {
    return " [point in time: " + render_instant(scope->point) + "]";
  }
  if (scope->start && scope->end) {
    return " [start: " + render_instant(*scope->start) +
           ", end: " + render_instant(*scope->end) + "]";
  }
  if (scope->start) return " [start: " + render_instant(*scope->start) + "]";
  if (scope->end) return " [end: " + render_instant(*scope->end) + "]";
  return "";
}

std::string render_fact(const MemoryGraph& graph, const RelationEdge& edge) {
  return "(" + graph.phrase(edge.subject).name + ", " + edge.predicate + ", " +
         graph.phrase(edge.object).name + ")" + render_scope_suffix(edge.scope);
}

}  // namespace remem
