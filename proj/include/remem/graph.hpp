#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "remem/temporal.hpp"

namespace remem {

using GistId = std::uint32_t;
using PhraseId = std::uint32_t;
using EdgeId = std::uint32_t;

struct GistNode {
  GistId id = 0;
  std::string text;
  std::optional<TimeScope> scope;
  std::string source_chunk;
};

struct PhraseNode {
  PhraseId id = 0;
  std::string name;  // first-seen surface form, whitespace-collapsed
};

struct RelationEdge {
  EdgeId id = 0;
  PhraseId subject = 0;
  std::string predicate;
  PhraseId object = 0;
  std::optional<TimeScope> scope;
  std::string source_chunk;
};

struct ContextEdge {
  GistId gist = 0;
  PhraseId phrase = 0;
};

struct SynonymyEdge {
  GistId a = 0;  // a < b always
  GistId b = 0;
  float similarity = 0.0f;
};

struct BuildConfig {
  double synonymy_threshold = 0.8;
  std::string extractor_tag = "rule";
  std::string embedding_tag = "mock-embed-32";
  double bm25_k1 = 1.2;
  double bm25_b = 0.75;
};

struct GraphStats {
  std::uint64_t gist_nodes = 0;
  std::uint64_t phrase_nodes = 0;
  std::uint64_t relation_edges = 0;
  std::uint64_t context_edges = 0;
  std::uint64_t synonymy_edges = 0;
  std::uint64_t triples = 0;  // == relation_edges
  double mean_gist_degree = 0.0;
  double mean_phrase_degree = 0.0;
};

// Append-only hybrid memory graph. Writers run single-threaded during
// indexing; freeze() flips it immutable, after which reads are safe from any
// number of threads. Ids are dense and assigned in insertion order, which is
// what makes snapshots and orderings reproducible.
class MemoryGraph {
 public:
  explicit MemoryGraph(BuildConfig config = {});

  // ---- writes (throw BadState once frozen) ----

  GistId add_gist(const std::string& text, std::optional<TimeScope> scope,
                  const std::string& source_chunk);
  PhraseId upsert_phrase(const std::string& name);
  EdgeId add_fact(const std::string& subject, const std::string& predicate,
                  const std::string& object, std::optional<TimeScope> scope,
                  const std::string& source_chunk);
  // Adds the bipartite product minus existing pairs; returns count added.
  std::size_t bind_context(const std::vector<GistId>& gist_ids,
                           const std::vector<PhraseId>& phrase_ids);
  // Stores the pair once with a < b; returns false when already present.
  bool add_synonymy(GistId a, GistId b, float similarity);

  // Embedding rows for gists (by gist id) and facts (by edge id); row count
  // must match the node/edge count at freeze time.
  void set_embeddings(std::size_t dimension, std::vector<float> gist_rows,
                      std::vector<float> fact_rows);

  void freeze();
  bool frozen() const { return frozen_; }

  // ---- reads ----

  const GistNode& gist(GistId id) const;
  const PhraseNode& phrase(PhraseId id) const;
  const RelationEdge& relation(EdgeId id) const;

  const std::vector<GistNode>& gists() const { return gists_; }
  const std::vector<PhraseNode>& phrases() const { return phrases_; }
  const std::vector<RelationEdge>& relations() const { return relations_; }
  const std::vector<ContextEdge>& contexts() const { return contexts_; }
  const std::vector<SynonymyEdge>& synonyms() const { return synonyms_; }

  std::optional<PhraseId> find_phrase(const std::string& name) const;

  const std::vector<PhraseId>& phrases_of_gist(GistId id) const;
  const std::vector<GistId>& gists_of_phrase(PhraseId id) const;

  struct GistNeighborhood {
    std::vector<PhraseId> phrases;
    // Relation edges from the gist's own source chunk whose subject or
    // object is context-adjacent to the gist.
    std::vector<EdgeId> facts;
    // Sorted by similarity descending, ties by id ascending.
    std::vector<std::pair<GistId, float>> synonym_gists;
  };
  GistNeighborhood neighbors_of_gist(GistId id) const;

  GraphStats stats() const;

  const BuildConfig& config() const { return config_; }

  std::size_t embedding_dimension() const { return embedding_dim_; }
  bool has_embeddings() const { return embedding_dim_ != 0; }
  // Row views into the stored matrices; valid while the graph lives.
  const float* gist_embedding(GistId id) const;
  const float* fact_embedding(EdgeId id) const;
  const std::vector<float>& gist_embedding_rows() const { return gist_emb_; }
  const std::vector<float>& fact_embedding_rows() const { return fact_emb_; }

 private:
  void require_unfrozen() const;
  void require_gist(GistId id) const;
  void require_phrase(PhraseId id) const;

  BuildConfig config_;
  bool frozen_ = false;

  std::vector<GistNode> gists_;
  std::vector<PhraseNode> phrases_;
  std::vector<RelationEdge> relations_;
  std::vector<ContextEdge> contexts_;
  std::vector<SynonymyEdge> synonyms_;

  std::unordered_map<std::string, PhraseId> phrase_by_key_;
  std::unordered_set<std::uint64_t> context_pairs_;
  std::unordered_set<std::uint64_t> synonym_pairs_;

  std::vector<std::vector<PhraseId>> gist_phrases_;
  std::vector<std::vector<GistId>> phrase_gists_;
  std::vector<std::vector<std::pair<GistId, float>>> gist_synonyms_;
  // Relation edge ids per chunk, for the neighborhood fact view.
  std::unordered_map<std::string, std::vector<EdgeId>> relations_by_chunk_;

  std::size_t embedding_dim_ = 0;
  std::vector<float> gist_emb_;
  std::vector<float> fact_emb_;
};

// "(subject, predicate, object)" plus the scope suffix when present; the
// exact string shown to planners and fed to fact embedding and BM25.
std::string render_fact(const MemoryGraph& graph, const RelationEdge& edge);

// " [point in time: X]" / " [start: X, end: Y]" / "" for no scope.
std::string render_scope_suffix(const std::optional<TimeScope>& scope);

}  // namespace remem
