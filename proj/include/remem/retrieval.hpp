#pragma once

#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "remem/clients.hpp"
#include "remem/graph.hpp"

namespace remem {

// Case-fold, split on non-alphanumeric, drop empties. No stemming, no
// stopword removal.
std::vector<std::string> tokenize(const std::string& text);

// Classic BM25 with the non-negative IDF variant
// IDF(t) = ln(1 + (N - n + 0.5)/(n + 0.5)). The query is treated as a token
// list, so a repeated query token contributes once per occurrence.
class Bm25Index {
 public:
  Bm25Index(double k1 = 1.2, double b = 0.75);

  void add_document(std::uint32_t doc_id, const std::vector<std::string>& tokens);
  void finalize();

  // Documents sharing at least one token with the query, scored and sorted
  // descending, ties by ascending id. Zero-score hits are dropped.
  std::vector<std::pair<std::uint32_t, double>> query(
      const std::vector<std::string>& query_tokens) const;

  // Formula evaluated for one document; 0 for ids not in the index.
  double score_of(std::uint32_t doc_id,
                  const std::vector<std::string>& query_tokens) const;

  std::size_t size() const { return doc_lengths_.size(); }
  double avgdl() const { return avgdl_; }

 private:
  double k1_;
  double b_;
  bool finalized_ = false;
  double avgdl_ = 0.0;
  std::unordered_map<std::uint32_t, std::size_t> doc_lengths_;
  // term -> (doc_id -> tf)
  std::unordered_map<std::string, std::unordered_map<std::uint32_t, std::uint32_t>>
      postings_;
};

// Exact top-k cosine over a row-major matrix of unit vectors.
class VectorIndex {
 public:
  VectorIndex(const float* rows, std::size_t count, std::size_t dim);

  // All rows scored, sorted descending, ties by ascending id; trimmed to k.
  std::vector<std::pair<std::uint32_t, double>> query(const float* query_vec,
                                                      std::size_t k) const;

  std::size_t size() const { return count_; }

 private:
  const float* rows_;
  std::size_t count_;
  std::size_t dim_;
};

struct RetrievalHit {
  std::uint32_t id = 0;  // gist id or relation edge id
  double score = 0.0;
  std::string rendered;
  std::optional<TimeScope> scope;
};

struct RetrievalResult {
  std::vector<RetrievalHit> gists;
  std::vector<RetrievalHit> facts;
};

inline constexpr std::size_t kDefaultTopK = 10;

// Stage-1 tools over a frozen graph: vector cosine and BM25, each returning
// a gist list and a fact list, both restricted by the temporal constraint
// (untimed items match only an unconstrained filter).
class Retriever {
 public:
  Retriever(const MemoryGraph& graph,
            std::shared_ptr<EmbeddingClient> embedder);

  RetrievalResult semantic_retrieve(const std::string& query,
                                    const TemporalConstraint& constraint,
                                    std::size_t k = kDefaultTopK) const;

  RetrievalResult lexical_retrieve(const std::string& query,
                                   const TemporalConstraint& constraint,
                                   std::size_t k = kDefaultTopK) const;

  const std::string& rendered_fact(EdgeId id) const {
    return fact_rendered_.at(id);
  }

 private:
  const MemoryGraph& graph_;
  std::shared_ptr<EmbeddingClient> embedder_;
  std::vector<std::string> fact_rendered_;
  Bm25Index gist_bm25_;
  Bm25Index fact_bm25_;
};

}  // namespace remem
