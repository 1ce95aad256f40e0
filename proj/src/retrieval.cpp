#include "remem/retrieval.hpp"

#include <algorithm>
#include <cmath>

#include "remem/errors.hpp"
#include "remem/indexing.hpp"
#include "remem/util.hpp"

namespace remem {

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string current;
  for (char c : text) {
    bool alnum = (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') ||
                 (c >= 'A' && c <= 'Z');
    if (alnum) {
      if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
      current.push_back(c);
    } else if (!current.empty()) {
      out.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

// ---- BM25 -------------------------------------------------------------------

Bm25Index::Bm25Index(double k1, double b) : k1_(k1), b_(b) {}

void Bm25Index::add_document(std::uint32_t doc_id,
                             const std::vector<std::string>& tokens) {
  if (finalized_) raise(ErrorCode::BadState, "index is finalized");
  if (doc_lengths_.count(doc_id)) {
    raise(ErrorCode::InvalidArgument,
          "document id added twice: " + std::to_string(doc_id));
  }
  doc_lengths_[doc_id] = tokens.size();
  for (const std::string& t : tokens) postings_[t][doc_id] += 1;
}

void Bm25Index::finalize() {
  finalized_ = true;
  if (doc_lengths_.empty()) {
    avgdl_ = 0.0;
    return;
  }
  std::uint64_t total = 0;
  for (const auto& [id, len] : doc_lengths_) total += len;
  avgdl_ = static_cast<double>(total) / static_cast<double>(doc_lengths_.size());
}

double Bm25Index::score_of(std::uint32_t doc_id,
                           const std::vector<std::string>& query_tokens) const {
  auto len_it = doc_lengths_.find(doc_id);
  if (len_it == doc_lengths_.end()) return 0.0;
  double dl = static_cast<double>(len_it->second);
  double n_docs = static_cast<double>(doc_lengths_.size());
  double score = 0.0;
  for (const std::string& t : query_tokens) {
    auto post_it = postings_.find(t);
    if (post_it == postings_.end()) continue;
    auto tf_it = post_it->second.find(doc_id);
    if (tf_it == post_it->second.end()) continue;
    double n = static_cast<double>(post_it->second.size());
    double idf = std::log(1.0 + (n_docs - n + 0.5) / (n + 0.5));
    double tf = static_cast<double>(tf_it->second);
    double denom = tf + k1_ * (1.0 - b_ + b_ * dl / (avgdl_ > 0.0 ? avgdl_ : 1.0));
    score += idf * tf * (k1_ + 1.0) / denom;
  }
  return score;
}

std::vector<std::pair<std::uint32_t, double>> Bm25Index::query(
    const std::vector<std::string>& query_tokens) const {
  if (!finalized_) raise(ErrorCode::BadState, "index is not finalized");
  std::unordered_map<std::uint32_t, double> scores;
  double n_docs = static_cast<double>(doc_lengths_.size());
  for (const std::string& t : query_tokens) {
    auto post_it = postings_.find(t);
    if (post_it == postings_.end()) continue;
    double n = static_cast<double>(post_it->second.size());
    double idf = std::log(1.0 + (n_docs - n + 0.5) / (n + 0.5));
    for (const auto& [doc_id, tf_raw] : post_it->second) {
      double dl = static_cast<double>(doc_lengths_.at(doc_id));
      double tf = static_cast<double>(tf_raw);
      double denom =
          tf + k1_ * (1.0 - b_ + b_ * dl / (avgdl_ > 0.0 ? avgdl_ : 1.0));
      scores[doc_id] += idf * tf * (k1_ + 1.0) / denom;
    }
  }
  std::vector<std::pair<std::uint32_t, double>> out;
  out.reserve(scores.size());
  for (const auto& [id, score] : scores) {
    if (score > 0.0) out.emplace_back(id, score);
  }
  std::sort(out.begin(), out.end(), [](const auto& x, const auto& y) {
    if (x.second != y.second) return x.second > y.second;
    return x.first < y.first;
  });
  return out;
}

// ---- vector index --------------------------------------------------------------

VectorIndex::VectorIndex(const float* rows, std::size_t count, std::size_t dim)
    : rows_(rows), count_(count), dim_(dim) {}

std::vector<std::pair<std::uint32_t, double>> VectorIndex::query(
    const float* query_vec, std::size_t k) const {
  std::vector<std::pair<std::uint32_t, double>> scored;
  scored.reserve(count_);
  for (std::size_t i = 0; i < count_; ++i) {
    double sim = cosine_similarity(rows_ + i * dim_, query_vec, dim_);
    scored.emplace_back(static_cast<std::uint32_t>(i), sim);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& x, const auto& y) {
    if (x.second != y.second) return x.second > y.second;
    return x.first < y.first;
  });
  if (scored.size() > k) scored.resize(k);
  return scored;
}

// ---- retriever -------------------------------------------------------------------

Retriever::Retriever(const MemoryGraph& graph,
                     std::shared_ptr<EmbeddingClient> embedder)
    : graph_(graph),
      embedder_(std::move(embedder)),
      gist_bm25_(graph.config().bm25_k1, graph.config().bm25_b),
      fact_bm25_(graph.config().bm25_k1, graph.config().bm25_b) {
  if (!graph_.frozen()) {
    raise(ErrorCode::BadState, "retrieval requires a frozen graph");
  }
  for (const GistNode& g : graph_.gists()) {
    gist_bm25_.add_document(g.id, tokenize(g.text));
  }
  fact_rendered_.reserve(graph_.relations().size());
  for (const RelationEdge& r : graph_.relations()) {
    fact_rendered_.push_back(render_fact(graph_, r));
    fact_bm25_.add_document(r.id, tokenize(fact_rendered_.back()));
  }
  gist_bm25_.finalize();
  fact_bm25_.finalize();
}

namespace {

// Score, filter, sort desc (ties ascending id), trim to k.
template <typename ScopeOf, typename Render>
std::vector<RetrievalHit> assemble_hits(
    const std::vector<std::pair<std::uint32_t, double>>& scored,
    const TemporalConstraint& constraint, std::size_t k, ScopeOf scope_of,
    Render render) {
  std::vector<RetrievalHit> hits;
  for (const auto& [id, score] : scored) {
    const std::optional<TimeScope>& scope = scope_of(id);
    if (!scope_matches(scope, constraint)) continue;
    RetrievalHit hit;
    hit.id = id;
    hit.score = score;
    hit.rendered = render(id);
    hit.scope = scope;
    hits.push_back(std::move(hit));
    if (hits.size() == k) break;
  }
  return hits;
}

}  // namespace

RetrievalResult Retriever::semantic_retrieve(const std::string& query,
                                             const TemporalConstraint& constraint,
                                             std::size_t k) const {
  RetrievalResult result;
  if (k == 0) return result;
  std::size_t n_gists = graph_.gists().size();
  std::size_t n_facts = graph_.relations().size();
  if (n_gists == 0 && n_facts == 0) return result;
  if (!graph_.has_embeddings()) {
    raise(ErrorCode::EmbeddingUnavailable, "graph has no embeddings");
  }

  std::vector<std::vector<float>> q = embedder_->embed({query});
  if (q.size() != 1 || q[0].size() != graph_.embedding_dimension()) {
    raise(ErrorCode::DimensionMismatch,
          "query embedding dimension does not match the graph");
  }
  const float* qv = q[0].data();
  std::size_t dim = graph_.embedding_dimension();

  VectorIndex gist_index(graph_.gist_embedding_rows().data(), n_gists, dim);
  // Full ordering, filtered afterwards; k of the filtered list.
  auto gist_scored = gist_index.query(qv, n_gists);
  result.gists = assemble_hits(
      gist_scored, constraint, k,
      [&](std::uint32_t id) -> const std::optional<TimeScope>& {
        return graph_.gist(id).scope;
      },
      [&](std::uint32_t id) { return graph_.gist(id).text; });

  VectorIndex fact_index(graph_.fact_embedding_rows().data(), n_facts, dim);
  auto fact_scored = fact_index.query(qv, n_facts);
  result.facts = assemble_hits(
      fact_scored, constraint, k,
      [&](std::uint32_t id) -> const std::optional<TimeScope>& {
        return graph_.relation(id).scope;
      },
      [&](std::uint32_t id) { return fact_rendered_[id]; });
  return result;
}

RetrievalResult Retriever::lexical_retrieve(const std::string& query,
                                            const TemporalConstraint& constraint,
                                            std::size_t k) const {
  RetrievalResult result;
  if (k == 0) return result;
  std::vector<std::string> tokens = tokenize(query);
  if (tokens.empty()) return result;

  result.gists = assemble_hits(
      gist_bm25_.query(tokens), constraint, k,
      [&](std::uint32_t id) -> const std::optional<TimeScope>& {
        return graph_.gist(id).scope;
      },
      [&](std::uint32_t id) { return graph_.gist(id).text; });
  result.facts = assemble_hits(
      fact_bm25_.query(tokens), constraint, k,
      [&](std::uint32_t id) -> const std::optional<TimeScope>& {
        return graph_.relation(id).scope;
      },
      [&](std::uint32_t id) { return fact_rendered_[id]; });
  return result;
}

}  // namespace remem
