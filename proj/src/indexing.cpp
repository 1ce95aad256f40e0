#include "remem/indexing.hpp"

#include <algorithm>
#include <fstream>
#include <unordered_set>

#include "json.hpp"

#include "remem/errors.hpp"
#include "remem/util.hpp"

namespace remem {

std::vector<Episode> load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorCode::Io, "cannot read corpus file " + path.string());

  std::vector<Episode> corpus;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      raise(ErrorCode::ParseError, "line " + std::to_string(lineno) +
                                       ": invalid JSON: " + e.what());
    }
    try {
      Episode ep;
      ep.chunk_id = j.at("chunk_id").get<std::string>();
      if (ep.chunk_id.empty()) {
        raise(ErrorCode::ParseError,
              "line " + std::to_string(lineno) + ": empty chunk_id");
      }
      if (j.contains("timestamp") && !j["timestamp"].is_null()) {
        ep.timestamp = parse_instant(j["timestamp"].get<std::string>());
      }
      if (j.contains("text") && !j["text"].is_null()) {
        ep.text = j["text"].get<std::string>();
      }
      if (j.contains("turns") && !j["turns"].is_null()) {
        for (const auto& t : j["turns"]) {
          ep.turns.push_back({t.at("speaker").get<std::string>(),
                              t.at("text").get<std::string>()});
        }
      }
      if (ep.text.empty() && ep.turns.empty()) {
        raise(ErrorCode::ParseError,
              "line " + std::to_string(lineno) + ": episode has no content");
      }
      corpus.push_back(std::move(ep));
    } catch (const nlohmann::json::exception& e) {
      raise(ErrorCode::ParseError,
            "line " + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      if (e.code() == ErrorCode::ParseError) throw;
      raise(ErrorCode::ParseError,
            "line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return corpus;
}

double cosine_similarity(const float* a, const float* b, std::size_t dim) {
  double dot = 0.0;
  for (std::size_t i = 0; i < dim; ++i) {
    dot += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  }
  return dot;
}

std::pair<std::vector<float>, std::size_t> embed_all(
    const std::vector<std::string>& texts, EmbeddingClient& client) {
  if (texts.empty()) return {std::vector<float>{}, client.dimension()};
  std::vector<std::vector<float>> rows = client.embed(texts);
  if (rows.size() != texts.size()) {
    raise(ErrorCode::EmbeddingUnavailable,
          "embedding client returned wrong row count");
  }
  std::size_t dim = rows.empty() ? client.dimension() : rows.front().size();
  std::vector<float> flat;
  flat.reserve(rows.size() * dim);
  for (const auto& row : rows) {
    if (row.size() != dim) {
      raise(ErrorCode::DimensionMismatch,
            "embedding rows have inconsistent dimensions");
    }
    flat.insert(flat.end(), row.begin(), row.end());
  }
  return {std::move(flat), dim};
}

std::size_t synonymy_pass(MemoryGraph& graph, double threshold,
                          std::size_t block_size) {
  if (threshold <= 0.0 || threshold > 1.0) {
    raise(ErrorCode::InvalidArgument, "threshold must be in (0,1]");
  }
  if (block_size == 0) block_size = 1;
  std::size_t n = graph.gists().size();
  if (n < 2) return 0;
  if (!graph.has_embeddings()) {
    raise(ErrorCode::EmbeddingUnavailable,
          "synonymy pass requires gist embeddings");
  }
  std::size_t dim = graph.embedding_dimension();
  const std::vector<float>& rows = graph.gist_embedding_rows();

  struct Hit {
    GistId a;
    GistId b;
    float sim;
  };
  std::vector<Hit> hits;
  for (std::size_t bi = 0; bi < n; bi += block_size) {
    std::size_t bi_end = std::min(bi + block_size, n);
    for (std::size_t bj = bi; bj < n; bj += block_size) {
      std::size_t bj_end = std::min(bj + block_size, n);
      for (std::size_t i = bi; i < bi_end; ++i) {
        std::size_t j_begin = std::max(bj, i + 1);
        for (std::size_t j = j_begin; j < bj_end; ++j) {
          double sim =
              cosine_similarity(rows.data() + i * dim, rows.data() + j * dim, dim);
          if (sim >= threshold) {
            double clamped = std::min(1.0, std::max(-1.0, sim));
            hits.push_back({static_cast<GistId>(i), static_cast<GistId>(j),
                            static_cast<float>(clamped)});
          }
        }
      }
    }
  }
  std::sort(hits.begin(), hits.end(), [](const Hit& x, const Hit& y) {
    if (x.a != y.a) return x.a < y.a;
    return x.b < y.b;
  });
  std::size_t added = 0;
  for (const Hit& h : hits) {
    if (graph.add_synonymy(h.a, h.b, h.sim)) ++added;
  }
  return added;
}

MemoryGraph build_graph(const std::vector<Episode>& corpus,
                        Extractor& extractor, EmbeddingClient& embeddings,
                        const IndexConfig& config) {
  if (corpus.empty()) {
    raise(ErrorCode::InvalidArgument, "corpus is empty");
  }
  {
    std::unordered_set<std::string> seen;
    for (const Episode& e : corpus) {
      if (!seen.insert(e.chunk_id).second) {
        raise(ErrorCode::InvalidArgument,
              "duplicate chunk_id in corpus: " + e.chunk_id);
      }
    }
  }

  // Insertion order is sorted chunk_id, independent of input order and of
  // extraction parallelism.
  std::vector<const Episode*> ordered;
  ordered.reserve(corpus.size());
  for (const Episode& e : corpus) ordered.push_back(&e);
  std::sort(ordered.begin(), ordered.end(),
            [](const Episode* a, const Episode* b) {
              return a->chunk_id < b->chunk_id;
            });

  struct Extracted {
    std::vector<GistRecord> gists;
    std::vector<FactRecord> facts;
    bool skipped = false;
  };
  std::vector<Extracted> results(ordered.size());
  parallel_for(
      ordered.size(),
      [&](std::size_t i) {
        const Episode& episode = *ordered[i];
        try {
          results[i].gists = extractor.extract_gists(episode);
          results[i].facts = extractor.extract_facts(episode, results[i].gists);
        } catch (const Error& e) {
          if (e.code() == ErrorCode::MalformedExtraction) {
            results[i].skipped = true;
            log_warn("skipping episode " + episode.chunk_id + ": " + e.what());
          } else {
            throw;
          }
        }
      },
      config.extraction_workers);

  BuildConfig build_config;
  build_config.synonymy_threshold = config.synonymy_threshold;
  build_config.extractor_tag = extractor.tag();
  build_config.embedding_tag = embeddings.provider_tag();
  build_config.bm25_k1 = config.bm25_k1;
  build_config.bm25_b = config.bm25_b;
  MemoryGraph graph(build_config);

  for (std::size_t i = 0; i < ordered.size(); ++i) {
    if (results[i].skipped) continue;
    const Episode& episode = *ordered[i];
    std::vector<GistId> gist_ids;
    gist_ids.reserve(results[i].gists.size());
    for (const GistRecord& record : results[i].gists) {
      validate_gist_record(record);
      gist_ids.push_back(
          graph.add_gist(record.text, record.scope, episode.chunk_id));
    }
    std::vector<PhraseId> phrase_ids;
    std::unordered_set<PhraseId> phrase_seen;
    for (const FactRecord& record : results[i].facts) {
      validate_fact_record(record);
      EdgeId edge = graph.add_fact(record.subject, record.predicate,
                                   record.object, fact_scope(record),
                                   episode.chunk_id);
      const RelationEdge& stored = graph.relation(edge);
      for (PhraseId p : {stored.subject, stored.object}) {
        if (phrase_seen.insert(p).second) phrase_ids.push_back(p);
      }
    }
    graph.bind_context(gist_ids, phrase_ids);
  }

  std::vector<std::string> gist_texts;
  gist_texts.reserve(graph.gists().size());
  for (const GistNode& g : graph.gists()) gist_texts.push_back(g.text);
  std::vector<std::string> fact_texts;
  fact_texts.reserve(graph.relations().size());
  for (const RelationEdge& r : graph.relations()) {
    fact_texts.push_back(render_fact(graph, r));
  }

  auto [gist_rows, gist_dim] = embed_all(gist_texts, embeddings);
  auto [fact_rows, fact_dim] = embed_all(fact_texts, embeddings);
  std::size_t dim = gist_texts.empty() ? fact_dim : gist_dim;
  if (!gist_texts.empty() && !fact_texts.empty() && gist_dim != fact_dim) {
    raise(ErrorCode::DimensionMismatch,
          "gist and fact embeddings have different dimensions");
  }
  if (dim != 0) {
    graph.set_embeddings(dim, std::move(gist_rows), std::move(fact_rows));
  }

  synonymy_pass(graph, config.synonymy_threshold, config.synonymy_block_size);
  graph.freeze();
  return graph;
}

}  // namespace remem
