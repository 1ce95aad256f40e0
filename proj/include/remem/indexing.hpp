#pragma once

#include <filesystem>
#include <vector>

#include "remem/extraction.hpp"
#include "remem/graph.hpp"

namespace remem {

struct IndexConfig {
  double synonymy_threshold = 0.8;
  double bm25_k1 = 1.2;
  double bm25_b = 0.75;
  // Pair scan is blocked above this many gists; blocking never changes the
  // result, only memory locality.
  std::size_t synonymy_block_size = 512;
  unsigned extraction_workers = 0;  // 0 = hardware_concurrency
};

// Corpus JSONL: one episode per line,
// {"chunk_id": str, "timestamp": str|null, "text": str|null,
//  "turns": [{"speaker": str, "text": str}]|null}.
// Throws ParseError with a 1-based line number.
std::vector<Episode> load_corpus(const std::filesystem::path& path);

// Dot product accumulated in double, left to right; the shared definition
// for every cosine comparison in the engine.
double cosine_similarity(const float* a, const float* b, std::size_t dim);

// Embeds texts through the client; returns (flat row-major matrix, dim).
// Empty input gives a 0-row matrix with the client's dimension.
std::pair<std::vector<float>, std::size_t> embed_all(
    const std::vector<std::string>& texts, EmbeddingClient& client);

// Adds one synonymy edge per unordered gist pair with cosine >= threshold.
// Edges are inserted in ascending (a, b) order regardless of scan blocking,
// so snapshots are canonical. Returns edges added.
std::size_t synonymy_pass(MemoryGraph& graph, double threshold,
                          std::size_t block_size = 512);

// Full indexing pipeline: extract per episode (parallel, deterministic order
// by chunk_id), populate the graph, embed gists and rendered facts, run the
// synonymy pass, freeze. Episodes whose extraction output stays malformed
// after retries are skipped with a warning.
MemoryGraph build_graph(const std::vector<Episode>& corpus,
                        Extractor& extractor, EmbeddingClient& embeddings,
                        const IndexConfig& config = {});

}  // namespace remem
