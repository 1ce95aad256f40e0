#include <memory>
#include <string>
#include <vector>

#include "doctest.h"
#include "remem/clients.hpp"
#include "remem/errors.hpp"
#include "remem/extraction.hpp"
#include "remem/graph.hpp"
#include "remem/indexing.hpp"
#include "remem/snapshot.hpp"
#include "remem/util.hpp"
#include "support/builders.hpp"
#include "support/oracles.hpp"

using namespace remem;
using testgen::capture_error;
using testgen::read_file;
using testgen::TempDir;
using testgen::write_file;

namespace {

Episode text_episode(const std::string& chunk, const std::string& text) {
  Episode e;
  e.chunk_id = chunk;
  e.text = text;
  return e;
}

// Pins rows onto a gist-only graph so synonymy_pass can run in isolation.
MemoryGraph gist_graph(const std::vector<std::vector<float>>& rows) {
  MemoryGraph g;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    g.add_gist("gist " + std::to_string(i), std::nullopt, "c");
  }
  if (!rows.empty() && !rows[0].empty()) {
    std::vector<float> flat;
    for (const auto& row : rows) flat.insert(flat.end(), row.begin(), row.end());
    g.set_embeddings(rows[0].size(), std::move(flat), {});
  }
  return g;
}

// Throws MalformedExtraction for one chunk, emits a single gist otherwise.
class PartialExtractor : public Extractor {
 public:
  explicit PartialExtractor(std::string bad_chunk)
      : bad_chunk_(std::move(bad_chunk)) {}

  std::vector<GistRecord> extract_gists(const Episode& e) override {
    if (e.chunk_id == bad_chunk_) {
      raise(ErrorCode::MalformedExtraction, "unusable output");
    }
    return {{"gist for " + e.chunk_id, std::nullopt}};
  }
  std::vector<FactRecord> extract_facts(const Episode&,
                                        const std::vector<GistRecord>&) override {
    return {};
  }
  std::string tag() const override { return "partial"; }

 private:
  std::string bad_chunk_;
};

}  // namespace

TEST_SUITE("indexing") {

TEST_CASE("load_corpus parses one episode per line") {
  TempDir dir("corpus");
  write_file(dir.path / "corpus.jsonl",
             "{\"chunk_id\":\"a\",\"timestamp\":\"2020-01-02\","
             "\"text\":\"A met B.\"}\n"
             "\n"
             "{\"chunk_id\":\"b\",\"text\":null,"
             "\"turns\":[{\"speaker\":\"X\",\"text\":\"hi\"}]}\n");
  auto corpus = load_corpus(dir.path / "corpus.jsonl");
  REQUIRE(corpus.size() == 2);
  CHECK(corpus[0].chunk_id == "a");
  REQUIRE(corpus[0].timestamp.has_value());
  CHECK(render_instant(*corpus[0].timestamp) == "2020-01-02");
  CHECK(corpus[0].text == "A met B.");
  CHECK(corpus[1].chunk_id == "b");
  CHECK_FALSE(corpus[1].timestamp.has_value());
  REQUIRE(corpus[1].turns.size() == 1);
  CHECK(corpus[1].turns[0].speaker == "X");
}

TEST_CASE("load_corpus reports the offending line") {
  TempDir dir("corpus-bad");
  auto expect = [&](const std::string& content, const std::string& needle) {
    write_file(dir.path / "bad.jsonl", content);
    auto err = capture_error([&] { load_corpus(dir.path / "bad.jsonl"); });
    REQUIRE(err.has_value());
    CHECK(err->code() == ErrorCode::ParseError);
    CHECK(std::string(err->what()).find(needle) != std::string::npos);
  };
  expect("{\"chunk_id\":\"a\",\"text\":\"x\"}\n{oops\n", "line 2: invalid JSON");
  expect("{\"text\":\"x\"}\n", "line 1:");
  expect("{\"chunk_id\":\"\",\"text\":\"x\"}\n", "line 1: empty chunk_id");
  expect("{\"chunk_id\":\"a\",\"timestamp\":\"Feb 2002\",\"text\":\"x\"}\n",
         "line 1:");
  expect("{\"chunk_id\":\"a\",\"text\":null}\n",
         "line 1: episode has no content");

  auto err =
      capture_error([&] { load_corpus(dir.path / "missing.jsonl"); });
  REQUIRE(err.has_value());
  CHECK(err->code() == ErrorCode::Io);
  CHECK(std::string(err->what()).find("cannot read corpus file") !=
        std::string::npos);
}

TEST_CASE("cosine_similarity dots unit rows") {
  float a[2] = {1.0f, 0.0f};
  float b[2] = {0.0f, 1.0f};
  float c[2] = {-1.0f, 0.0f};
  CHECK(cosine_similarity(a, a, 2) == doctest::Approx(1.0));
  CHECK(cosine_similarity(a, b, 2) == doctest::Approx(0.0));
  CHECK(cosine_similarity(a, c, 2) == doctest::Approx(-1.0));
}

TEST_CASE("embed_all flattens client rows") {
  MockEmbeddingClient mock(8);
  auto [rows, dim] = embed_all({"one", "two", "three"}, mock);
  CHECK(dim == 8);
  REQUIRE(rows.size() == 24);
  auto direct = mock.embed({"two"});
  for (std::size_t i = 0; i < 8; ++i) {
    CHECK(rows[8 + i] == doctest::Approx(direct[0][i]));
  }

  auto [empty_rows, empty_dim] = embed_all({}, mock);
  CHECK(empty_rows.empty());
  CHECK(empty_dim == 8);

  // Same text, same row: the mock is deterministic.
  auto twice = mock.embed({"repeat", "repeat"});
  CHECK(twice[0] == twice[1]);
}

TEST_CASE("synonymy_pass adds exactly the pairs at the threshold") {
  {
    MemoryGraph g = gist_graph({{1.0f, 0.0f}, {1.0f, 0.0f}});
    CHECK(synonymy_pass(g, 0.8) == 1);
    REQUIRE(g.synonyms().size() == 1);
    CHECK(g.synonyms()[0].a == 0);
    CHECK(g.synonyms()[0].b == 1);
    CHECK(g.synonyms()[0].similarity == doctest::Approx(1.0f));
    // Re-running discovers nothing new.
    CHECK(synonymy_pass(g, 0.8) == 0);
  }
  {
    MemoryGraph g = gist_graph({{1.0f, 0.0f}, {0.0f, 1.0f}});
    CHECK(synonymy_pass(g, 0.8) == 0);
    CHECK(g.synonyms().empty());
  }
  {
    MemoryGraph g = gist_graph({{1.0f, 0.0f}});
    CHECK(synonymy_pass(g, 0.8) == 0);  // fewer than two gists
  }
  {
    MemoryGraph g;
    g.add_gist("a", std::nullopt, "c");
    g.add_gist("b", std::nullopt, "c");
    auto err = capture_error([&] { synonymy_pass(g, 0.8); });
    REQUIRE(err.has_value());
    CHECK(err->code() == ErrorCode::EmbeddingUnavailable);
  }
  {
    MemoryGraph g = gist_graph({{1.0f, 0.0f}, {1.0f, 0.0f}});
    auto err = capture_error([&] { synonymy_pass(g, 1.5); });
    REQUIRE(err.has_value());
    CHECK(err->code() == ErrorCode::InvalidArgument);
    CHECK(std::string(err->what()).find("threshold must be in (0,1]") !=
          std::string::npos);
  }
}

TEST_CASE("synonymy_pass equals the quadratic scan for any block size") {
  for (std::uint64_t seed : {31ull, 32ull}) {
    testgen::Rng rng(seed);
    std::size_t n = 200, dim = 4;
    std::vector<float> rows = testgen::random_unit_rows(rng, n, dim);

    auto want = oracle::synonymy_quadratic(rows, dim, 0.8);
    for (std::size_t block : {std::size_t{1}, std::size_t{7}, std::size_t{512}}) {
      CAPTURE(seed);
      CAPTURE(block);
      MemoryGraph g;
      for (std::size_t i = 0; i < n; ++i) {
        g.add_gist("g" + std::to_string(i), std::nullopt, "c");
      }
      g.set_embeddings(dim, rows, {});
      CHECK(synonymy_pass(g, 0.8, block) == want.size());
      REQUIRE(g.synonyms().size() == want.size());
      for (std::size_t i = 0; i < want.size(); ++i) {
        CHECK(g.synonyms()[i].a == want[i].a);
        CHECK(g.synonyms()[i].b == want[i].b);
        CHECK(g.synonyms()[i].similarity ==
              doctest::Approx(want[i].similarity));
      }
    }
  }
}

TEST_CASE("build_graph wires extraction, binding, embedding, and freeze") {
  std::vector<Episode> corpus = {text_episode("e1", "A met B on 2020-01-02.")};
  RuleBasedExtractor rule;
  MockEmbeddingClient mock(8);
  IndexConfig config;
  config.extraction_workers = 1;

  MemoryGraph g = build_graph(corpus, rule, mock, config);
  GraphStats s = g.stats();
  CHECK(s.gist_nodes == 1);
  CHECK(s.phrase_nodes == 2);
  CHECK(s.relation_edges == 1);
  CHECK(s.context_edges == 2);
  CHECK(s.synonymy_edges == 0);
  CHECK(g.has_embeddings());
  CHECK(g.embedding_dimension() == 8);
  CHECK(g.config().extractor_tag == "rule");
  CHECK(g.config().embedding_tag == mock.provider_tag());

  // Frozen on return.
  auto err = capture_error([&] { g.add_gist("x", std::nullopt, "c"); });
  REQUIRE(err.has_value());
  CHECK(err->code() == ErrorCode::BadState);
}

TEST_CASE("identical gist text across episodes links a synonymy edge") {
  std::vector<Episode> corpus = {text_episode("e1", "A met B"),
                                 text_episode("e2", "A met B")};
  RuleBasedExtractor rule;
  MockEmbeddingClient mock(8);
  IndexConfig config;
  config.extraction_workers = 1;

  MemoryGraph g = build_graph(corpus, rule, mock, config);
  CHECK(g.gists().size() == 2);
  CHECK(g.gists()[0].text == g.gists()[1].text);
  REQUIRE(g.synonyms().size() == 1);
  CHECK(g.synonyms()[0].similarity == doctest::Approx(1.0f));
}

TEST_CASE("the replay fixture builds ten gists and fourteen relations") {
  MemoryGraph g = testgen::football_graph();
  CHECK(g.gists().size() == 10);
  CHECK(g.relations().size() == 14);
  // Single chunk: the context product covers every gist-phrase pair.
  CHECK(g.contexts().size() == 10 * g.phrases().size());
  CHECK(g.has_embeddings());
}

TEST_CASE("edge-count laws hold for corpora with chunk-unique phrases") {
  for (std::uint64_t seed : {51ull, 52ull, 53ull}) {
    testgen::Rng rng(seed);
    std::size_t chunks = testgen::pick_size(rng, 1, 8);

    ReplayExtractor replay;
    std::vector<Episode> corpus;
    std::size_t want_relations = 0, want_contexts = 0, want_gists = 0;
    for (std::size_t d = 0; d < chunks; ++d) {
      std::string chunk = "c" + std::to_string(d);
      std::size_t n_gists = testgen::pick_size(rng, 1, 4);
      std::size_t n_facts = testgen::pick_size(rng, 1, 5);

      std::vector<GistRecord> gists;
      for (std::size_t i = 0; i < n_gists; ++i) {
        gists.push_back({chunk + " gist " + std::to_string(i), std::nullopt});
      }
      // Facts chain phrases c<d>_p0 -> c<d>_p1 -> ...: n_facts+1 distinct
      // phrases, all unique to this chunk.
      std::vector<FactRecord> facts(n_facts);
      for (std::size_t i = 0; i < n_facts; ++i) {
        facts[i].subject = chunk + "_p" + std::to_string(i);
        facts[i].predicate = "rel";
        facts[i].object = chunk + "_p" + std::to_string(i + 1);
      }
      replay.set_records(chunk, gists, facts);
      corpus.push_back(text_episode(chunk, "placeholder"));

      want_gists += n_gists;
      want_relations += n_facts;
      want_contexts += n_gists * (n_facts + 1);
    }

    MockEmbeddingClient mock(6);
    IndexConfig config;
    config.extraction_workers = 1;
    MemoryGraph g = build_graph(corpus, replay, mock, config);
    CAPTURE(seed);
    CHECK(g.gists().size() == want_gists);
    CHECK(g.relations().size() == want_relations);
    CHECK(g.contexts().size() == want_contexts);
  }
}

TEST_CASE("indexing is deterministic and order-independent") {
  std::vector<Episode> corpus = {
      text_episode("b", "C visited D in February 2002."),
      text_episode("a", "A met B on 2020-01-02."),
      text_episode("c", "E joined F."),
  };
  std::vector<Episode> shuffled = {corpus[2], corpus[0], corpus[1]};

  auto build_and_save = [](const std::vector<Episode>& eps,
                           const std::filesystem::path& dir,
                           std::size_t workers) {
    RuleBasedExtractor rule;
    MockEmbeddingClient mock(8);
    IndexConfig config;
    config.extraction_workers = workers;
    MemoryGraph g = build_graph(eps, rule, mock, config);
    save_snapshot(g, dir);
  };

  TempDir first("det-a"), second("det-b"), third("det-c"), fourth("det-d");
  build_and_save(corpus, first.path, 1);
  build_and_save(corpus, second.path, 1);
  build_and_save(shuffled, third.path, 1);
  build_and_save(corpus, fourth.path, 4);

  for (const char* name :
       {"meta.json", "gists.jsonl", "phrases.jsonl", "relations.jsonl",
        "contexts.jsonl", "synonyms.jsonl", "embeddings.bin"}) {
    CAPTURE(name);
    std::string baseline = read_file(first.path / name);
    CHECK(baseline == read_file(second.path / name));
    CHECK(baseline == read_file(third.path / name));
    CHECK(baseline == read_file(fourth.path / name));
  }
}

TEST_CASE("build_graph validates the corpus") {
  RuleBasedExtractor rule;
  MockEmbeddingClient mock(8);
  IndexConfig config;

  auto err = capture_error([&] { build_graph({}, rule, mock, config); });
  REQUIRE(err.has_value());
  CHECK(err->code() == ErrorCode::InvalidArgument);
  CHECK(std::string(err->what()).find("corpus is empty") != std::string::npos);

  std::vector<Episode> dup = {text_episode("x", "A met B."),
                              text_episode("x", "C met D.")};
  err = capture_error([&] { build_graph(dup, rule, mock, config); });
  REQUIRE(err.has_value());
  CHECK(err->code() == ErrorCode::InvalidArgument);
  CHECK(std::string(err->what()).find("duplicate chunk_id in corpus: x") !=
        std::string::npos);
}

TEST_CASE("a malformed episode is skipped with a warning, not dropped silently") {
  std::vector<std::string> warnings;
  set_warn_sink([&](const std::string& m) { warnings.push_back(m); });

  PartialExtractor extractor("bad");
  MockEmbeddingClient mock(8);
  IndexConfig config;
  config.extraction_workers = 1;
  std::vector<Episode> corpus = {text_episode("good", "x"),
                                 text_episode("bad", "y"),
                                 text_episode("other", "z")};
  MemoryGraph g = build_graph(corpus, extractor, mock, config);
  set_warn_sink({});

  CHECK(g.gists().size() == 2);
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("skipping episode bad") != std::string::npos);
  CHECK(warnings[0].find("unusable output") != std::string::npos);
}

}  // TEST_SUITE
