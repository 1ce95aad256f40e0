#include <cstdlib>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "remem.h"
#include "support/builders.hpp"

using nlohmann::json;
using testgen::TempDir;
using testgen::write_file;

namespace {

// Frees the handle on scope exit.
struct GraphHandle {
  remem_graph* g = nullptr;
  ~GraphHandle() { remem_graph_free(g); }
};

// Frees a returned string on scope exit.
struct CStr {
  char* s = nullptr;
  ~CStr() { remem_string_free(s); }
  std::string str() const { return s ? std::string(s) : std::string(); }
};

std::string last_error() { return remem_last_error(); }

// Two dated sentences; the rule extractor yields one gist and one
// subject-verb-object fact per line, so every count below is derivable.
const char* kCorpus =
    "{\"chunk_id\":\"c1\",\"timestamp\":\"2020-01-02\","
    "\"text\":\"Ada visited Paris on 2020-01-02.\"}\n"
    "{\"chunk_id\":\"c2\",\"timestamp\":\"2021-03-04\","
    "\"text\":\"Ada joined Acme on 2021-03-04.\"}\n";

const char* kMockOptions =
    "{\"extractor\":\"rule\",\"embedder\":\"mock\",\"mock_dimension\":8}";

const char* kOfflineQueryOptions =
    "{\"embedder\":\"mock\",\"mock_dimension\":8,\"synthesizer\":\"echo\"}";

TempDir corpus_dir(const std::string& tag) {
  TempDir dir(tag);
  write_file(dir.path / "corpus.jsonl", kCorpus);
  return dir;
}

std::string corpus_path(const TempDir& dir) {
  return (dir.path / "corpus.jsonl").string();
}

// Hides provider credentials for one scope so credential-dependent paths
// fail the same way no matter what the ambient environment exports.
struct CredentialBlackout {
  CredentialBlackout() {
    for (const char* name : kVars) {
      const char* v = std::getenv(name);
      saved_.emplace_back(name, v ? std::optional<std::string>(v)
                                  : std::nullopt);
      ::unsetenv(name);
    }
  }
  ~CredentialBlackout() {
    for (const auto& [name, v] : saved_) {
      if (v) ::setenv(name.c_str(), v->c_str(), 1);
      else ::unsetenv(name.c_str());
    }
  }

 private:
  static constexpr const char* kVars[] = {
      "REMEM_CHAT_BASE_URL", "REMEM_CHAT_API_KEY", "REMEM_EMBED_BASE_URL",
      "REMEM_EMBED_API_KEY"};
  std::vector<std::pair<std::string, std::optional<std::string>>> saved_;
};

}  // namespace

TEST_SUITE("capi") {

TEST_CASE("version string and pristine thread state") {
  CHECK(std::string(remem_version()) == "0.1.0");
  CHECK(last_error().empty());
  // Null frees are no-ops.
  remem_graph_free(nullptr);
  remem_string_free(nullptr);
}

TEST_CASE("null arguments fail fast with stable messages") {
  remem_graph* g = nullptr;
  char* out = nullptr;

  CHECK(remem_index_corpus(nullptr, nullptr, &g) ==
        REMEM_ERR_INVALID_ARGUMENT);
  CHECK(last_error() == "corpus_path and out_graph are required");
  CHECK(remem_index_corpus("x.jsonl", nullptr, nullptr) ==
        REMEM_ERR_INVALID_ARGUMENT);
  CHECK(last_error() == "corpus_path and out_graph are required");

  CHECK(remem_open(nullptr, &g) == REMEM_ERR_INVALID_ARGUMENT);
  CHECK(last_error() == "snapshot_dir and out_graph are required");

  CHECK(remem_save(nullptr, "somewhere") == REMEM_ERR_INVALID_ARGUMENT);
  CHECK(last_error() == "graph and dir are required");

  CHECK(remem_stats_json(nullptr, &out) == REMEM_ERR_INVALID_ARGUMENT);
  CHECK(last_error() == "graph and out_json are required");

  CHECK(remem_query(nullptr, "q", nullptr, &out) ==
        REMEM_ERR_INVALID_ARGUMENT);
  CHECK(last_error() == "graph, question, out_answer_json required");

  CHECK(remem_eval(nullptr, "d.jsonl", "factQA", nullptr, &out) ==
        REMEM_ERR_INVALID_ARGUMENT);
  CHECK(last_error() == "graph, dataset_path, format, out_report_json required");

  CHECK(g == nullptr);
  CHECK(out == nullptr);
}

TEST_CASE("index, stats, save, open roundtrip") {
  TempDir dir = corpus_dir("capi-roundtrip");
  GraphHandle built;
  REQUIRE(remem_index_corpus(corpus_path(dir).c_str(), kMockOptions,
                             &built.g) == REMEM_OK);
  REQUIRE(built.g != nullptr);
  CHECK(last_error().empty());

  CStr stats;
  REQUIRE(remem_stats_json(built.g, &stats.s) == REMEM_OK);
  json j = json::parse(stats.str());
  CHECK(j["gist_nodes"] == 2);
  // Subjects and objects only: Ada, Paris, Acme. Predicates label edges.
  CHECK(j["phrase_nodes"] == 3);
  CHECK(j["relation_edges"] == 2);
  CHECK(j["triples"] == 2);
  // Each chunk binds its one gist to its two entity phrases.
  CHECK(j["context_edges"] == 4);
  CHECK(j.contains("synonymy_edges"));
  CHECK(j["mean_gist_degree"].is_number());
  CHECK(j["mean_phrase_degree"].is_number());

  std::string snap = (dir.path / "snap").string();
  REQUIRE(remem_save(built.g, snap.c_str()) == REMEM_OK);
  CHECK(last_error().empty());

  GraphHandle reopened;
  REQUIRE(remem_open(snap.c_str(), &reopened.g) == REMEM_OK);
  REQUIRE(reopened.g != nullptr);

  CStr stats2;
  REQUIRE(remem_stats_json(reopened.g, &stats2.s) == REMEM_OK);
  CHECK(stats.str() == stats2.str());
}

TEST_CASE("null and empty options mean defaults") {
  TempDir dir = corpus_dir("capi-defaults");
  // The defaults (rule extractor, mock embedder) need no credentials.
  GraphHandle with_null;
  CHECK(remem_index_corpus(corpus_path(dir).c_str(), nullptr, &with_null.g) ==
        REMEM_OK);
  GraphHandle with_empty;
  CHECK(remem_index_corpus(corpus_path(dir).c_str(), "", &with_empty.g) ==
        REMEM_OK);
  GraphHandle with_braces;
  CHECK(remem_index_corpus(corpus_path(dir).c_str(), "{}", &with_braces.g) ==
        REMEM_OK);
}

TEST_CASE("options json failures map to invalid argument") {
  TempDir dir = corpus_dir("capi-opts");
  std::string corpus = corpus_path(dir);
  auto expect = [&](const char* options, const std::string& needle) {
    CAPTURE(options);
    remem_graph* out = nullptr;
    CHECK(remem_index_corpus(corpus.c_str(), options, &out) ==
          REMEM_ERR_INVALID_ARGUMENT);
    CHECK(out == nullptr);
    CHECK(last_error().find(needle) != std::string::npos);
  };

  expect("{oops", "options_json does not parse: ");
  expect("[1]", "options must be a JSON object");
  expect("{\"bogus\":1}", "unknown option: bogus");
  expect("{\"max_steps\":\"three\"}", "option max_steps has the wrong type");
  expect("{\"mode\":\"both\"}", "mode must be single|iterative");
  expect("{\"extractor\":\"regex\"}", "extractor must be rule|llm");
  expect("{\"embedder\":\"gpu\"}", "embedder must be mock|live");
  expect("{\"planner\":\"human\"}", "planner must be llm|script");
  expect("{\"synthesizer\":\"tts\"}", "synthesizer must be llm|echo");
  expect("{\"judge\":\"panel\"}", "judge must be none|llm");
  expect("{\"jobs\":0}", "jobs must be at least 1");
}

TEST_CASE("scripted query answers through the C boundary") {
  TempDir dir = corpus_dir("capi-query");
  std::filesystem::path script = dir.path / "script.jsonl";
  write_file(script,
             "{\"thought\":\"look up the visit\",\"tool\":"
             "\"find_entity_contexts\",\"args\":{\"subject\":\"Ada\","
             "\"predicate\":\"visited\"}}\n"
             "{\"tool\":\"output_answer\",\"args\":{\"answer\":\"Paris\"}}\n");

  GraphHandle built;
  REQUIRE(remem_index_corpus(corpus_path(dir).c_str(), kMockOptions,
                             &built.g) == REMEM_OK);

  json opts = {{"mode", "iterative"},       {"planner", "script"},
               {"script_path", script.string()}, {"synthesizer", "echo"},
               {"embedder", "mock"},        {"mock_dimension", 8}};
  CStr answer;
  REQUIRE(remem_query(built.g, "Where did Ada go?", opts.dump().c_str(),
                      &answer.s) == REMEM_OK);
  CHECK(last_error().empty());

  json a = json::parse(answer.str());
  // The echo synthesizer surfaces the first evidence gist verbatim.
  CHECK(a["text"] == "[2020-01-02] Ada visited Paris.");
  CHECK(a["refused"] == false);
  REQUIRE(a["history"].size() == 2);
  CHECK(a["history"][0]["thought"] == "look up the visit");
  CHECK(a["history"][0]["tool"] == "find_entity_contexts");
  CHECK(a["history"][0]["args"] ==
        json({{"subject", "Ada"}, {"predicate", "visited"}}));
  REQUIRE(a["history"][0]["observation"]["facts"].size() == 1);
  CHECK(a["history"][0]["observation"]["facts"][0]["rendered"] ==
        "(Ada, visited, Paris) [point in time: 2020-01-02]");
  CHECK(a["history"][1]["tool"] == "output_answer");
  CHECK(a["history"][1]["observation"] == json({{"answer", "Paris"}}));

  // Single mode takes exactly one retrieval step.
  json single_opts = {{"mode", "single"},
                      {"synthesizer", "echo"},
                      {"embedder", "mock"},
                      {"mock_dimension", 8}};
  CStr single;
  REQUIRE(remem_query(built.g, "Ada", single_opts.dump().c_str(),
                      &single.s) == REMEM_OK);
  json s = json::parse(single.str());
  REQUIRE(s["history"].size() == 1);
  CHECK(s["history"][0]["tool"] == "semantic_retrieve");
  CHECK(s["history"][0]["thought"] == "single-step retrieval");
  CHECK(s["refused"] == false);
  bool known = s["text"] == "[2020-01-02] Ada visited Paris." ||
               s["text"] == "[2021-03-04] Ada joined Acme.";
  CHECK(known);
}

TEST_CASE("failure classes map onto distinct status codes") {
  TempDir dir("capi-status");
  remem_graph* g = nullptr;

  CHECK(remem_index_corpus((dir.path / "missing.jsonl").string().c_str(),
                           nullptr, &g) == REMEM_ERR_IO);
  CHECK(last_error().find("cannot read corpus file") != std::string::npos);
  CHECK(g == nullptr);

  write_file(dir.path / "bad.jsonl", "{oops\n");
  CHECK(remem_index_corpus((dir.path / "bad.jsonl").string().c_str(), nullptr,
                           &g) == REMEM_ERR_PARSE);
  CHECK(last_error().find("line 1") != std::string::npos);
  CHECK(g == nullptr);

  std::filesystem::path snap = dir.path / "snap";
  std::filesystem::create_directories(snap);
  write_file(snap / "meta.json", "{\"format_version\": 2}");
  CHECK(remem_open(snap.string().c_str(), &g) == REMEM_ERR_SNAPSHOT_FORMAT);
  CHECK(last_error().find("unsupported snapshot format version 2") !=
        std::string::npos);
  CHECK(g == nullptr);

  CHECK(remem_open((dir.path / "nowhere").string().c_str(), &g) ==
        REMEM_ERR_IO);
  CHECK(last_error().find("snapshot directory not found") !=
        std::string::npos);
}

TEST_CASE("provider gaps surface as external service errors") {
  CredentialBlackout offline;
  TempDir dir = corpus_dir("capi-external");
  GraphHandle built;
  REQUIRE(remem_index_corpus(corpus_path(dir).c_str(), kMockOptions,
                             &built.g) == REMEM_OK);

  remem_graph* g2 = nullptr;
  CHECK(remem_index_corpus(corpus_path(dir).c_str(),
                           "{\"embedder\":\"live\"}", &g2) ==
        REMEM_ERR_EXTERNAL_SERVICE);
  CHECK(last_error() == "live embedder requires embedding credentials");
  CHECK(g2 == nullptr);

  // The default synthesizer is the llm one; it is built before the planner.
  CStr out1;
  CHECK(remem_query(built.g, "q",
                    "{\"embedder\":\"mock\",\"mock_dimension\":8}",
                    &out1.s) == REMEM_ERR_EXTERNAL_SERVICE);
  CHECK(last_error() == "synthesizer requires chat credentials");
  CHECK(out1.s == nullptr);

  CStr out2;
  CHECK(remem_query(built.g, "q", kOfflineQueryOptions, &out2.s) ==
        REMEM_ERR_EXTERNAL_SERVICE);
  CHECK(last_error() == "planner requires chat credentials");

  write_file(dir.path / "qa.jsonl",
             "{\"type\":\"question\",\"question\":\"q\",\"answers\":[\"a\"]}\n");
  std::string qa = (dir.path / "qa.jsonl").string();
  CStr out3;
  CHECK(remem_eval(built.g, qa.c_str(), "factQA",
                   "{\"embedder\":\"mock\",\"mock_dimension\":8,"
                   "\"mode\":\"single\",\"synthesizer\":\"echo\","
                   "\"judge\":\"llm\"}",
                   &out3.s) == REMEM_ERR_EXTERNAL_SERVICE);
  CHECK(last_error() == "judge requires chat credentials");
}

TEST_CASE("query rejects unusable planner scripts") {
  TempDir dir = corpus_dir("capi-script");
  GraphHandle built;
  REQUIRE(remem_index_corpus(corpus_path(dir).c_str(), kMockOptions,
                             &built.g) == REMEM_OK);

  auto query_with = [&](const json& opts, CStr& out) {
    return remem_query(built.g, "q", opts.dump().c_str(), &out.s);
  };
  json base = {{"embedder", "mock"},
               {"mock_dimension", 8},
               {"synthesizer", "echo"},
               {"planner", "script"}};

  CStr no_path;
  CHECK(query_with(base, no_path) == REMEM_ERR_INVALID_ARGUMENT);
  CHECK(last_error() == "script planner requires a script path");

  json absent = base;
  absent["script_path"] = (dir.path / "nope.jsonl").string();
  CStr missing;
  CHECK(query_with(absent, missing) == REMEM_ERR_IO);
  CHECK(last_error().find("cannot open planner script: ") !=
        std::string::npos);

  write_file(dir.path / "garbled.jsonl", "{oops\n");
  json garbled = base;
  garbled["script_path"] = (dir.path / "garbled.jsonl").string();
  CStr parse;
  CHECK(query_with(garbled, parse) == REMEM_ERR_PARSE);
  CHECK(last_error().find("line 1: ") != std::string::npos);

  write_file(dir.path / "unknown.jsonl", "{\"tool\":\"fly\"}\n");
  json unknown = base;
  unknown["script_path"] = (dir.path / "unknown.jsonl").string();
  CStr tool;
  CHECK(query_with(unknown, tool) == REMEM_ERR_PARSE);
  CHECK(last_error().find("line 1: unknown tool fly") != std::string::npos);
}

TEST_CASE("eval runs offline and reports all four sections") {
  TempDir dir = corpus_dir("capi-eval");
  GraphHandle built;
  REQUIRE(remem_index_corpus(corpus_path(dir).c_str(), kMockOptions,
                             &built.g) == REMEM_OK);

  write_file(dir.path / "qa.jsonl",
             "{\"type\":\"question\",\"question\":\"Where did Ada go?\","
             "\"answers\":[\"Paris\"],\"category\":\"travel\"}\n"
             "{\"type\":\"question\",\"question\":\"What mystery remains?\","
             "\"answers\":[\"no information available\"]}\n");
  std::string qa = (dir.path / "qa.jsonl").string();

  CStr bad_format;
  CHECK(remem_eval(built.g, qa.c_str(), "csv", nullptr, &bad_format.s) ==
        REMEM_ERR_INVALID_ARGUMENT);
  CHECK(last_error() == "format must be conversationQA|factQA");

  const char* opts =
      "{\"embedder\":\"mock\",\"mock_dimension\":8,\"mode\":\"single\","
      "\"synthesizer\":\"echo\"}";
  CStr absent;
  CHECK(remem_eval(built.g, (dir.path / "nope.jsonl").string().c_str(),
                   "factQA", opts, &absent.s) == REMEM_ERR_IO);
  CHECK(last_error().find("cannot open dataset file:") != std::string::npos);

  CStr out;
  REQUIRE(remem_eval(built.g, qa.c_str(), "factQA", opts, &out.s) ==
          REMEM_OK);
  CHECK(last_error().empty());

  json r = json::parse(out.str());
  REQUIRE(r.contains("report"));
  CHECK(r["report"].contains("overall"));
  REQUIRE(r["table"].is_string());
  CHECK(r["table"].get<std::string>().find("overall") != std::string::npos);
  REQUIRE(r["csv"].is_string());
  CHECK(r["csv"].get<std::string>().rfind("index,question,prediction", 0) ==
        0);
  REQUIRE(r["predictions"].is_array());
  REQUIRE(r["predictions"].size() == 2);
  for (const auto& p : r["predictions"]) {
    REQUIRE(p.is_string());
    CHECK_FALSE(p.get<std::string>().empty());
  }
}

TEST_CASE("last error clears after the next success") {
  CStr out;
  CHECK(remem_stats_json(nullptr, &out.s) == REMEM_ERR_INVALID_ARGUMENT);
  CHECK_FALSE(last_error().empty());

  TempDir dir = corpus_dir("capi-clear");
  GraphHandle built;
  REQUIRE(remem_index_corpus(corpus_path(dir).c_str(), kMockOptions,
                             &built.g) == REMEM_OK);
  CHECK(last_error().empty());
}

}  // TEST_SUITE
