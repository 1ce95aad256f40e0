#include <sys/wait.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "support/builders.hpp"

#ifndef REMEM_CLI_PATH
#error "REMEM_CLI_PATH must point at the built binary"
#endif

namespace {

using nlohmann::json;
using testgen::read_file;
using testgen::TempDir;
using testgen::write_file;

struct RunResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

// Clears every variable the binary reads so each invocation starts from the
// documented defaults; restores the ambient values on scope exit.
struct EnvSanitizer {
  EnvSanitizer() {
    for (const char* name : kVars) {
      const char* v = std::getenv(name);
      saved_.emplace_back(name, v ? std::optional<std::string>(v)
                                  : std::nullopt);
      ::unsetenv(name);
    }
  }
  ~EnvSanitizer() {
    for (const auto& [name, v] : saved_) {
      if (v) ::setenv(name.c_str(), v->c_str(), 1);
      else ::unsetenv(name.c_str());
    }
  }

 private:
  static constexpr const char* kVars[] = {
      "REMEM_CHAT_BASE_URL", "REMEM_CHAT_API_KEY", "REMEM_EMBED_BASE_URL",
      "REMEM_EMBED_API_KEY", "REMEM_CACHE_DIR",    "REMEM_MODE",
      "REMEM_MAX_STEPS",     "REMEM_TOP_K",        "REMEM_EMBEDDER",
      "REMEM_CHAT_MODEL",    "REMEM_EMBED_MODEL",  "REMEM_EXTRACTOR",
      "REMEM_JOBS"};
  std::vector<std::pair<std::string, std::optional<std::string>>> saved_;
};

RunResult run_cli(const TempDir& dir, const std::string& args) {
  static std::atomic<unsigned> counter{0};
  unsigned n = counter++;
  std::filesystem::path out_path = dir.path / ("cli-" + std::to_string(n) + ".out");
  std::filesystem::path err_path = dir.path / ("cli-" + std::to_string(n) + ".err");
  std::string cmd = std::string(REMEM_CLI_PATH) + " " + args + " >" +
                    out_path.string() + " 2>" + err_path.string();
  int raw = std::system(cmd.c_str());
  RunResult r;
  if (raw != -1 && WIFEXITED(raw)) r.exit_code = WEXITSTATUS(raw);
  r.out = read_file(out_path);
  r.err = read_file(err_path);
  return r;
}

// Same fixture the C API suite uses: one gist and one entity fact per line.
const char* kCorpus =
    "{\"chunk_id\":\"c1\",\"timestamp\":\"2020-01-02\","
    "\"text\":\"Ada visited Paris on 2020-01-02.\"}\n"
    "{\"chunk_id\":\"c2\",\"timestamp\":\"2021-03-04\","
    "\"text\":\"Ada joined Acme on 2021-03-04.\"}\n";

std::string make_corpus(const TempDir& dir) {
  write_file(dir.path / "corpus.jsonl", kCorpus);
  return (dir.path / "corpus.jsonl").string();
}

std::string make_snapshot(const TempDir& dir) {
  std::string corpus = make_corpus(dir);
  std::string snap = (dir.path / "snap").string();
  RunResult r = run_cli(dir, "index --corpus " + corpus + " --out " + snap);
  REQUIRE(r.exit_code == 0);
  return snap;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines;
  std::string current;
  for (char c : text) {
    if (c == '\n') {
      lines.push_back(current);
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  if (!current.empty()) lines.push_back(current);
  return lines;
}

constexpr const char* kVisitGist = "[2020-01-02] Ada visited Paris.";
constexpr const char* kJoinGist = "[2021-03-04] Ada joined Acme.";

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("help exits zero and parse errors exit nonzero") {
  EnvSanitizer env;
  TempDir dir("cli-help");

  RunResult top = run_cli(dir, "--help");
  CHECK(top.exit_code == 0);
  CHECK(top.out.find("index") != std::string::npos);
  CHECK(top.out.find("query") != std::string::npos);
  CHECK(top.out.find("eval") != std::string::npos);
  CHECK(top.out.find("stats") != std::string::npos);

  CHECK(run_cli(dir, "index --help").exit_code == 0);
  CHECK(run_cli(dir, "query --help").exit_code == 0);
  CHECK(run_cli(dir, "eval --help").exit_code == 0);
  CHECK(run_cli(dir, "stats --help").exit_code == 0);

  CHECK(run_cli(dir, "").exit_code != 0);
  CHECK(run_cli(dir, "frobnicate").exit_code != 0);
  CHECK(run_cli(dir, "query --graph g").exit_code != 0);
  CHECK(run_cli(dir, "index --corpus c.jsonl").exit_code != 0);

  RunResult bad_mode =
      run_cli(dir, "query --graph g --question q --mode both");
  CHECK(bad_mode.exit_code != 0);
  CHECK(bad_mode.exit_code != 2);
}

TEST_CASE("index reports counts and honors --force") {
  EnvSanitizer env;
  TempDir dir("cli-index");
  std::string corpus = make_corpus(dir);
  std::string snap = (dir.path / "snap").string();
  std::string cmd = "index --corpus " + corpus + " --out " + snap;

  RunResult first = run_cli(dir, cmd);
  CHECK(first.exit_code == 0);
  CHECK(first.out.rfind(
            "indexed: gists=2 phrases=3 relations=2 contexts=4 synonyms=",
            0) == 0);
  CHECK(first.out.find(" triples=2\n") != std::string::npos);
  CHECK(first.out.find("snapshot written to " + snap + "\n") !=
        std::string::npos);
  CHECK(first.err.empty());
  CHECK(std::filesystem::exists(dir.path / "snap" / "meta.json"));

  RunResult blocked = run_cli(dir, cmd);
  CHECK(blocked.exit_code == 1);
  CHECK(blocked.err.find("error: " + snap +
                         " already exists; pass --force to overwrite") !=
        std::string::npos);

  RunResult forced = run_cli(dir, cmd + " --force");
  CHECK(forced.exit_code == 0);
}

TEST_CASE("index failures name the cause") {
  EnvSanitizer env;
  TempDir dir("cli-index-bad");
  std::string snap = (dir.path / "snap").string();

  RunResult missing =
      run_cli(dir, "index --corpus " + (dir.path / "nope.jsonl").string() +
                       " --out " + snap);
  CHECK(missing.exit_code == 1);
  CHECK(missing.err.find("cannot read corpus file") != std::string::npos);

  std::string corpus = make_corpus(dir);
  RunResult bad_threshold =
      run_cli(dir, "index --corpus " + corpus + " --out " + snap +
                       " --synonymy-threshold 1.5");
  CHECK(bad_threshold.exit_code == 1);
  CHECK(bad_threshold.err.find("error: threshold must be in (0,1]") !=
        std::string::npos);

  CHECK(run_cli(dir, "index --corpus " + corpus + " --out " + snap +
                         " --mock-dim 0")
            .exit_code != 0);

  RunResult live = run_cli(dir, "index --corpus " + corpus + " --out " +
                                    snap + " --embedder live");
  CHECK(live.exit_code == 2);
  CHECK(live.err.find("live embedder requires embedding credentials") !=
        std::string::npos);
}

TEST_CASE("query replays a scripted plan and traces history") {
  EnvSanitizer env;
  TempDir dir("cli-query");
  std::string snap = make_snapshot(dir);
  std::filesystem::path script = dir.path / "script.jsonl";
  write_file(script,
             "{\"thought\":\"look up the visit\",\"tool\":"
             "\"find_entity_contexts\",\"args\":{\"subject\":\"Ada\","
             "\"predicate\":\"visited\"}}\n"
             "{\"tool\":\"output_answer\",\"args\":{\"answer\":\"Paris\"}}\n");

  std::string base = "query --graph " + snap +
                     " --question 'Where did Ada go?' --planner script"
                     " --script " + script.string() + " --synthesizer echo";

  RunResult plain = run_cli(dir, base);
  CHECK(plain.exit_code == 0);
  CHECK(plain.out == std::string(kVisitGist) + "\n");
  CHECK(plain.err.empty());

  RunResult traced = run_cli(dir, base + " --trace");
  CHECK(traced.exit_code == 0);
  std::vector<std::string> lines = lines_of(traced.out);
  REQUIRE(lines.size() == 3);
  json step0 = json::parse(lines[0]);
  CHECK(step0["thought"] == "look up the visit");
  CHECK(step0["tool"] == "find_entity_contexts");
  CHECK(step0["observation"]["facts"][0]["rendered"] ==
        "(Ada, visited, Paris) [point in time: 2020-01-02]");
  json step1 = json::parse(lines[1]);
  CHECK(step1["tool"] == "output_answer");
  CHECK(step1["observation"] == json({{"answer", "Paris"}}));
  CHECK(lines[2] == kVisitGist);
}

TEST_CASE("query failure modes and the single-mode warning") {
  EnvSanitizer env;
  TempDir dir("cli-query-bad");

  RunResult absent = run_cli(
      dir, "query --graph " + (dir.path / "nowhere").string() + " --question q");
  CHECK(absent.exit_code == 1);
  CHECK(absent.err.find("snapshot directory not found") != std::string::npos);

  std::string snap = make_snapshot(dir);
  RunResult no_planner =
      run_cli(dir, "query --graph " + snap + " --question q --synthesizer echo");
  CHECK(no_planner.exit_code == 2);
  CHECK(no_planner.err == "error: planner requires chat credentials\n");

  RunResult no_synth = run_cli(dir, "query --graph " + snap + " --question q");
  CHECK(no_synth.exit_code == 2);
  CHECK(no_synth.err == "error: synthesizer requires chat credentials\n");

  RunResult single =
      run_cli(dir, "query --graph " + snap +
                       " --question Ada --mode single --synthesizer echo"
                       " --max-steps 5");
  CHECK(single.exit_code == 0);
  CHECK(single.err == "warning: max-steps ignored in single mode\n");
  bool known = single.out == std::string(kVisitGist) + "\n" ||
               single.out == std::string(kJoinGist) + "\n";
  CHECK(known);
}

TEST_CASE("environment variables and config files feed the flags") {
  EnvSanitizer env;
  TempDir dir("cli-config");
  std::string snap = make_snapshot(dir);
  std::string tail = "query --graph " + snap +
                     " --question Ada --synthesizer echo --max-steps 2";

  ::setenv("REMEM_MODE", "single", 1);
  RunResult via_env = run_cli(dir, tail);
  ::unsetenv("REMEM_MODE");
  CHECK(via_env.exit_code == 0);
  CHECK(via_env.err == "warning: max-steps ignored in single mode\n");

  write_file(dir.path / "remem.ini", "[query]\nmode=single\n");
  RunResult via_config =
      run_cli(dir, "--config " + (dir.path / "remem.ini").string() + " " + tail);
  CHECK(via_config.exit_code == 0);
  CHECK(via_config.err == "warning: max-steps ignored in single mode\n");
}

TEST_CASE("eval prints the table and writes report files") {
  EnvSanitizer env;
  TempDir dir("cli-eval");
  std::string snap = make_snapshot(dir);
  write_file(dir.path / "qa.jsonl",
             "{\"type\":\"question\",\"question\":\"Where did Ada go?\","
             "\"answers\":[\"Paris\"],\"category\":\"travel\"}\n"
             "{\"type\":\"question\",\"question\":\"What mystery remains?\","
             "\"answers\":[\"no information available\"]}\n");
  std::string qa = (dir.path / "qa.jsonl").string();
  std::string base = "eval --graph " + snap + " --dataset " + qa +
                     " --format factQA --mode single --synthesizer echo";

  std::string report = (dir.path / "report.json").string();
  RunResult run = run_cli(dir, base + " --report " + report);
  CHECK(run.exit_code == 0);
  CHECK(run.out.find("overall") != std::string::npos);
  json report_json = json::parse(read_file(dir.path / "report.json"));
  CHECK(report_json.contains("overall"));
  CHECK(read_file(dir.path / "report.txt") == run.out);
  std::string csv = read_file(dir.path / "report.csv");
  CHECK(csv.rfind("index,question,prediction", 0) == 0);

  RunResult judge = run_cli(dir, base + " --judge llm");
  CHECK(judge.exit_code == 2);
  CHECK(judge.err == "error: judge requires chat credentials\n");

  CHECK(run_cli(dir, "eval --graph " + snap + " --dataset " + qa +
                         " --format csv")
            .exit_code != 0);

  RunResult metric = run_cli(dir, base + " --metrics f1,rouge");
  CHECK(metric.exit_code == 1);
  CHECK(metric.err == "error: unknown metric: rouge\n");
}

TEST_CASE("stats lists graph counters") {
  EnvSanitizer env;
  TempDir dir("cli-stats");
  std::string snap = make_snapshot(dir);

  RunResult r = run_cli(dir, "stats --graph " + snap);
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("gist_nodes 2\n") != std::string::npos);
  CHECK(r.out.find("phrase_nodes 3\n") != std::string::npos);
  CHECK(r.out.find("relation_edges 2\n") != std::string::npos);
  CHECK(r.out.find("context_edges 4\n") != std::string::npos);
  CHECK(r.out.find("triples 2\n") != std::string::npos);
  CHECK(r.out.find("synonymy_edges ") != std::string::npos);
  CHECK(r.out.find("mean_gist_degree ") != std::string::npos);
  CHECK(r.out.find("mean_phrase_degree ") != std::string::npos);

  RunResult absent =
      run_cli(dir, "stats --graph " + (dir.path / "none").string());
  CHECK(absent.exit_code == 1);
}

}  // TEST_SUITE
