// Operator CLI: index corpora, ask questions, run evaluations, inspect
// graphs. Links only the C API; exit codes are 0 ok, 1 user/IO error,
// 2 external-service error.
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "remem.h"

namespace {

int exit_code_of(remem_status status) {
  if (status == REMEM_OK) return 0;
  return status == REMEM_ERR_EXTERNAL_SERVICE ? 2 : 1;
}

int fail(remem_status status) {
  std::cerr << "error: " << remem_last_error() << '\n';
  return exit_code_of(status);
}

struct OwnedString {
  char* ptr = nullptr;
  ~OwnedString() { remem_string_free(ptr); }
};

struct OwnedGraph {
  remem_graph* ptr = nullptr;
  ~OwnedGraph() { remem_graph_free(ptr); }
};

// Flags shared by query and eval; collected into the options JSON the C API
// accepts.
struct QueryFlags {
  std::string mode = "iterative";
  int max_steps = 3;
  std::size_t top_k = 10;
  std::string planner = "llm";
  std::string script_path;
  std::string synthesizer = "llm";
  std::string embedder = "mock";
  std::string chat_model = "default";
  std::string embed_model = "default";
  std::string final_prompt;
  CLI::Option* max_steps_opt = nullptr;
};

void add_query_flags(CLI::App* cmd, QueryFlags* flags) {
  cmd->add_option("--mode", flags->mode, "Answering mode")
      ->check(CLI::IsMember({"single", "iterative"}))
      ->envname("REMEM_MODE")
      ->capture_default_str();
  flags->max_steps_opt =
      cmd->add_option("--max-steps", flags->max_steps,
                      "Tool-call budget in iterative mode")
          ->check(CLI::PositiveNumber)
          ->envname("REMEM_MAX_STEPS")
          ->capture_default_str();
  cmd->add_option("--top-k", flags->top_k, "Hits per retrieval list")
      ->check(CLI::PositiveNumber)
      ->envname("REMEM_TOP_K")
      ->capture_default_str();
  cmd->add_option("--planner", flags->planner, "Planner backend")
      ->check(CLI::IsMember({"llm", "script"}))
      ->capture_default_str();
  cmd->add_option("--script", flags->script_path,
                  "Planner script (JSONL of {\"tool\",\"args\"}) for "
                  "--planner script");
  cmd->add_option("--synthesizer", flags->synthesizer, "Answer synthesizer")
      ->check(CLI::IsMember({"llm", "echo"}))
      ->capture_default_str();
  cmd->add_option("--embedder", flags->embedder, "Query-embedding provider")
      ->check(CLI::IsMember({"mock", "live"}))
      ->envname("REMEM_EMBEDDER")
      ->capture_default_str();
  cmd->add_option("--chat-model", flags->chat_model, "Chat model tag")
      ->envname("REMEM_CHAT_MODEL")
      ->capture_default_str();
  cmd->add_option("--embed-model", flags->embed_model, "Embedding model tag")
      ->envname("REMEM_EMBED_MODEL")
      ->capture_default_str();
  cmd->add_option("--final-prompt", flags->final_prompt,
                  "Override the answer-synthesis prompt");
}

nlohmann::json query_options_json(const QueryFlags& flags) {
  nlohmann::json j{{"mode", flags.mode},
                   {"max_steps", flags.max_steps},
                   {"top_k", flags.top_k},
                   {"planner", flags.planner},
                   {"synthesizer", flags.synthesizer},
                   {"embedder", flags.embedder},
                   {"chat_model", flags.chat_model},
                   {"embed_model", flags.embed_model}};
  if (!flags.script_path.empty()) j["script_path"] = flags.script_path;
  if (!flags.final_prompt.empty()) j["final_prompt_override"] = flags.final_prompt;
  return j;
}

void warn_single_mode(const QueryFlags& flags) {
  if (flags.mode == "single" && flags.max_steps_opt->count() > 0) {
    std::cerr << "warning: max-steps ignored in single mode\n";
  }
}

bool needs_force(const std::filesystem::path& out) {
  std::error_code ec;
  if (!std::filesystem::exists(out, ec)) return false;
  if (!std::filesystem::is_directory(out, ec)) return true;
  return !std::filesystem::is_empty(out, ec);
}

int run_index(const std::string& corpus, const std::string& out,
              const std::string& extractor, const std::string& embedder,
              double threshold, std::size_t workers, std::size_t mock_dim,
              const std::string& chat_model, const std::string& embed_model,
              bool force) {
  if (!force && needs_force(out)) {
    std::cerr << "error: " << out
              << " already exists; pass --force to overwrite\n";
    return 1;
  }
  nlohmann::json opts{{"extractor", extractor},
                      {"embedder", embedder},
                      {"synonymy_threshold", threshold},
                      {"extraction_workers", workers},
                      {"mock_dimension", mock_dim},
                      {"chat_model", chat_model},
                      {"embed_model", embed_model}};
  OwnedGraph graph;
  remem_status status =
      remem_index_corpus(corpus.c_str(), opts.dump().c_str(), &graph.ptr);
  if (status != REMEM_OK) return fail(status);
  status = remem_save(graph.ptr, out.c_str());
  if (status != REMEM_OK) return fail(status);

  OwnedString stats;
  status = remem_stats_json(graph.ptr, &stats.ptr);
  if (status != REMEM_OK) return fail(status);
  nlohmann::json s = nlohmann::json::parse(stats.ptr);
  std::cout << "indexed: gists=" << s["gist_nodes"]
            << " phrases=" << s["phrase_nodes"]
            << " relations=" << s["relation_edges"]
            << " contexts=" << s["context_edges"]
            << " synonyms=" << s["synonymy_edges"]
            << " triples=" << s["triples"] << '\n';
  std::cout << "snapshot written to " << out << '\n';
  return 0;
}

int run_query(const std::string& graph_dir, const std::string& question,
              const QueryFlags& flags, bool trace) {
  warn_single_mode(flags);
  OwnedGraph graph;
  remem_status status = remem_open(graph_dir.c_str(), &graph.ptr);
  if (status != REMEM_OK) return fail(status);

  OwnedString answer;
  status = remem_query(graph.ptr, question.c_str(),
                       query_options_json(flags).dump().c_str(), &answer.ptr);
  if (status != REMEM_OK) return fail(status);

  nlohmann::json a = nlohmann::json::parse(answer.ptr);
  if (trace) {
    for (const auto& step : a["history"]) {
      std::cout << step.dump() << '\n';
    }
  }
  std::cout << a["text"].get<std::string>() << '\n';
  return 0;
}

int run_eval(const std::string& graph_dir, const std::string& dataset,
             const std::string& format, const std::string& metrics_list,
             const std::string& judge, const std::string& report_path,
             std::size_t jobs, const QueryFlags& flags) {
  warn_single_mode(flags);
  OwnedGraph graph;
  remem_status status = remem_open(graph_dir.c_str(), &graph.ptr);
  if (status != REMEM_OK) return fail(status);

  nlohmann::json opts = query_options_json(flags);
  opts["judge"] = judge;
  opts["jobs"] = jobs;
  nlohmann::json metrics = nlohmann::json::array();
  std::string current;
  for (char c : metrics_list + ",") {
    if (c == ',') {
      if (!current.empty()) metrics.push_back(current);
      current.clear();
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      current.push_back(c);
    }
  }
  opts["metrics"] = std::move(metrics);

  OwnedString out;
  status = remem_eval(graph.ptr, dataset.c_str(), format.c_str(),
                      opts.dump().c_str(), &out.ptr);
  if (status != REMEM_OK) return fail(status);

  nlohmann::json result = nlohmann::json::parse(out.ptr);
  if (!report_path.empty()) {
    std::filesystem::path json_path(report_path);
    std::ofstream report(json_path);
    if (!report) {
      std::cerr << "error: cannot write report to " << report_path << '\n';
      return 1;
    }
    report << result["report"].dump(2) << '\n';

    std::filesystem::path table_path = json_path;
    table_path.replace_extension(".txt");
    std::ofstream(table_path) << result["table"].get<std::string>();
    std::filesystem::path csv_path = json_path;
    csv_path.replace_extension(".csv");
    std::ofstream(csv_path) << result["csv"].get<std::string>();
  }
  std::cout << result["table"].get<std::string>();
  return 0;
}

int run_stats(const std::string& graph_dir) {
  OwnedGraph graph;
  remem_status status = remem_open(graph_dir.c_str(), &graph.ptr);
  if (status != REMEM_OK) return fail(status);
  OwnedString stats;
  status = remem_stats_json(graph.ptr, &stats.ptr);
  if (status != REMEM_OK) return fail(status);
  nlohmann::json s = nlohmann::json::parse(stats.ptr);
  for (const auto& [key, value] : s.items()) {
    std::cout << key << " " << value << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Episodic memory engine: index, query, evaluate, inspect"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Key/value config file; sections and keys "
                                 "mirror subcommands and flag names");

  // index
  auto* index = app.add_subcommand("index", "Build a graph snapshot from a corpus");
  std::string corpus, out_dir;
  std::string extractor = "rule", index_embedder = "mock";
  std::string index_chat_model = "default", index_embed_model = "default";
  double threshold = 0.8;
  std::size_t workers = 0, mock_dim = 32;
  bool force = false;
  index->add_option("--corpus", corpus, "Corpus JSONL path")->required();
  index->add_option("--out", out_dir, "Snapshot output directory")->required();
  index->add_option("--extractor", extractor, "Gist/fact extractor")
      ->check(CLI::IsMember({"rule", "llm"}))
      ->envname("REMEM_EXTRACTOR")
      ->capture_default_str();
  index->add_option("--embedder", index_embedder, "Embedding provider")
      ->check(CLI::IsMember({"mock", "live"}))
      ->envname("REMEM_EMBEDDER")
      ->capture_default_str();
  index->add_option("--synonymy-threshold", threshold,
                    "Cosine similarity threshold in (0,1]")
      ->capture_default_str();
  index->add_option("--workers", workers, "Extraction worker threads (0 = auto)")
      ->capture_default_str();
  index->add_option("--mock-dim", mock_dim, "Mock embedding dimension")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  index->add_option("--chat-model", index_chat_model, "Chat model tag")
      ->envname("REMEM_CHAT_MODEL")
      ->capture_default_str();
  index->add_option("--embed-model", index_embed_model, "Embedding model tag")
      ->envname("REMEM_EMBED_MODEL")
      ->capture_default_str();
  index->add_flag("--force", force, "Overwrite an existing snapshot directory");

  // query
  auto* query = app.add_subcommand("query", "Answer one question over a snapshot");
  std::string query_graph, question;
  bool trace = false;
  QueryFlags query_flags;
  query->add_option("--graph", query_graph, "Snapshot directory")->required();
  query->add_option("--question", question, "Question text")->required();
  add_query_flags(query, &query_flags);
  query->add_flag("--trace", trace,
                  "Print the (thought, call, observation) history as JSONL");

  // eval
  auto* eval = app.add_subcommand("eval", "Run a QA dataset against a snapshot");
  std::string eval_graph, dataset, format, report_path;
  std::string metrics = "f1,bleu1,em,refusal";
  std::string judge = "none";
  std::size_t jobs = 1;
  QueryFlags eval_flags;
  eval->add_option("--graph", eval_graph, "Snapshot directory")->required();
  eval->add_option("--dataset", dataset, "Dataset JSONL path")->required();
  eval->add_option("--format", format, "Dataset format")
      ->check(CLI::IsMember({"conversationQA", "factQA"}))
      ->required();
  eval->add_option("--metrics", metrics, "Comma-separated metric list")
      ->capture_default_str();
  eval->add_option("--judge", judge, "LLM judge")
      ->check(CLI::IsMember({"none", "llm"}))
      ->capture_default_str();
  eval->add_option("--report", report_path,
                   "Write report JSON here (plus .txt table and .csv rows)");
  eval->add_option("--jobs", jobs, "Parallel answering workers")
      ->check(CLI::PositiveNumber)
      ->envname("REMEM_JOBS")
      ->capture_default_str();
  add_query_flags(eval, &eval_flags);

  // stats
  auto* stats = app.add_subcommand("stats", "Print graph counts and degrees");
  std::string stats_graph;
  stats->add_option("--graph", stats_graph, "Snapshot directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (index->parsed()) {
      return run_index(corpus, out_dir, extractor, index_embedder, threshold,
                       workers, mock_dim, index_chat_model, index_embed_model,
                       force);
    }
    if (query->parsed()) {
      return run_query(query_graph, question, query_flags, trace);
    }
    if (eval->parsed()) {
      return run_eval(eval_graph, dataset, format, metrics, judge, report_path,
                      jobs, eval_flags);
    }
    if (stats->parsed()) {
      return run_stats(stats_graph);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
