#pragma once

#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "remem/agent.hpp"
#include "remem/eval.hpp"
#include "remem/graph.hpp"
#include "remem/indexing.hpp"
#include "remem/retrieval.hpp"

namespace remem {

// One options bag for index/query/eval runs, JSON-parseable so the C
// boundary passes a single string. Unknown keys are rejected.
struct EngineOptions {
  // model tags sent to providers
  std::string chat_model = "default";
  std::string embed_model = "default";

  // indexing
  std::string extractor = "rule";  // rule | llm
  std::string embedder = "mock";   // mock | live
  double synonymy_threshold = 0.8;
  std::size_t extraction_workers = 0;  // 0 -> hardware concurrency
  std::size_t mock_dimension = 32;

  // querying
  std::string mode = "iterative";  // iterative | single
  int max_steps = 3;
  std::size_t top_k = kDefaultTopK;
  std::string planner = "llm";      // llm | script
  std::string script_path;          // JSONL of {"thought","tool","args"}
  std::string synthesizer = "llm";  // llm | echo
  std::string final_prompt_override;

  // evaluation
  std::vector<std::string> metrics;  // empty -> f1, bleu1, em, refusal
  bool judge_llm = false;
  std::size_t jobs = 1;

  static EngineOptions from_json(const nlohmann::json& j);
};

// JSONL, one {"thought"?, "tool", "args"?} per line; 1-based line in errors.
std::vector<PlannerDecision> load_planner_script(const std::string& path);

std::shared_ptr<EmbeddingClient> make_embedding_client(
    const EngineOptions& opts, const ClientEnv& env, Phase phase);
// role is only used in the error message when credentials are missing.
std::shared_ptr<ChatClient> make_chat_client(const EngineOptions& opts,
                                             const ClientEnv& env, Phase phase,
                                             const std::string& role);

// Owns one graph plus the client wiring needed to query it.
class Engine {
 public:
  static Engine index_corpus(const std::string& corpus_path,
                             const EngineOptions& opts);
  static Engine index_episodes(std::vector<Episode> episodes,
                               const EngineOptions& opts);
  static Engine open(const std::string& snapshot_dir);

  Engine(Engine&& other) noexcept;
  Engine& operator=(Engine&& other) noexcept;
  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  void save(const std::string& dir) const;

  const MemoryGraph& graph() const { return graph_; }
  GraphStats stats() const { return graph_.stats(); }

  Answer ask(const std::string& question, const EngineOptions& opts);

  struct EvalRun {
    EvalReport report;
    std::vector<std::string> predictions;
  };
  EvalRun run_eval(const Dataset& dataset, const EngineOptions& opts);

 private:
  explicit Engine(MemoryGraph graph);

  // Built on first use; rebuilt when the embedder choice changes.
  Retriever& retriever_for(const EngineOptions& opts);
  Answer ask_with(const std::string& question, const EngineOptions& opts,
                  const Retriever& retriever);

  MemoryGraph graph_;
  std::string embedder_key_;
  std::shared_ptr<EmbeddingClient> embedder_;
  std::unique_ptr<Retriever> retriever_;
};

}  // namespace remem
