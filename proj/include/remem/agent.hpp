#pragma once

#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

#include "remem/clients.hpp"
#include "remem/exploration.hpp"
#include "remem/retrieval.hpp"

namespace remem {

inline constexpr const char* kRefusalText = "no information available";

enum class ToolName {
  SemanticRetrieve,
  LexicalRetrieve,
  FindGistContexts,
  FindEntityContexts,
  OutputAnswer,
};

const char* tool_name_string(ToolName name);
std::optional<ToolName> tool_name_from_string(const std::string& s);

struct ToolCall {
  ToolName name = ToolName::SemanticRetrieve;
  nlohmann::json args = nlohmann::json::object();
};

struct ToolValidation {
  bool ok = false;
  std::string reason;
};

// Signature check: known tool, required args present, no unknown keys, time
// strings parse, enums legal. Violations are returned, never thrown.
ToolValidation validate_tool_call(const ToolCall& call);

// Builds the TemporalConstraint encoded in a validated call's args
// (start_time/end_time plus optional start_op/end_op).
TemporalConstraint constraint_from_args(const nlohmann::json& args);

struct PlannerDecision {
  std::string thought;
  ToolCall call;
};

struct HistoryStep {
  std::string thought;
  ToolCall call;
  nlohmann::json observation;
};

// Ordered, id-deduped evidence accumulated across steps.
class EvidenceLog {
 public:
  void merge_gist(GistId id, std::string rendered);
  void merge_fact(EdgeId id, std::string rendered);

  struct Entry {
    bool is_gist = false;
    std::uint32_t id = 0;
    std::string rendered;
  };
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t gist_count() const { return gist_ids_.size(); }
  std::size_t fact_count() const { return fact_ids_.size(); }
  bool empty() const { return entries_.empty(); }

  // First merged gist / fact, for reader-style synthesizers.
  const Entry* first_gist() const;
  const Entry* first_fact() const;

 private:
  std::vector<Entry> entries_;
  std::unordered_set<std::uint32_t> gist_ids_;
  std::unordered_set<std::uint32_t> fact_ids_;
};

// Newest-first rendering capped at char_budget; oldest entries fall off
// first when the budget is exceeded.
std::string render_evidence(const EvidenceLog& evidence,
                            std::size_t char_budget);

class Planner {
 public:
  virtual ~Planner() = default;
  virtual PlannerDecision decide(const std::string& question,
                                 const std::string& evidence_rendered,
                                 const std::vector<HistoryStep>& history) = 0;
};

// Fixed decision list consumed one per step; the hermetic double for every
// agent property.
class ScriptedPlanner : public Planner {
 public:
  explicit ScriptedPlanner(std::vector<PlannerDecision> steps);
  PlannerDecision decide(const std::string& question,
                         const std::string& evidence_rendered,
                         const std::vector<HistoryStep>& history) override;

 private:
  std::vector<PlannerDecision> steps_;
  std::size_t next_ = 0;
};

// Chat-model planner. Expects {"thought": str, "tool": str, "args": {...}};
// unparseable replies go through one repair pass and bounded retries, then
// surface as MalformedExtraction (the loop turns that into an error
// observation).
class LlmPlanner : public Planner {
 public:
  LlmPlanner(std::shared_ptr<ChatClient> client, std::string prompt_template,
             std::string model, int max_retries = 2);
  PlannerDecision decide(const std::string& question,
                         const std::string& evidence_rendered,
                         const std::vector<HistoryStep>& history) override;

 private:
  std::shared_ptr<ChatClient> client_;
  std::string prompt_;
  std::string model_;
  int max_retries_;
};

class Synthesizer {
 public:
  virtual ~Synthesizer() = default;
  // draft_answer carries the output_answer argument when the planner gave
  // one; empty otherwise. Empty or whitespace output becomes the canonical
  // refusal string in the Answer.
  virtual std::string synthesize(const std::string& question,
                                 const EvidenceLog& evidence,
                                 const std::string& draft_answer,
                                 const std::string& prompt_override) = 0;
};

// Copies the first gist's text (then the first fact's rendering) out of the
// evidence; refuses on empty evidence. Deterministic test double.
class EchoSynthesizer : public Synthesizer {
 public:
  std::string synthesize(const std::string& question,
                         const EvidenceLog& evidence,
                         const std::string& draft_answer,
                         const std::string& prompt_override) override;
};

class LlmSynthesizer : public Synthesizer {
 public:
  LlmSynthesizer(std::shared_ptr<ChatClient> client,
                 std::string default_prompt, std::string model);
  std::string synthesize(const std::string& question,
                         const EvidenceLog& evidence,
                         const std::string& draft_answer,
                         const std::string& prompt_override) override;

 private:
  std::shared_ptr<ChatClient> client_;
  std::string default_prompt_;
  std::string model_;
};

enum class AgentMode { Iterative, Single };

struct AgentConfig {
  AgentMode mode = AgentMode::Iterative;
  // 3 suits lookup-style questions, 5 multi-hop reasoning chains.
  int max_steps = 3;
  std::size_t top_k = kDefaultTopK;
  std::string final_prompt_override;
  std::size_t evidence_char_budget = 8000;
};

struct Answer {
  std::string text;
  std::vector<HistoryStep> history;
  bool refused() const;
};

// Executes one validated non-answer tool call; returns the observation
// payload ({"gists": [...], "facts": [...]} or {"count": n}).
nlohmann::json dispatch_tool(const ToolCall& call, const MemoryGraph& graph,
                             const Retriever& retriever, std::size_t top_k);

// Plan -> validate -> dispatch -> observe loop, at most cfg.max_steps steps.
// Invalid calls consume a step as error observations. output_answer stops
// the loop; running out of steps synthesizes from accumulated evidence.
Answer run_iterative(const MemoryGraph& graph, const Retriever& retriever,
                     const std::string& question, const AgentConfig& cfg,
                     Planner& planner, Synthesizer& synthesizer);

// Single mode: exactly one unconstrained semantic retrieval, then synthesis.
Answer run_single(const MemoryGraph& graph, const Retriever& retriever,
                  const std::string& question, const AgentConfig& cfg,
                  Synthesizer& synthesizer);

}  // namespace remem
