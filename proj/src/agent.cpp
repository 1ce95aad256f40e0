#include "remem/agent.hpp"

#include <algorithm>

#include "remem/errors.hpp"
#include "remem/snapshot.hpp"
#include "remem/util.hpp"

namespace remem {

const char* tool_name_string(ToolName name) {
  switch (name) {
    case ToolName::SemanticRetrieve: return "semantic_retrieve";
    case ToolName::LexicalRetrieve: return "lexical_retrieve";
    case ToolName::FindGistContexts: return "find_gist_contexts";
    case ToolName::FindEntityContexts: return "find_entity_contexts";
    case ToolName::OutputAnswer: return "output_answer";
  }
  return "unknown";
}

std::optional<ToolName> tool_name_from_string(const std::string& s) {
  if (s == "semantic_retrieve") return ToolName::SemanticRetrieve;
  if (s == "lexical_retrieve") return ToolName::LexicalRetrieve;
  if (s == "find_gist_contexts") return ToolName::FindGistContexts;
  if (s == "find_entity_contexts") return ToolName::FindEntityContexts;
  if (s == "output_answer") return ToolName::OutputAnswer;
  return std::nullopt;
}

namespace {

ToolValidation invalid(std::string reason) { return {false, std::move(reason)}; }

bool parse_time_arg(const nlohmann::json& args, const char* key,
                    std::string* error) {
  if (!args.contains(key) || args[key].is_null()) return true;
  if (!args[key].is_string()) {
    *error = std::string(key) + " must be a string";
    return false;
  }
  try {
    parse_instant(args[key].get<std::string>());
  } catch (const Error& e) {
    *error = std::string("malformed time in ") + key + ": " + e.what();
    return false;
  }
  return true;
}

bool check_keys(const nlohmann::json& args,
                const std::vector<std::string>& allowed, std::string* error) {
  for (auto it = args.begin(); it != args.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end()) {
      *error = "unknown argument: " + it.key();
      return false;
    }
  }
  return true;
}

bool nonempty_string_arg(const nlohmann::json& args, const char* key) {
  return args.contains(key) && args[key].is_string() &&
         !trim(args[key].get<std::string>()).empty();
}

}  // namespace

ToolValidation validate_tool_call(const ToolCall& call) {
  const nlohmann::json& args = call.args;
  if (!args.is_object()) return invalid("args must be an object");
  std::string error;

  switch (call.name) {
    case ToolName::SemanticRetrieve:
    case ToolName::LexicalRetrieve: {
      if (!check_keys(args,
                      {"query", "start_time", "end_time", "start_op", "end_op"},
                      &error)) {
        return invalid(error);
      }
      if (!nonempty_string_arg(args, "query")) {
        return invalid("query is required and must be a non-empty string");
      }
      break;
    }
    case ToolName::FindGistContexts: {
      if (!check_keys(args, {"gist_id", "start_time", "end_time", "start_op",
                             "end_op"},
                      &error)) {
        return invalid(error);
      }
      if (!args.contains("gist_id") || !args["gist_id"].is_number_unsigned()) {
        return invalid("gist_id is required and must be a non-negative integer");
      }
      break;
    }
    case ToolName::FindEntityContexts: {
      if (!check_keys(args,
                      {"subject", "object", "predicate", "start_time",
                       "end_time", "start_op", "end_op", "limit", "ordering",
                       "offset", "aggregation"},
                      &error)) {
        return invalid(error);
      }
      bool any_slot = nonempty_string_arg(args, "subject") ||
                      nonempty_string_arg(args, "object") ||
                      nonempty_string_arg(args, "predicate");
      if (!any_slot) return invalid("empty slots");
      if (args.contains("limit") &&
          (!args["limit"].is_number_unsigned() ||
           args["limit"].get<std::uint64_t>() == 0)) {
        return invalid("limit must be a positive integer");
      }
      if (args.contains("offset") && !args["offset"].is_number_unsigned()) {
        return invalid("offset must be a non-negative integer");
      }
      if (args.contains("ordering")) {
        if (!args["ordering"].is_string()) return invalid("ordering must be a string");
        std::string o = args["ordering"].get<std::string>();
        if (o != "none" && o != "chrono_asc" && o != "chrono_desc") {
          return invalid("ordering must be none|chrono_asc|chrono_desc");
        }
      }
      if (args.contains("aggregation")) {
        if (!args["aggregation"].is_string()) {
          return invalid("aggregation must be a string");
        }
        std::string a = args["aggregation"].get<std::string>();
        if (a != "none" && a != "count") {
          return invalid("aggregation must be none|count");
        }
      }
      break;
    }
    case ToolName::OutputAnswer: {
      if (!check_keys(args, {"answer"}, &error)) return invalid(error);
      if (!args.contains("answer") || !args["answer"].is_string()) {
        return invalid("answer is required and must be a string");
      }
      break;
    }
  }

  if (call.name != ToolName::OutputAnswer) {
    if (!parse_time_arg(args, "start_time", &error)) return invalid(error);
    if (!parse_time_arg(args, "end_time", &error)) return invalid(error);
    if (args.contains("start_op")) {
      if (!args["start_op"].is_string()) return invalid("start_op must be a string");
      std::string op = args["start_op"].get<std::string>();
      if (op != "GE" && op != "GT" && op != "EQ") {
        return invalid("start_op must be GE|GT|EQ");
      }
    }
    if (args.contains("end_op")) {
      if (!args["end_op"].is_string()) return invalid("end_op must be a string");
      std::string op = args["end_op"].get<std::string>();
      if (op != "LE" && op != "LT" && op != "EQ") {
        return invalid("end_op must be LE|LT|EQ");
      }
    }
  }
  return {true, ""};
}

TemporalConstraint constraint_from_args(const nlohmann::json& args) {
  TemporalConstraint c;
  if (args.contains("start_time") && !args["start_time"].is_null()) {
    c.start_bound = parse_instant(args["start_time"].get<std::string>());
  }
  if (args.contains("end_time") && !args["end_time"].is_null()) {
    c.end_bound = parse_instant(args["end_time"].get<std::string>());
  }
  if (args.contains("start_op")) {
    std::string op = args["start_op"].get<std::string>();
    c.start_op = op == "GT"   ? StartOp::GT
                 : op == "EQ" ? StartOp::EQ
                              : StartOp::GE;
  }
  if (args.contains("end_op")) {
    std::string op = args["end_op"].get<std::string>();
    c.end_op = op == "LT"   ? EndOp::LT
               : op == "EQ" ? EndOp::EQ
                            : EndOp::LE;
  }
  return c;
}

// ---- evidence ----------------------------------------------------------------

void EvidenceLog::merge_gist(GistId id, std::string rendered) {
  if (!gist_ids_.insert(id).second) return;
  entries_.push_back({true, id, std::move(rendered)});
}

void EvidenceLog::merge_fact(EdgeId id, std::string rendered) {
  if (!fact_ids_.insert(id).second) return;
  entries_.push_back({false, id, std::move(rendered)});
}

const EvidenceLog::Entry* EvidenceLog::first_gist() const {
  for (const Entry& e : entries_) {
    if (e.is_gist) return &e;
  }
  return nullptr;
}

const EvidenceLog::Entry* EvidenceLog::first_fact() const {
  for (const Entry& e : entries_) {
    if (!e.is_gist) return &e;
  }
  return nullptr;
}

std::string render_evidence(const EvidenceLog& evidence,
                            std::size_t char_budget) {
  std::vector<std::string> lines;
  std::size_t total = 0;
  const auto& entries = evidence.entries();
  for (auto it = entries.rbegin(); it != entries.rend(); ++it) {
    std::string line = std::string(it->is_gist ? "gist#" : "fact#") +
                       std::to_string(it->id) + ": " + it->rendered;
    if (total + line.size() + 1 > char_budget) break;
    total += line.size() + 1;
    lines.push_back(std::move(line));
  }
  std::string out;
  out.reserve(total);
  for (const std::string& line : lines) {
    out += line;
    out.push_back('\n');
  }
  return out;
}

// ---- planners ------------------------------------------------------------------

ScriptedPlanner::ScriptedPlanner(std::vector<PlannerDecision> steps)
    : steps_(std::move(steps)) {}

PlannerDecision ScriptedPlanner::decide(const std::string&, const std::string&,
                                        const std::vector<HistoryStep>&) {
  if (next_ >= steps_.size()) {
    raise(ErrorCode::PlannerUnavailable, "scripted planner has no more steps");
  }
  return steps_[next_++];
}

LlmPlanner::LlmPlanner(std::shared_ptr<ChatClient> client,
                       std::string prompt_template, std::string model,
                       int max_retries)
    : client_(std::move(client)),
      prompt_(std::move(prompt_template)),
      model_(std::move(model)),
      max_retries_(max_retries) {}

namespace {

std::optional<nlohmann::json> parse_json_object(const std::string& text) {
  try {
    nlohmann::json j = nlohmann::json::parse(text);
    if (j.is_object()) return j;
  } catch (const nlohmann::json::exception&) {
  }
  return std::nullopt;
}

std::optional<nlohmann::json> repair_json_object(const std::string& text) {
  auto open = text.find('{');
  auto close = text.rfind('}');
  if (open == std::string::npos || close == std::string::npos || close <= open) {
    return std::nullopt;
  }
  return parse_json_object(text.substr(open, close - open + 1));
}

std::string tool_catalog() {
  return "Tools:\n"
         "- semantic_retrieve(query, start_time?, end_time?, start_op?, end_op?)\n"
         "- lexical_retrieve(query, start_time?, end_time?, start_op?, end_op?)\n"
         "- find_gist_contexts(gist_id, start_time?, end_time?, start_op?, end_op?)\n"
         "- find_entity_contexts(subject?, object?, predicate?, start_time?, "
         "end_time?, start_op?, end_op?, limit?, ordering?, offset?, "
         "aggregation?)\n"
         "- output_answer(answer)\n"
         "Reply with JSON {\"thought\": str, \"tool\": str, \"args\": {...}}.";
}

}  // namespace

PlannerDecision LlmPlanner::decide(const std::string& question,
                                   const std::string& evidence_rendered,
                                   const std::vector<HistoryStep>& history) {
  nlohmann::json history_json = nlohmann::json::array();
  for (const HistoryStep& step : history) {
    history_json.push_back({{"thought", step.thought},
                            {"tool", tool_name_string(step.call.name)},
                            {"args", step.call.args},
                            {"observation", step.observation}});
  }
  std::string user = "Question: " + question + "\n\nEvidence:\n" +
                     (evidence_rendered.empty() ? "(none)\n" : evidence_rendered) +
                     "\nHistory:\n" + history_json.dump() + "\n";

  ChatRequest req;
  req.model = model_;
  req.messages = {{"system", prompt_ + "\n\n" + tool_catalog()}, {"user", user}};

  std::string last_output;
  for (int attempt = 0; attempt <= max_retries_; ++attempt) {
    try {
      last_output = client_->chat(req).text;
    } catch (const Error& e) {
      if (e.code() == ErrorCode::ProviderUnavailable) {
        raise(ErrorCode::PlannerUnavailable,
              std::string("planner model unavailable: ") + e.what());
      }
      throw;
    }
    auto obj = parse_json_object(last_output);
    if (!obj) obj = repair_json_object(last_output);
    if (!obj || !obj->contains("tool") || !(*obj)["tool"].is_string()) continue;
    auto name = tool_name_from_string((*obj)["tool"].get<std::string>());
    if (!name) continue;
    PlannerDecision decision;
    decision.thought = obj->value("thought", std::string());
    decision.call.name = *name;
    decision.call.args = obj->contains("args") && (*obj)["args"].is_object()
                             ? (*obj)["args"]
                             : nlohmann::json::object();
    return decision;
  }
  log_warn("planner returned unparseable output; raw output: " + last_output);
  raise(ErrorCode::MalformedExtraction, "planner output unparseable after retries");
}

// ---- synthesizers ---------------------------------------------------------------

std::string EchoSynthesizer::synthesize(const std::string&,
                                        const EvidenceLog& evidence,
                                        const std::string&,
                                        const std::string&) {
  if (const auto* g = evidence.first_gist()) return g->rendered;
  if (const auto* f = evidence.first_fact()) return f->rendered;
  return kRefusalText;
}

LlmSynthesizer::LlmSynthesizer(std::shared_ptr<ChatClient> client,
                               std::string default_prompt, std::string model)
    : client_(std::move(client)),
      default_prompt_(std::move(default_prompt)),
      model_(std::move(model)) {}

std::string LlmSynthesizer::synthesize(const std::string& question,
                                       const EvidenceLog& evidence,
                                       const std::string& draft_answer,
                                       const std::string& prompt_override) {
  const std::string& prompt =
      prompt_override.empty() ? default_prompt_ : prompt_override;
  std::string user = "Question: " + question + "\n\nEvidence:\n";
  std::string rendered = render_evidence(evidence, 1 << 20);
  user += rendered.empty() ? "(none)\n" : rendered;
  if (!draft_answer.empty()) user += "\nDraft answer: " + draft_answer + "\n";

  ChatRequest req;
  req.model = model_;
  req.messages = {{"system", prompt}, {"user", user}};
  try {
    return client_->chat(req).text;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ProviderUnavailable) {
      raise(ErrorCode::SynthesizerUnavailable,
            std::string("synthesis model unavailable: ") + e.what());
    }
    throw;
  }
}

// ---- dispatch --------------------------------------------------------------------

namespace {

nlohmann::json hit_list_json(const std::vector<RetrievalHit>& hits,
                             bool is_gist) {
  nlohmann::json arr = nlohmann::json::array();
  for (const RetrievalHit& h : hits) {
    nlohmann::json item;
    item["id"] = h.id;
    item[is_gist ? "text" : "rendered"] = h.rendered;
    item["scope"] = optional_scope_to_json(h.scope);
    arr.push_back(std::move(item));
  }
  return arr;
}

nlohmann::json gist_json(const MemoryGraph& graph, GistId id) {
  nlohmann::json item;
  item["id"] = id;
  item["text"] = graph.gist(id).text;
  item["scope"] = optional_scope_to_json(graph.gist(id).scope);
  return item;
}

nlohmann::json fact_json(const MemoryGraph& graph, EdgeId id) {
  nlohmann::json item;
  item["id"] = id;
  item["rendered"] = render_fact(graph, graph.relation(id));
  item["scope"] = optional_scope_to_json(graph.relation(id).scope);
  return item;
}

}  // namespace

nlohmann::json dispatch_tool(const ToolCall& call, const MemoryGraph& graph,
                             const Retriever& retriever, std::size_t top_k) {
  nlohmann::json obs;
  switch (call.name) {
    case ToolName::SemanticRetrieve:
    case ToolName::LexicalRetrieve: {
      TemporalConstraint c = constraint_from_args(call.args);
      std::string query = call.args["query"].get<std::string>();
      RetrievalResult r = call.name == ToolName::SemanticRetrieve
                              ? retriever.semantic_retrieve(query, c, top_k)
                              : retriever.lexical_retrieve(query, c, top_k);
      obs["gists"] = hit_list_json(r.gists, true);
      obs["facts"] = hit_list_json(r.facts, false);
      break;
    }
    case ToolName::FindGistContexts: {
      TemporalConstraint c = constraint_from_args(call.args);
      GistId anchor = call.args["gist_id"].get<GistId>();
      GistContexts r = find_gist_contexts(graph, anchor, c);
      nlohmann::json gists = nlohmann::json::array();
      for (GistId g : r.gists) gists.push_back(gist_json(graph, g));
      nlohmann::json facts = nlohmann::json::array();
      for (EdgeId e : r.facts) facts.push_back(fact_json(graph, e));
      obs["gists"] = std::move(gists);
      obs["facts"] = std::move(facts);
      break;
    }
    case ToolName::FindEntityContexts: {
      EntityQuery q;
      const nlohmann::json& args = call.args;
      if (args.contains("subject") && args["subject"].is_string()) {
        q.subject = args["subject"].get<std::string>();
      }
      if (args.contains("object") && args["object"].is_string()) {
        q.object = args["object"].get<std::string>();
      }
      if (args.contains("predicate") && args["predicate"].is_string()) {
        q.predicate = args["predicate"].get<std::string>();
      }
      q.constraint = constraint_from_args(args);
      if (args.contains("limit")) q.limit = args["limit"].get<std::size_t>();
      if (args.contains("offset")) q.offset = args["offset"].get<std::size_t>();
      if (args.contains("ordering")) {
        std::string o = args["ordering"].get<std::string>();
        q.ordering = o == "chrono_asc"    ? Ordering::ChronoAsc
                     : o == "chrono_desc" ? Ordering::ChronoDesc
                                          : Ordering::None;
      }
      if (args.contains("aggregation") &&
          args["aggregation"].get<std::string>() == "count") {
        q.aggregation = Aggregation::Count;
      }
      EntityQueryResult r = find_entity_contexts(graph, q);
      if (r.count) {
        obs["count"] = *r.count;
      } else {
        nlohmann::json gists = nlohmann::json::array();
        for (GistId g : r.gists) gists.push_back(gist_json(graph, g));
        nlohmann::json facts = nlohmann::json::array();
        for (EdgeId e : r.facts) facts.push_back(fact_json(graph, e));
        obs["gists"] = std::move(gists);
        obs["facts"] = std::move(facts);
      }
      break;
    }
    case ToolName::OutputAnswer:
      raise(ErrorCode::InvalidToolCall, "output_answer is not dispatchable");
  }
  return obs;
}

// ---- run modes --------------------------------------------------------------------

bool Answer::refused() const {
  if (trim(text).empty()) return true;
  return contains_fold(text, kRefusalText);
}

namespace {

void merge_observation(EvidenceLog& evidence, const nlohmann::json& obs) {
  if (obs.contains("gists")) {
    for (const auto& item : obs["gists"]) {
      evidence.merge_gist(item["id"].get<GistId>(),
                          item["text"].get<std::string>());
    }
  }
  if (obs.contains("facts")) {
    for (const auto& item : obs["facts"]) {
      evidence.merge_fact(item["id"].get<EdgeId>(),
                          item["rendered"].get<std::string>());
    }
  }
}

std::string finalize_text(std::string text) {
  if (trim(text).empty()) return kRefusalText;
  return text;
}

bool recoverable_dispatch_error(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownNode:
    case ErrorCode::EmptyQuery:
    case ErrorCode::BadWindow:
    case ErrorCode::InvalidToolCall:
    case ErrorCode::MalformedTime:
    case ErrorCode::InvalidCalendarDate:
      return true;
    default:
      return false;
  }
}

}  // namespace

Answer run_iterative(const MemoryGraph& graph, const Retriever& retriever,
                     const std::string& question, const AgentConfig& cfg,
                     Planner& planner, Synthesizer& synthesizer) {
  if (cfg.max_steps < 1) {
    raise(ErrorCode::InvalidArgument, "max_steps must be at least 1");
  }
  EvidenceLog evidence;
  Answer answer;
  std::string draft;
  for (int step = 0; step < cfg.max_steps; ++step) {
    PlannerDecision decision;
    try {
      decision = planner.decide(
          question, render_evidence(evidence, cfg.evidence_char_budget),
          answer.history);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::MalformedExtraction) {
        ToolCall unparsed;
        unparsed.name = ToolName::OutputAnswer;
        unparsed.args = nlohmann::json::object();
        answer.history.push_back(
            {"", unparsed, nlohmann::json{{"error", e.what()}}});
        continue;
      }
      throw;
    }

    ToolValidation v = validate_tool_call(decision.call);
    if (!v.ok) {
      answer.history.push_back(
          {decision.thought, decision.call, nlohmann::json{{"error", v.reason}}});
      continue;
    }

    if (decision.call.name == ToolName::OutputAnswer) {
      draft = decision.call.args["answer"].get<std::string>();
      answer.history.push_back({decision.thought, decision.call,
                                nlohmann::json{{"answer", draft}}});
      break;
    }

    nlohmann::json obs;
    try {
      obs = dispatch_tool(decision.call, graph, retriever, cfg.top_k);
    } catch (const Error& e) {
      if (!recoverable_dispatch_error(e.code())) throw;
      answer.history.push_back(
          {decision.thought, decision.call, nlohmann::json{{"error", e.what()}}});
      continue;
    }
    merge_observation(evidence, obs);
    answer.history.push_back({decision.thought, decision.call, std::move(obs)});
  }

  answer.text = finalize_text(synthesizer.synthesize(
      question, evidence, draft, cfg.final_prompt_override));
  return answer;
}

Answer run_single(const MemoryGraph& graph, const Retriever& retriever,
                  const std::string& question, const AgentConfig& cfg,
                  Synthesizer& synthesizer) {
  (void)graph;
  EvidenceLog evidence;
  Answer answer;

  ToolCall call;
  call.name = ToolName::SemanticRetrieve;
  call.args = nlohmann::json{{"query", question}};
  RetrievalResult r =
      retriever.semantic_retrieve(question, TemporalConstraint{}, cfg.top_k);
  nlohmann::json obs;
  obs["gists"] = hit_list_json(r.gists, true);
  obs["facts"] = hit_list_json(r.facts, false);
  merge_observation(evidence, obs);
  answer.history.push_back({"single-step retrieval", call, std::move(obs)});

  answer.text = finalize_text(
      synthesizer.synthesize(question, evidence, "", cfg.final_prompt_override));
  return answer;
}

}  // namespace remem
