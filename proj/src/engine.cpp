#include "remem/engine.hpp"

#include <algorithm>
#include <fstream>

#include "remem/errors.hpp"
#include "remem/snapshot.hpp"
#include "remem/util.hpp"

namespace remem {

namespace {

const char* kPlannerSystemPrompt =
    "You answer questions over an episodic memory graph by calling one tool "
    "per step. Inspect the evidence and history, then pick the next call; "
    "call output_answer when the evidence suffices.";

const char* kSynthesizerSystemPrompt =
    "Answer the question strictly from the evidence lines. If the evidence "
    "does not contain the answer, reply exactly: no information available.";

void reject_unknown_keys(const nlohmann::json& j,
                         const std::vector<std::string>& allowed) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const std::string& key : allowed) {
      if (it.key() == key) {
        known = true;
        break;
      }
    }
    if (!known) {
      raise(ErrorCode::InvalidArgument, "unknown option: " + it.key());
    }
  }
}

template <typename T>
void read_option(const nlohmann::json& j, const char* key, T* out) {
  if (!j.contains(key)) return;
  try {
    *out = j[key].get<T>();
  } catch (const nlohmann::json::exception&) {
    raise(ErrorCode::InvalidArgument,
          std::string("option ") + key + " has the wrong type");
  }
}

}  // namespace

EngineOptions EngineOptions::from_json(const nlohmann::json& j) {
  if (!j.is_object()) {
    raise(ErrorCode::InvalidArgument, "options must be a JSON object");
  }
  reject_unknown_keys(
      j, {"chat_model", "embed_model", "extractor", "embedder",
          "synonymy_threshold", "extraction_workers", "mock_dimension", "mode",
          "max_steps", "top_k", "planner", "script_path", "synthesizer",
          "final_prompt_override", "metrics", "judge", "jobs"});

  EngineOptions opts;
  read_option(j, "chat_model", &opts.chat_model);
  read_option(j, "embed_model", &opts.embed_model);
  read_option(j, "extractor", &opts.extractor);
  read_option(j, "embedder", &opts.embedder);
  read_option(j, "synonymy_threshold", &opts.synonymy_threshold);
  read_option(j, "extraction_workers", &opts.extraction_workers);
  read_option(j, "mock_dimension", &opts.mock_dimension);
  read_option(j, "mode", &opts.mode);
  read_option(j, "max_steps", &opts.max_steps);
  read_option(j, "top_k", &opts.top_k);
  read_option(j, "planner", &opts.planner);
  read_option(j, "script_path", &opts.script_path);
  read_option(j, "synthesizer", &opts.synthesizer);
  read_option(j, "final_prompt_override", &opts.final_prompt_override);
  read_option(j, "metrics", &opts.metrics);
  read_option(j, "jobs", &opts.jobs);
  if (j.contains("judge")) {
    std::string judge;
    read_option(j, "judge", &judge);
    if (judge != "none" && judge != "llm") {
      raise(ErrorCode::InvalidArgument, "judge must be none|llm");
    }
    opts.judge_llm = judge == "llm";
  }

  if (opts.extractor != "rule" && opts.extractor != "llm") {
    raise(ErrorCode::InvalidArgument, "extractor must be rule|llm");
  }
  if (opts.embedder != "mock" && opts.embedder != "live") {
    raise(ErrorCode::InvalidArgument, "embedder must be mock|live");
  }
  if (opts.mode != "iterative" && opts.mode != "single") {
    raise(ErrorCode::InvalidArgument, "mode must be single|iterative");
  }
  if (opts.planner != "llm" && opts.planner != "script") {
    raise(ErrorCode::InvalidArgument, "planner must be llm|script");
  }
  if (opts.synthesizer != "llm" && opts.synthesizer != "echo") {
    raise(ErrorCode::InvalidArgument, "synthesizer must be llm|echo");
  }
  if (opts.jobs == 0) {
    raise(ErrorCode::InvalidArgument, "jobs must be at least 1");
  }
  return opts;
}

std::vector<PlannerDecision> load_planner_script(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorCode::Io, "cannot open planner script: " + path);
  std::vector<PlannerDecision> steps;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      raise(ErrorCode::ParseError,
            "line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("tool") || !j["tool"].is_string()) {
      raise(ErrorCode::ParseError,
            "line " + std::to_string(line_no) + ": needs a \"tool\" string");
    }
    auto name = tool_name_from_string(j["tool"].get<std::string>());
    if (!name) {
      raise(ErrorCode::ParseError, "line " + std::to_string(line_no) +
                                       ": unknown tool " +
                                       j["tool"].get<std::string>());
    }
    PlannerDecision d;
    d.thought = j.value("thought", std::string());
    d.call.name = *name;
    d.call.args = j.contains("args") && j["args"].is_object()
                      ? j["args"]
                      : nlohmann::json::object();
    steps.push_back(std::move(d));
  }
  return steps;
}

std::shared_ptr<EmbeddingClient> make_embedding_client(
    const EngineOptions& opts, const ClientEnv& env, Phase phase) {
  if (opts.embedder == "mock") {
    return std::make_shared<MockEmbeddingClient>(opts.mock_dimension);
  }
  if (!env.has_embed()) {
    raise(ErrorCode::EmbeddingUnavailable,
          "live embedder requires embedding credentials");
  }
  HttpClientConfig cfg;
  cfg.base_url = env.embed_base_url;
  cfg.api_key = env.embed_api_key;
  cfg.model = opts.embed_model;
  cfg.phase = phase;
  if (!env.cache_dir.empty()) {
    cfg.cache = std::make_shared<ResponseCache>(env.cache_dir);
  }
  return std::make_shared<HttpEmbeddingClient>(std::move(cfg));
}

std::shared_ptr<ChatClient> make_chat_client(const EngineOptions& opts,
                                             const ClientEnv& env, Phase phase,
                                             const std::string& role) {
  if (!env.has_chat()) {
    ErrorCode code = ErrorCode::ProviderUnavailable;
    if (role == "extractor") code = ErrorCode::ExtractorUnavailable;
    else if (role == "planner") code = ErrorCode::PlannerUnavailable;
    else if (role == "synthesizer") code = ErrorCode::SynthesizerUnavailable;
    else if (role == "judge") code = ErrorCode::JudgeUnavailable;
    raise(code, role + " requires chat credentials");
  }
  HttpClientConfig cfg;
  cfg.base_url = env.chat_base_url;
  cfg.api_key = env.chat_api_key;
  cfg.model = opts.chat_model;
  cfg.phase = phase;
  if (!env.cache_dir.empty()) {
    cfg.cache = std::make_shared<ResponseCache>(env.cache_dir);
  }
  return std::make_shared<HttpChatClient>(std::move(cfg));
}

// ---- engine -------------------------------------------------------------------

Engine::Engine(MemoryGraph graph) : graph_(std::move(graph)) {}

Engine::Engine(Engine&& other) noexcept : graph_(std::move(other.graph_)) {
  // The retriever holds a reference into the moved-from graph; rebuild lazily.
}

Engine& Engine::operator=(Engine&& other) noexcept {
  if (this != &other) {
    graph_ = std::move(other.graph_);
    embedder_key_.clear();
    embedder_.reset();
    retriever_.reset();
  }
  return *this;
}

Engine Engine::index_corpus(const std::string& corpus_path,
                            const EngineOptions& opts) {
  return index_episodes(load_corpus(corpus_path), opts);
}

Engine Engine::index_episodes(std::vector<Episode> episodes,
                              const EngineOptions& opts) {
  ClientEnv env = ClientEnv::from_environment();
  std::unique_ptr<Extractor> extractor;
  std::shared_ptr<ChatClient> chat;
  if (opts.extractor == "llm") {
    chat = make_chat_client(opts, env, Phase::Indexing, "extractor");
    ExtractorConfig cfg;
    cfg.model = opts.chat_model;
    extractor = std::make_unique<LlmExtractor>(chat, std::move(cfg));
  } else {
    extractor = std::make_unique<RuleBasedExtractor>();
  }
  std::shared_ptr<EmbeddingClient> embedder =
      make_embedding_client(opts, env, Phase::Indexing);

  IndexConfig cfg;
  cfg.synonymy_threshold = opts.synonymy_threshold;
  cfg.extraction_workers = opts.extraction_workers;
  Engine engine(build_graph(std::move(episodes), *extractor, *embedder, cfg));
  engine.embedder_key_ = opts.embedder + "/" + opts.embed_model;
  engine.embedder_ = std::move(embedder);
  return engine;
}

Engine Engine::open(const std::string& snapshot_dir) {
  return Engine(load_snapshot(snapshot_dir));
}

void Engine::save(const std::string& dir) const { save_snapshot(graph_, dir); }

Retriever& Engine::retriever_for(const EngineOptions& opts) {
  std::string key = opts.embedder + "/" + opts.embed_model;
  if (!retriever_ || key != embedder_key_) {
    ClientEnv env = ClientEnv::from_environment();
    if (!embedder_ || key != embedder_key_) {
      embedder_ = make_embedding_client(opts, env, Phase::Inference);
      embedder_key_ = key;
    }
    retriever_ = std::make_unique<Retriever>(graph_, embedder_);
  }
  return *retriever_;
}

Answer Engine::ask_with(const std::string& question, const EngineOptions& opts,
                        const Retriever& retriever) {
  AgentConfig cfg;
  cfg.mode = opts.mode == "single" ? AgentMode::Single : AgentMode::Iterative;
  cfg.max_steps = opts.max_steps;
  cfg.top_k = opts.top_k;
  cfg.final_prompt_override = opts.final_prompt_override;

  ClientEnv env = ClientEnv::from_environment();
  std::unique_ptr<Synthesizer> synthesizer;
  if (opts.synthesizer == "echo") {
    synthesizer = std::make_unique<EchoSynthesizer>();
  } else {
    synthesizer = std::make_unique<LlmSynthesizer>(
        make_chat_client(opts, env, Phase::Inference, "synthesizer"),
        kSynthesizerSystemPrompt, opts.chat_model);
  }

  if (cfg.mode == AgentMode::Single) {
    return run_single(graph_, retriever, question, cfg, *synthesizer);
  }

  std::unique_ptr<Planner> planner;
  if (opts.planner == "script") {
    if (opts.script_path.empty()) {
      raise(ErrorCode::InvalidArgument,
            "script planner requires a script path");
    }
    planner =
        std::make_unique<ScriptedPlanner>(load_planner_script(opts.script_path));
  } else {
    planner = std::make_unique<LlmPlanner>(
        make_chat_client(opts, env, Phase::Inference, "planner"),
        kPlannerSystemPrompt, opts.chat_model);
  }
  return run_iterative(graph_, retriever, question, cfg, *planner, *synthesizer);
}

Answer Engine::ask(const std::string& question, const EngineOptions& opts) {
  return ask_with(question, opts, retriever_for(opts));
}

Engine::EvalRun Engine::run_eval(const Dataset& dataset,
                                 const EngineOptions& opts) {
  ClientEnv env = ClientEnv::from_environment();

  EvalOptions eval_opts;
  eval_opts.metrics = opts.metrics.empty()
                          ? std::vector<std::string>{"f1", "bleu1", "em",
                                                     "refusal"}
                          : opts.metrics;
  std::shared_ptr<ChatClient> judge_client;
  if (opts.judge_llm) {
    if (!env.has_chat()) {
      raise(ErrorCode::JudgeUnavailable, "judge requires chat credentials");
    }
    judge_client = make_chat_client(opts, env, Phase::Evaluation, "judge");
    eval_opts.judge_client = judge_client.get();
    eval_opts.judge.model = opts.chat_model;
    if (std::find(eval_opts.metrics.begin(), eval_opts.metrics.end(),
                  "judge") == eval_opts.metrics.end()) {
      eval_opts.metrics.push_back("judge");
    }
  }

  const Retriever& retriever = retriever_for(opts);
  std::vector<std::string> predictions(dataset.examples.size());
  parallel_for(dataset.examples.size(), [&](std::size_t i) {
    predictions[i] =
        ask_with(dataset.examples[i].question, opts, retriever).text;
  }, opts.jobs);

  EvalRun run;
  run.report = evaluate(dataset.examples, predictions, eval_opts);
  run.predictions = std::move(predictions);
  return run;
}

}  // namespace remem
