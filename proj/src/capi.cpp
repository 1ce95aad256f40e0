#include "remem.h"

#include <cstring>
#include <new>
#include <string>

#include "remem/engine.hpp"
#include "remem/errors.hpp"

struct remem_graph {
  remem::Engine engine;
};

namespace {

thread_local std::string g_last_error;

remem_status status_of(remem::ErrorCode code) {
  using remem::ErrorCode;
  switch (code) {
    case ErrorCode::Io:
      return REMEM_ERR_IO;
    case ErrorCode::ParseError:
      return REMEM_ERR_PARSE;
    case ErrorCode::SnapshotFormat:
      return REMEM_ERR_SNAPSHOT_FORMAT;
    case ErrorCode::ExtractorUnavailable:
    case ErrorCode::MalformedExtraction:
    case ErrorCode::EmbeddingUnavailable:
    case ErrorCode::ProviderUnavailable:
    case ErrorCode::BudgetExceeded:
    case ErrorCode::PlannerUnavailable:
    case ErrorCode::SynthesizerUnavailable:
    case ErrorCode::JudgeUnavailable:
      return REMEM_ERR_EXTERNAL_SERVICE;
    case ErrorCode::BadState:
      return REMEM_ERR_BAD_STATE;
    default:
      return REMEM_ERR_INVALID_ARGUMENT;
  }
}

char* copy_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

template <typename Fn>
remem_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return REMEM_OK;
  } catch (const remem::Error& e) {
    g_last_error = e.what();
    return status_of(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return REMEM_ERR_UNKNOWN;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return REMEM_ERR_UNKNOWN;
  }
}

remem_status require(bool ok, const char* message) {
  if (ok) return REMEM_OK;
  g_last_error = message;
  return REMEM_ERR_INVALID_ARGUMENT;
}

remem::EngineOptions parse_options(const char* options_json) {
  if (options_json == nullptr || *options_json == '\0') {
    return remem::EngineOptions{};
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(options_json);
  } catch (const nlohmann::json::exception& e) {
    remem::raise(remem::ErrorCode::InvalidArgument,
                 std::string("options_json does not parse: ") + e.what());
  }
  return remem::EngineOptions::from_json(j);
}

nlohmann::json answer_to_json(const remem::Answer& answer) {
  nlohmann::json history = nlohmann::json::array();
  for (const remem::HistoryStep& step : answer.history) {
    history.push_back({{"thought", step.thought},
                       {"tool", remem::tool_name_string(step.call.name)},
                       {"args", step.call.args},
                       {"observation", step.observation}});
  }
  return nlohmann::json{{"text", answer.text},
                        {"refused", answer.refused()},
                        {"history", std::move(history)}};
}

}  // namespace

extern "C" {

remem_status remem_index_corpus(const char* corpus_path,
                                const char* options_json,
                                remem_graph** out_graph) {
  if (remem_status s = require(corpus_path && out_graph,
                               "corpus_path and out_graph are required")) {
    return s;
  }
  *out_graph = nullptr;
  return guarded([&] {
    remem::EngineOptions opts = parse_options(options_json);
    *out_graph =
        new remem_graph{remem::Engine::index_corpus(corpus_path, opts)};
  });
}

remem_status remem_open(const char* snapshot_dir, remem_graph** out_graph) {
  if (remem_status s = require(snapshot_dir && out_graph,
                               "snapshot_dir and out_graph are required")) {
    return s;
  }
  *out_graph = nullptr;
  return guarded(
      [&] { *out_graph = new remem_graph{remem::Engine::open(snapshot_dir)}; });
}

remem_status remem_save(const remem_graph* graph, const char* dir) {
  if (remem_status s = require(graph && dir, "graph and dir are required")) {
    return s;
  }
  return guarded([&] { graph->engine.save(dir); });
}

remem_status remem_stats_json(const remem_graph* graph, char** out_json) {
  if (remem_status s =
          require(graph && out_json, "graph and out_json are required")) {
    return s;
  }
  *out_json = nullptr;
  return guarded([&] {
    remem::GraphStats st = graph->engine.stats();
    nlohmann::json j{{"gist_nodes", st.gist_nodes},
                     {"phrase_nodes", st.phrase_nodes},
                     {"relation_edges", st.relation_edges},
                     {"context_edges", st.context_edges},
                     {"synonymy_edges", st.synonymy_edges},
                     {"triples", st.triples},
                     {"mean_gist_degree", st.mean_gist_degree},
                     {"mean_phrase_degree", st.mean_phrase_degree}};
    *out_json = copy_string(j.dump(2));
  });
}

remem_status remem_query(remem_graph* graph, const char* question,
                         const char* options_json, char** out_answer_json) {
  if (remem_status s = require(graph && question && out_answer_json,
                               "graph, question, out_answer_json required")) {
    return s;
  }
  *out_answer_json = nullptr;
  return guarded([&] {
    remem::EngineOptions opts = parse_options(options_json);
    remem::Answer answer = graph->engine.ask(question, opts);
    *out_answer_json = copy_string(answer_to_json(answer).dump(2));
  });
}

remem_status remem_eval(remem_graph* graph, const char* dataset_path,
                        const char* format, const char* options_json,
                        char** out_report_json) {
  if (remem_status s =
          require(graph && dataset_path && format && out_report_json,
                  "graph, dataset_path, format, out_report_json required")) {
    return s;
  }
  *out_report_json = nullptr;
  return guarded([&] {
    remem::DatasetFormat fmt;
    std::string f = format;
    if (f == "conversationQA") {
      fmt = remem::DatasetFormat::ConversationQA;
    } else if (f == "factQA") {
      fmt = remem::DatasetFormat::FactQA;
    } else {
      remem::raise(remem::ErrorCode::InvalidArgument,
                   "format must be conversationQA|factQA");
    }
    remem::EngineOptions opts = parse_options(options_json);
    remem::Dataset dataset = remem::load_dataset(dataset_path, fmt);
    remem::Engine::EvalRun run = graph->engine.run_eval(dataset, opts);
    nlohmann::json j{{"report", run.report.to_json()},
                     {"table", run.report.to_table()},
                     {"csv", run.report.to_csv()},
                     {"predictions", run.predictions}};
    *out_report_json = copy_string(j.dump(2));
  });
}

void remem_graph_free(remem_graph* graph) { delete graph; }

void remem_string_free(char* s) { delete[] s; }

const char* remem_last_error(void) { return g_last_error.c_str(); }

const char* remem_version(void) { return "0.1.0"; }

}  // extern "C"
