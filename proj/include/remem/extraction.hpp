#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "remem/clients.hpp"
#include "remem/temporal.hpp"

namespace remem {

struct SpeakerTurn {
  std::string speaker;
  std::string text;
};

// One indexable unit: a document chunk or a whole chat session.
struct Episode {
  std::string chunk_id;
  std::optional<TimeInstant> timestamp;  // reference time for the episode
  std::string text;
  std::vector<SpeakerTurn> turns;
};

// Raw text seen by extractors: text when present, else turns joined as
// "Speaker: utterance" lines.
std::string episode_text(const Episode& e);

struct GistRecord {
  std::string text;  // "[<date>] ..." when the episode timestamp is known
  std::optional<TimeScope> scope;
};

// Wikidata-style qualifier set; point_in_time excludes start/end.
struct FactQualifier {
  std::optional<TimeInstant> point_in_time;
  std::optional<TimeInstant> start_time;
  std::optional<TimeInstant> end_time;

  bool empty() const { return !point_in_time && !start_time && !end_time; }
};

struct FactRecord {
  std::string subject;
  std::string predicate;
  std::string object;
  FactQualifier qualifier;
};

std::optional<TimeScope> fact_scope(const FactRecord& fact);

void validate_gist_record(const GistRecord& record);
void validate_fact_record(const FactRecord& record);

struct ExtractorConfig {
  std::string gist_prompt;
  std::string fact_prompt;
  std::string model;
  int max_retries = 2;
  double temperature = 0.0;
};

class Extractor {
 public:
  virtual ~Extractor() = default;
  virtual std::vector<GistRecord> extract_gists(const Episode& e) = 0;
  virtual std::vector<FactRecord> extract_facts(
      const Episode& e, const std::vector<GistRecord>& gists) = 0;
  virtual std::string tag() const = 0;
};

// Deterministic sentence-splitter + date-regex + SVO heuristic. Exists so the
// whole pipeline can run hermetically; makes no linguistic fidelity claims.
class RuleBasedExtractor : public Extractor {
 public:
  std::vector<GistRecord> extract_gists(const Episode& e) override;
  std::vector<FactRecord> extract_facts(
      const Episode& e, const std::vector<GistRecord>& gists) override;
  std::string tag() const override { return "rule"; }
};

// Chat-model-backed extractor. The model must return a JSON array of
// {"text", "date"?} for gists and {"subject","predicate","object",
// "point_in_time"?,"start_time"?,"end_time"?} for facts; anything else goes
// through one repair pass, then retries, then MalformedExtraction.
class LlmExtractor : public Extractor {
 public:
  LlmExtractor(std::shared_ptr<ChatClient> client, ExtractorConfig config);

  std::vector<GistRecord> extract_gists(const Episode& e) override;
  std::vector<FactRecord> extract_facts(
      const Episode& e, const std::vector<GistRecord>& gists) override;
  std::string tag() const override { return "llm:" + config_.model; }

 private:
  std::string call_model(const std::string& prompt, const std::string& payload);

  std::shared_ptr<ChatClient> client_;
  ExtractorConfig config_;
};

// Replays fixed per-chunk records; the hermetic double for indexing tests.
class ReplayExtractor : public Extractor {
 public:
  void set_records(const std::string& chunk_id, std::vector<GistRecord> gists,
                   std::vector<FactRecord> facts);

  std::vector<GistRecord> extract_gists(const Episode& e) override;
  std::vector<FactRecord> extract_facts(
      const Episode& e, const std::vector<GistRecord>& gists) override;
  std::string tag() const override { return "replay"; }

 private:
  std::map<std::string, std::pair<std::vector<GistRecord>, std::vector<FactRecord>>>
      records_;
};

// ---- rule-extractor internals exposed for direct testing ----

// Finds the first date expression ("2020-01-02", "2020-01", "2020",
// "February 2020") in the sentence; returns the parsed instant plus the
// character span of the expression.
struct DateMatch {
  TimeInstant instant;
  std::size_t begin = 0;
  std::size_t end = 0;
};
std::optional<DateMatch> find_date_expression(const std::string& sentence);

std::vector<std::string> split_sentences(const std::string& text);

}  // namespace remem
