#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "remem/clients.hpp"
#include "remem/extraction.hpp"

namespace remem {

// Canonical answer normalization shared by every text metric: case-fold,
// strip punctuation, drop the articles a/an/the, collapse whitespace.
std::string normalize_answer(const std::string& text);
std::vector<std::string> answer_tokens(const std::string& text);

// All three return values in [0, 1]; multi-gold variants take the max.
double token_f1(const std::string& prediction, const std::string& gold);
double bleu1(const std::string& prediction, const std::string& gold);
double exact_match(const std::string& prediction, const std::string& gold);

double token_f1(const std::string& prediction,
                const std::vector<std::string>& golds);
double bleu1(const std::string& prediction,
             const std::vector<std::string>& golds);
double exact_match(const std::string& prediction,
                   const std::vector<std::string>& golds);

// A prediction refuses when it is empty after trimming or contains the
// canonical refusal phrase (case-fold substring).
bool is_refusal(const std::string& prediction);

// 0 when both inputs are 0 (the empty-denominator convention).
double harmonic_f1(double precision, double recall);

struct RefusalScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t refusal_count = 0;
  std::size_t correct_refusals = 0;
  std::size_t unanswerable_count = 0;
  // A zero denominator yields value 0 with the defined flag cleared.
  bool precision_defined = false;
  bool recall_defined = false;
};

// rows = (prediction, unanswerable).
RefusalScore refusal_score(
    const std::vector<std::pair<std::string, bool>>& rows);

struct BootstrapInterval {
  double lo = 0.0;
  double hi = 0.0;
};

// Percentile bootstrap over per-example scores: resample with replacement,
// take the (alpha/2, 1-alpha/2) percentiles of the resampled means.
BootstrapInterval percentile_bootstrap(const std::vector<double>& scores,
                                       std::size_t resamples = 1000,
                                       std::uint64_t seed = 1,
                                       double alpha = 0.05);

// ---- datasets -------------------------------------------------------------

struct QaExample {
  std::string question;
  std::vector<std::string> gold_answers;  // non-empty
  std::optional<std::string> category;
  bool unanswerable = false;  // true iff some gold is the refusal label
};

enum class DatasetFormat { ConversationQA, FactQA };

struct Dataset {
  std::vector<Episode> corpus;
  std::vector<QaExample> examples;
};

// JSONL, one object per line. ConversationQA lines are
//   {"type":"session","session_id":...,"timestamp":...,"turns":[{"speaker","text"},...]}
//   {"type":"question","question":...,"answers":[...],"category"?:...}
// FactQA lines are
//   {"type":"statement","id"?:...,"timestamp":...,"text":...}
//   {"type":"question",...} as above.
// Malformed lines raise ParseError naming the 1-based line.
Dataset load_dataset(const std::string& path, DatasetFormat format);

// ---- judge ----------------------------------------------------------------

struct JudgeConfig {
  std::string model = "judge";
  std::string prompt;  // operator-supplied grading prompt; default used if empty
  int max_retries = 1;
};

// Binary verdict parsed from the first token of the reply that names one
// ("1"/"yes"/"correct"/"true" vs "0"/"no"/"incorrect"/"false"/"wrong").
// Unparseable after retries -> nullopt (the row is flagged and skipped).
// Provider failure -> JudgeUnavailable.
std::optional<int> judge(const std::string& question,
                         const std::string& prediction, const std::string& gold,
                         ChatClient& client, const JudgeConfig& cfg = {});

// ---- report ---------------------------------------------------------------

// Metric names accepted by evaluate(): "f1", "bleu1", "em", "judge",
// "refusal".
bool is_known_metric(const std::string& name);

struct MetricSummary {
  double mean = 0.0;  // [0, 100]
  std::size_t count = 0;
  std::optional<BootstrapInterval> ci;  // [0, 100]
};

struct ExampleRow {
  std::size_t index = 0;
  std::string question;
  std::string prediction;
  std::string category;  // empty when the example carries none
  bool unanswerable = false;
  bool refused = false;
  std::map<std::string, double> scores;        // metric -> [0, 1]
  std::vector<std::string> flagged_metrics;    // skipped (e.g. judge unparseable)
};

struct EvalReport {
  std::vector<std::string> metrics;
  std::map<std::string, MetricSummary> overall;
  // metric -> category -> summary; only categorized examples contribute.
  std::map<std::string, std::map<std::string, MetricSummary>> per_category;

  // Refusal confusion; the four cells sum to the example count.
  std::size_t correct_refusals = 0;   // unanswerable, refused
  std::size_t false_refusals = 0;     // answerable, refused
  std::size_t missed_refusals = 0;    // unanswerable, answered
  std::size_t correct_answers = 0;    // answerable, answered
  std::optional<RefusalScore> refusal;

  std::vector<ExampleRow> rows;
  std::size_t judge_flagged = 0;

  nlohmann::json to_json() const;
  std::string to_table() const;  // aligned-column text
  std::string to_csv() const;    // per-example rows
};

struct EvalOptions {
  std::vector<std::string> metrics;  // default: f1, bleu1, em, refusal
  ChatClient* judge_client = nullptr;
  JudgeConfig judge;
  bool bootstrap_ci = false;
  std::uint64_t bootstrap_seed = 1;
};

EvalReport evaluate(const std::vector<QaExample>& examples,
                    const std::vector<std::string>& predictions,
                    const EvalOptions& options = {});

}  // namespace remem
