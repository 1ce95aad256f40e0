#include "remem/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "remem/agent.hpp"
#include "remem/errors.hpp"
#include "remem/util.hpp"

namespace remem {

std::string normalize_answer(const std::string& text) {
  std::string folded;
  folded.reserve(text.size());
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      folded.push_back(static_cast<char>(std::tolower(c)));
    } else {
      folded.push_back(' ');
    }
  }
  std::vector<std::string> tokens = split(folded, " ");
  std::string out;
  for (const std::string& tok : tokens) {
    if (tok.empty() || tok == "a" || tok == "an" || tok == "the") continue;
    if (!out.empty()) out.push_back(' ');
    out += tok;
  }
  return out;
}

std::vector<std::string> answer_tokens(const std::string& text) {
  std::string norm = normalize_answer(text);
  if (norm.empty()) return {};
  return split(norm, " ");
}

double token_f1(const std::string& prediction, const std::string& gold) {
  std::vector<std::string> pred = answer_tokens(prediction);
  std::vector<std::string> ref = answer_tokens(gold);
  if (pred.empty() || ref.empty()) {
    return pred.empty() && ref.empty() ? 1.0 : 0.0;
  }
  std::map<std::string, std::size_t> ref_counts;
  for (const std::string& t : ref) ++ref_counts[t];
  std::size_t overlap = 0;
  for (const std::string& t : pred) {
    auto it = ref_counts.find(t);
    if (it != ref_counts.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  if (overlap == 0) return 0.0;
  double precision = static_cast<double>(overlap) / pred.size();
  double recall = static_cast<double>(overlap) / ref.size();
  return 2.0 * precision * recall / (precision + recall);
}

double bleu1(const std::string& prediction, const std::string& gold) {
  std::vector<std::string> pred = answer_tokens(prediction);
  std::vector<std::string> ref = answer_tokens(gold);
  if (pred.empty()) return 0.0;
  if (ref.empty()) return 0.0;
  std::map<std::string, std::size_t> ref_counts;
  for (const std::string& t : ref) ++ref_counts[t];
  std::map<std::string, std::size_t> pred_counts;
  for (const std::string& t : pred) ++pred_counts[t];
  std::size_t clipped = 0;
  for (const auto& [tok, count] : pred_counts) {
    auto it = ref_counts.find(tok);
    if (it != ref_counts.end()) clipped += std::min(count, it->second);
  }
  if (clipped == 0) return 0.0;
  double precision = static_cast<double>(clipped) / pred.size();
  double bp = pred.size() >= ref.size()
                  ? 1.0
                  : std::exp(1.0 - static_cast<double>(ref.size()) /
                                       static_cast<double>(pred.size()));
  return precision * bp;
}

double exact_match(const std::string& prediction, const std::string& gold) {
  return normalize_answer(prediction) == normalize_answer(gold) ? 1.0 : 0.0;
}

namespace {

template <typename Fn>
double max_over_golds(const std::string& prediction,
                      const std::vector<std::string>& golds, Fn metric) {
  double best = 0.0;
  for (const std::string& gold : golds) {
    best = std::max(best, metric(prediction, gold));
  }
  return best;
}

}  // namespace

double token_f1(const std::string& prediction,
                const std::vector<std::string>& golds) {
  return max_over_golds(
      prediction, golds,
      [](const std::string& p, const std::string& g) { return token_f1(p, g); });
}

double bleu1(const std::string& prediction,
             const std::vector<std::string>& golds) {
  return max_over_golds(
      prediction, golds,
      [](const std::string& p, const std::string& g) { return bleu1(p, g); });
}

double exact_match(const std::string& prediction,
                   const std::vector<std::string>& golds) {
  return max_over_golds(prediction, golds,
                        [](const std::string& p, const std::string& g) {
                          return exact_match(p, g);
                        });
}

bool is_refusal(const std::string& prediction) {
  if (trim(prediction).empty()) return true;
  return contains_fold(prediction, kRefusalText);
}

double harmonic_f1(double precision, double recall) {
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

RefusalScore refusal_score(
    const std::vector<std::pair<std::string, bool>>& rows) {
  RefusalScore score;
  for (const auto& [prediction, unanswerable] : rows) {
    bool refused = is_refusal(prediction);
    if (refused) ++score.refusal_count;
    if (unanswerable) ++score.unanswerable_count;
    if (refused && unanswerable) ++score.correct_refusals;
  }
  score.precision_defined = score.refusal_count > 0;
  score.recall_defined = score.unanswerable_count > 0;
  if (score.precision_defined) {
    score.precision =
        static_cast<double>(score.correct_refusals) / score.refusal_count;
  }
  if (score.recall_defined) {
    score.recall =
        static_cast<double>(score.correct_refusals) / score.unanswerable_count;
  }
  score.f1 = harmonic_f1(score.precision, score.recall);
  return score;
}

BootstrapInterval percentile_bootstrap(const std::vector<double>& scores,
                                       std::size_t resamples,
                                       std::uint64_t seed, double alpha) {
  if (scores.empty()) {
    raise(ErrorCode::InvalidArgument, "bootstrap requires at least one score");
  }
  std::mt19937_64 rng(seed);
  std::vector<double> means;
  means.reserve(resamples);
  const std::size_t n = scores.size();
  for (std::size_t r = 0; r < resamples; ++r) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      sum += scores[rng() % n];  // modulo keeps resampling portable across stdlibs
    }
    means.push_back(sum / static_cast<double>(n));
  }
  std::sort(means.begin(), means.end());
  auto percentile = [&](double q) {
    double pos = q * static_cast<double>(means.size() - 1);
    std::size_t lo = static_cast<std::size_t>(pos);
    std::size_t hi = std::min(lo + 1, means.size() - 1);
    double frac = pos - static_cast<double>(lo);
    return means[lo] * (1.0 - frac) + means[hi] * frac;
  };
  return {percentile(alpha / 2.0), percentile(1.0 - alpha / 2.0)};
}

// ---- datasets ---------------------------------------------------------------

namespace {

[[noreturn]] void dataset_error(std::size_t line, const std::string& what) {
  raise(ErrorCode::ParseError, "line " + std::to_string(line) + ": " + what);
}

std::string require_string(const nlohmann::json& j, const char* key,
                           std::size_t line) {
  if (!j.contains(key) || !j[key].is_string()) {
    dataset_error(line, std::string("missing string field \"") + key + "\"");
  }
  return j[key].get<std::string>();
}

QaExample parse_question(const nlohmann::json& j, std::size_t line) {
  QaExample ex;
  ex.question = require_string(j, "question", line);
  if (!j.contains("answers") || !j["answers"].is_array() ||
      j["answers"].empty()) {
    dataset_error(line, "question needs a non-empty \"answers\" array");
  }
  for (const auto& a : j["answers"]) {
    if (!a.is_string()) dataset_error(line, "answers must be strings");
    ex.gold_answers.push_back(a.get<std::string>());
  }
  if (j.contains("category")) {
    if (!j["category"].is_string()) {
      dataset_error(line, "category must be a string");
    }
    ex.category = j["category"].get<std::string>();
  }
  for (const std::string& gold : ex.gold_answers) {
    if (ascii_lower(trim(gold)) == kRefusalText) {
      ex.unanswerable = true;
      break;
    }
  }
  return ex;
}

TimeInstant parse_timestamp_field(const nlohmann::json& j, std::size_t line) {
  std::string raw = require_string(j, "timestamp", line);
  try {
    return parse_instant(raw);
  } catch (const Error& e) {
    dataset_error(line, std::string("bad timestamp: ") + e.what());
  }
}

}  // namespace

Dataset load_dataset(const std::string& path, DatasetFormat format) {
  std::ifstream in(path);
  if (!in) raise(ErrorCode::Io, "cannot open dataset file: " + path);

  Dataset out;
  std::string raw_line;
  std::size_t line = 0;
  std::size_t statements = 0;
  while (std::getline(in, raw_line)) {
    ++line;
    if (trim(raw_line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(raw_line);
    } catch (const nlohmann::json::exception& e) {
      dataset_error(line, e.what());
    }
    if (!j.is_object()) dataset_error(line, "expected a JSON object");
    std::string type = require_string(j, "type", line);

    if (type == "question") {
      out.examples.push_back(parse_question(j, line));
      continue;
    }

    if (format == DatasetFormat::ConversationQA) {
      if (type != "session") {
        dataset_error(line, "unexpected record type \"" + type + "\"");
      }
      Episode e;
      e.chunk_id = require_string(j, "session_id", line);
      e.timestamp = parse_timestamp_field(j, line);
      if (!j.contains("turns") || !j["turns"].is_array() || j["turns"].empty()) {
        dataset_error(line, "session needs a non-empty \"turns\" array");
      }
      for (const auto& t : j["turns"]) {
        if (!t.is_object()) dataset_error(line, "turns must be objects");
        SpeakerTurn turn;
        turn.speaker = require_string(t, "speaker", line);
        turn.text = require_string(t, "text", line);
        e.turns.push_back(std::move(turn));
      }
      out.corpus.push_back(std::move(e));
    } else {
      if (type != "statement") {
        dataset_error(line, "unexpected record type \"" + type + "\"");
      }
      Episode e;
      ++statements;
      e.chunk_id = j.contains("id") && j["id"].is_string()
                       ? j["id"].get<std::string>()
                       : "fact-" + std::to_string(statements);
      e.timestamp = parse_timestamp_field(j, line);
      e.text = require_string(j, "text", line);
      out.corpus.push_back(std::move(e));
    }
  }
  return out;
}

// ---- judge --------------------------------------------------------------------

namespace {

const char* kDefaultJudgePrompt =
    "You grade question answering. Given the question, the gold answer, and "
    "a candidate answer, reply with exactly 1 if the candidate conveys the "
    "gold answer and 0 otherwise.";

std::optional<int> parse_verdict(const std::string& reply) {
  std::string folded;
  for (unsigned char c : reply) {
    folded.push_back(std::isalnum(c) ? static_cast<char>(std::tolower(c)) : ' ');
  }
  for (const std::string& tok : split(folded, " ")) {
    if (tok.empty()) continue;
    if (tok == "1" || tok == "yes" || tok == "correct" || tok == "true") {
      return 1;
    }
    if (tok == "0" || tok == "no" || tok == "incorrect" || tok == "false" ||
        tok == "wrong") {
      return 0;
    }
  }
  return std::nullopt;
}

}  // namespace

std::optional<int> judge(const std::string& question,
                         const std::string& prediction, const std::string& gold,
                         ChatClient& client, const JudgeConfig& cfg) {
  ChatRequest req;
  req.model = cfg.model;
  std::string system = cfg.prompt.empty() ? kDefaultJudgePrompt : cfg.prompt;
  std::string user = "Question: " + question + "\nGold answer: " + gold +
                     "\nCandidate answer: " + prediction + "\nVerdict:";
  req.messages = {{"system", system}, {"user", user}};

  for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
    std::string reply;
    try {
      reply = client.chat(req).text;
    } catch (const Error& e) {
      if (e.code() == ErrorCode::ProviderUnavailable) {
        raise(ErrorCode::JudgeUnavailable,
              std::string("judge model unavailable: ") + e.what());
      }
      throw;
    }
    if (auto verdict = parse_verdict(reply)) return verdict;
  }
  return std::nullopt;
}

// ---- report --------------------------------------------------------------------

bool is_known_metric(const std::string& name) {
  return name == "f1" || name == "bleu1" || name == "em" || name == "judge" ||
         name == "refusal";
}

namespace {

MetricSummary summarize(const std::vector<double>& scores, bool with_ci,
                        std::uint64_t seed) {
  MetricSummary s;
  s.count = scores.size();
  if (scores.empty()) return s;
  double sum = 0.0;
  for (double v : scores) sum += v;
  s.mean = 100.0 * sum / static_cast<double>(scores.size());
  if (with_ci) {
    BootstrapInterval ci = percentile_bootstrap(scores, 1000, seed);
    s.ci = BootstrapInterval{100.0 * ci.lo, 100.0 * ci.hi};
  }
  return s;
}

std::string format_mean(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string csv_escape(const std::string& s) {
  bool needs_quotes = s.find_first_of(",\"\n") != std::string::npos;
  if (!needs_quotes) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace

EvalReport evaluate(const std::vector<QaExample>& examples,
                    const std::vector<std::string>& predictions,
                    const EvalOptions& options) {
  if (examples.size() != predictions.size()) {
    raise(ErrorCode::InvalidArgument,
          "examples and predictions must have equal length");
  }
  EvalReport report;
  report.metrics = options.metrics.empty()
                       ? std::vector<std::string>{"f1", "bleu1", "em", "refusal"}
                       : options.metrics;
  for (const std::string& m : report.metrics) {
    if (!is_known_metric(m)) {
      raise(ErrorCode::InvalidArgument, "unknown metric: " + m);
    }
  }
  bool want_judge = std::find(report.metrics.begin(), report.metrics.end(),
                              "judge") != report.metrics.end();
  bool want_refusal = std::find(report.metrics.begin(), report.metrics.end(),
                                "refusal") != report.metrics.end();
  if (want_judge && options.judge_client == nullptr) {
    raise(ErrorCode::JudgeUnavailable, "judge requires a configured chat client");
  }

  std::map<std::string, std::vector<double>> overall_scores;
  std::map<std::string, std::map<std::string, std::vector<double>>> cat_scores;

  for (std::size_t i = 0; i < examples.size(); ++i) {
    const QaExample& ex = examples[i];
    const std::string& pred = predictions[i];
    ExampleRow row;
    row.index = i;
    row.question = ex.question;
    row.prediction = pred;
    row.category = ex.category.value_or("");
    row.unanswerable = ex.unanswerable;
    row.refused = is_refusal(pred);

    if (row.refused && ex.unanswerable) ++report.correct_refusals;
    else if (row.refused) ++report.false_refusals;
    else if (ex.unanswerable) ++report.missed_refusals;
    else ++report.correct_answers;

    for (const std::string& metric : report.metrics) {
      if (metric == "refusal") continue;
      std::optional<double> score;
      if (metric == "f1") score = token_f1(pred, ex.gold_answers);
      else if (metric == "bleu1") score = bleu1(pred, ex.gold_answers);
      else if (metric == "em") score = exact_match(pred, ex.gold_answers);
      else {
        std::string gold_joined;
        for (const std::string& g : ex.gold_answers) {
          if (!gold_joined.empty()) gold_joined += "; ";
          gold_joined += g;
        }
        std::optional<int> verdict = judge(ex.question, pred, gold_joined,
                                           *options.judge_client, options.judge);
        if (verdict) {
          score = static_cast<double>(*verdict);
        } else {
          row.flagged_metrics.push_back(metric);
          ++report.judge_flagged;
        }
      }
      if (score) {
        row.scores[metric] = *score;
        overall_scores[metric].push_back(*score);
        if (ex.category) cat_scores[metric][*ex.category].push_back(*score);
      }
    }
    report.rows.push_back(std::move(row));
  }

  for (const std::string& metric : report.metrics) {
    if (metric == "refusal") continue;
    report.overall[metric] = summarize(overall_scores[metric],
                                       options.bootstrap_ci,
                                       options.bootstrap_seed);
    for (const auto& [cat, scores] : cat_scores[metric]) {
      report.per_category[metric][cat] = summarize(scores, false, 0);
    }
  }

  if (want_refusal) {
    std::vector<std::pair<std::string, bool>> rows;
    rows.reserve(examples.size());
    for (std::size_t i = 0; i < examples.size(); ++i) {
      rows.emplace_back(predictions[i], examples[i].unanswerable);
    }
    report.refusal = refusal_score(rows);
  }
  return report;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["metrics"] = metrics;
  nlohmann::json overall_json = nlohmann::json::object();
  for (const auto& [metric, summary] : overall) {
    nlohmann::json s;
    s["mean"] = summary.mean;
    s["count"] = summary.count;
    if (summary.ci) {
      s["ci"] = nlohmann::json{{"lo", summary.ci->lo}, {"hi", summary.ci->hi}};
    }
    overall_json[metric] = std::move(s);
  }
  j["overall"] = std::move(overall_json);

  nlohmann::json cats = nlohmann::json::object();
  for (const auto& [metric, by_cat] : per_category) {
    nlohmann::json one = nlohmann::json::object();
    for (const auto& [cat, summary] : by_cat) {
      one[cat] = nlohmann::json{{"mean", summary.mean}, {"count", summary.count}};
    }
    cats[metric] = std::move(one);
  }
  j["per_category"] = std::move(cats);

  j["confusion"] = nlohmann::json{{"correct_refusals", correct_refusals},
                                  {"false_refusals", false_refusals},
                                  {"missed_refusals", missed_refusals},
                                  {"correct_answers", correct_answers}};
  if (refusal) {
    j["refusal"] = nlohmann::json{
        {"precision", refusal->precision},
        {"recall", refusal->recall},
        {"f1", refusal->f1},
        {"refusal_count", refusal->refusal_count},
        {"correct_refusals", refusal->correct_refusals},
        {"unanswerable_count", refusal->unanswerable_count},
        {"precision_defined", refusal->precision_defined},
        {"recall_defined", refusal->recall_defined}};
  }
  j["judge_flagged"] = judge_flagged;

  nlohmann::json rows_json = nlohmann::json::array();
  for (const ExampleRow& row : rows) {
    nlohmann::json r;
    r["index"] = row.index;
    r["question"] = row.question;
    r["prediction"] = row.prediction;
    if (!row.category.empty()) r["category"] = row.category;
    r["unanswerable"] = row.unanswerable;
    r["refused"] = row.refused;
    r["scores"] = row.scores;
    if (!row.flagged_metrics.empty()) r["flagged"] = row.flagged_metrics;
    rows_json.push_back(std::move(r));
  }
  j["rows"] = std::move(rows_json);
  return j;
}

std::string EvalReport::to_table() const {
  // Column layout: category rows then overall, one column per scored metric.
  std::vector<std::string> scored;
  for (const std::string& m : metrics) {
    if (m != "refusal") scored.push_back(m);
  }
  std::vector<std::string> categories;
  for (const auto& [metric, by_cat] : per_category) {
    for (const auto& [cat, summary] : by_cat) {
      if (std::find(categories.begin(), categories.end(), cat) ==
          categories.end()) {
        categories.push_back(cat);
      }
    }
  }
  std::sort(categories.begin(), categories.end());

  std::size_t label_width = std::string("overall").size();
  for (const std::string& c : categories) {
    label_width = std::max(label_width, c.size());
  }

  std::ostringstream out;
  out << std::string(label_width, ' ');
  for (const std::string& m : scored) {
    out << "  " << m;
    if (m.size() < 8) out << std::string(8 - m.size(), ' ');
  }
  out << '\n';
  auto emit_row = [&](const std::string& label,
                      const std::map<std::string, MetricSummary>* lookup,
                      const std::string& cat) {
    out << label << std::string(label_width - label.size(), ' ');
    for (const std::string& m : scored) {
      std::string cell = "-";
      if (cat.empty()) {
        auto it = lookup->find(m);
        if (it != lookup->end() && it->second.count > 0) {
          cell = format_mean(it->second.mean);
        }
      } else {
        auto mit = per_category.find(m);
        if (mit != per_category.end()) {
          auto cit = mit->second.find(cat);
          if (cit != mit->second.end()) cell = format_mean(cit->second.mean);
        }
      }
      out << "  " << cell;
      if (cell.size() < 8) out << std::string(8 - cell.size(), ' ');
    }
    out << '\n';
  };
  for (const std::string& cat : categories) emit_row(cat, nullptr, cat);
  emit_row("overall", &overall, "");

  if (refusal) {
    out << "refusal precision " << format_mean(100.0 * refusal->precision)
        << (refusal->precision_defined ? "" : " (undefined)") << ", recall "
        << format_mean(100.0 * refusal->recall)
        << (refusal->recall_defined ? "" : " (undefined)") << ", f1 "
        << format_mean(100.0 * refusal->f1) << ", refusals "
        << refusal->refusal_count << '\n';
  }
  if (judge_flagged > 0) {
    out << "judge rows flagged: " << judge_flagged << '\n';
  }
  return out.str();
}

std::string EvalReport::to_csv() const {
  std::vector<std::string> scored;
  for (const std::string& m : metrics) {
    if (m != "refusal") scored.push_back(m);
  }
  std::ostringstream out;
  out << "index,question,prediction,category,unanswerable,refused";
  for (const std::string& m : scored) out << ',' << m;
  out << '\n';
  for (const ExampleRow& row : rows) {
    out << row.index << ',' << csv_escape(row.question) << ','
        << csv_escape(row.prediction) << ',' << csv_escape(row.category) << ','
        << (row.unanswerable ? 1 : 0) << ',' << (row.refused ? 1 : 0);
    for (const std::string& m : scored) {
      auto it = row.scores.find(m);
      out << ',';
      if (it != row.scores.end()) out << it->second;
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace remem
