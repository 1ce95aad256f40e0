#include "remem/extraction.hpp"

#include <array>
#include <unordered_set>

#include "json.hpp"

#include "remem/errors.hpp"
#include "remem/util.hpp"

namespace remem {

namespace {

const std::unordered_set<std::string>& preposition_set() {
  static const std::unordered_set<std::string> s = {
      "on", "in", "at", "during", "by", "since", "from",
      "until", "of", "to", "for"};
  return s;
}

const std::unordered_set<std::string>& auxiliary_set() {
  static const std::unordered_set<std::string> s = {
      "was", "were", "is", "are", "been", "has", "have", "had"};
  return s;
}

const std::unordered_set<std::string>& verb_set() {
  static const std::unordered_set<std::string> s = {
      "met",     "joined",  "left",    "visited", "won",      "signed",
      "moved",   "became",  "played",  "worked",  "lived",    "started",
      "ended",   "founded", "created", "wrote",   "said",     "told",
      "saw",     "made",    "went",    "debuted", "scored",   "retired",
      "married", "began",   "spent",   "held",    "traveled", "launched"};
  return s;
}

const std::unordered_set<std::string>& participle_set() {
  static const std::unordered_set<std::string> s = {
      "born",    "enrolled",    "signed", "held",  "won",   "made",
      "given",   "taken",       "seen",   "known", "called", "named",
      "moved",   "promoted",    "transferred"};
  return s;
}

const std::array<std::string, 12>& month_names() {
  static const std::array<std::string, 12> names = {
      "january", "february", "march",     "april",   "may",      "june",
      "july",    "august",   "september", "october", "november", "december"};
  return names;
}

bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_alnum(char c) {
  return is_digit(c) || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}

bool plausible_year(int y) { return y >= 1000 && y <= 2999; }

std::optional<TimeInstant> try_parse(const std::string& text) {
  try {
    return parse_instant(text);
  } catch (const Error&) {
    return std::nullopt;
  }
}

// Tries the ISO prefix forms at position i, longest first; the match must end
// at a non-alphanumeric, non-dash boundary.
std::optional<DateMatch> iso_match_at(const std::string& s, std::size_t i) {
  if (i > 0 && (is_alnum(s[i - 1]) || s[i - 1] == '-')) return std::nullopt;
  static const std::size_t lengths[3] = {10, 7, 4};
  for (std::size_t len : lengths) {
    if (i + len > s.size()) continue;
    std::string candidate = s.substr(i, len);
    if (i + len < s.size() && (is_alnum(s[i + len]) || s[i + len] == '-')) {
      continue;
    }
    bool shape_ok = true;
    for (std::size_t k = 0; k < len; ++k) {
      bool dash_slot = (k == 4 || k == 7);
      if (dash_slot ? candidate[k] != '-' : !is_digit(candidate[k])) {
        shape_ok = false;
        break;
      }
    }
    if (!shape_ok) continue;
    auto instant = try_parse(candidate);
    if (!instant || !plausible_year(instant->year)) continue;
    return DateMatch{*instant, i, i + len};
  }
  return std::nullopt;
}

// "February 2002" (case-insensitive month name, 4-digit year).
std::optional<DateMatch> month_name_match_at(const std::string& s,
                                             std::size_t i) {
  if (i > 0 && is_alnum(s[i - 1])) return std::nullopt;
  for (std::size_t m = 0; m < month_names().size(); ++m) {
    const std::string& name = month_names()[m];
    if (i + name.size() + 5 > s.size()) continue;
    if (ascii_lower(s.substr(i, name.size())) != name) continue;
    std::size_t y = i + name.size();
    if (s[y] != ' ') continue;
    ++y;
    if (y + 4 > s.size()) continue;
    if (!is_digit(s[y]) || !is_digit(s[y + 1]) || !is_digit(s[y + 2]) ||
        !is_digit(s[y + 3])) {
      continue;
    }
    if (y + 4 < s.size() && is_alnum(s[y + 4])) continue;
    int year = std::stoi(s.substr(y, 4));
    if (!plausible_year(year)) continue;
    TimeInstant t;
    t.year = year;
    t.month = static_cast<int>(m + 1);
    return DateMatch{t, i, y + 4};
  }
  return std::nullopt;
}

// Removes [begin, end) plus a directly preceding preposition, then tidies
// leftover spacing and punctuation.
std::string remove_span(const std::string& sentence, std::size_t begin,
                        std::size_t end) {
  std::size_t cut_begin = begin;
  std::size_t ws = begin;
  while (ws > 0 && sentence[ws - 1] == ' ') --ws;
  std::size_t word_end = ws;
  std::size_t word_begin = word_end;
  while (word_begin > 0 && is_alnum(sentence[word_begin - 1])) --word_begin;
  if (word_end > word_begin) {
    std::string word = ascii_lower(sentence.substr(word_begin, word_end - word_begin));
    if (preposition_set().count(word)) cut_begin = word_begin;
  }
  std::string out = sentence.substr(0, cut_begin) + sentence.substr(end);
  // Tidy artifacts the cut leaves behind: " ,", " .", doubled spaces,
  // leading separators.
  std::string tidy;
  tidy.reserve(out.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    char c = out[i];
    if ((c == ',' || c == '.' || c == ';' || c == ':') && !tidy.empty() &&
        tidy.back() == ' ') {
      tidy.pop_back();
    }
    if (c == ' ' && !tidy.empty() && tidy.back() == ' ') continue;
    tidy.push_back(c);
  }
  std::size_t first = 0;
  while (first < tidy.size() &&
         (tidy[first] == ' ' || tidy[first] == ',' || tidy[first] == ';' ||
          tidy[first] == ':')) {
    ++first;
  }
  return trim(tidy.substr(first));
}

std::string strip_gist_prefix(const std::string& text) {
  if (!text.empty() && text.front() == '[') {
    auto close = text.find("] ");
    if (close != std::string::npos) return text.substr(close + 2);
  }
  return text;
}

std::string strip_edge_punct(const std::string& token) {
  std::size_t b = 0, e = token.size();
  while (b < e && (token[b] == ',' || token[b] == ';')) ++b;
  while (e > b && (token[e - 1] == ',' || token[e - 1] == ';')) --e;
  return token.substr(b, e - b);
}

std::string join_range(const std::vector<std::string>& tokens, std::size_t b,
                       std::size_t e) {
  std::string out;
  for (std::size_t i = b; i < e; ++i) {
    std::string t = strip_edge_punct(tokens[i]);
    if (t.empty()) continue;
    if (!out.empty()) out.push_back(' ');
    out += t;
  }
  return out;
}

bool looks_like_verb(const std::string& lower) {
  if (verb_set().count(lower)) return true;
  return lower.size() >= 4 && ends_with(lower, "ed");
}

}  // namespace

std::string episode_text(const Episode& e) {
  if (!e.text.empty()) return e.text;
  std::string out;
  for (const SpeakerTurn& turn : e.turns) {
    if (!out.empty()) out.push_back('\n');
    out += turn.speaker + ": " + turn.text;
  }
  return out;
}

std::optional<TimeScope> fact_scope(const FactRecord& fact) {
  const FactQualifier& q = fact.qualifier;
  if (q.point_in_time) return TimeScope::point_of(*q.point_in_time);
  if (q.start_time || q.end_time) {
    return TimeScope::interval_of(q.start_time, q.end_time);
  }
  return std::nullopt;
}

void validate_gist_record(const GistRecord& record) {
  if (trim(record.text).empty()) {
    raise(ErrorCode::MalformedExtraction, "gist record has empty text");
  }
  if (record.scope) validate_scope(*record.scope);
}

void validate_fact_record(const FactRecord& record) {
  if (trim(record.subject).empty() || trim(record.predicate).empty() ||
      trim(record.object).empty()) {
    raise(ErrorCode::MalformedExtraction, "fact record has an empty slot");
  }
  const FactQualifier& q = record.qualifier;
  if (q.point_in_time && (q.start_time || q.end_time)) {
    raise(ErrorCode::MalformedExtraction,
          "point_in_time excludes start_time/end_time");
  }
  if (q.point_in_time) validate_instant(*q.point_in_time);
  if (q.start_time) validate_instant(*q.start_time);
  if (q.end_time) validate_instant(*q.end_time);
  fact_scope(record);  // validates interval ordering
}

std::vector<std::string> split_sentences(const std::string& text) {
  std::vector<std::string> out;
  std::string current;
  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    current.push_back(c);
    bool terminal = (c == '.' || c == '!' || c == '?');
    bool boundary = terminal && (i + 1 == text.size() || text[i + 1] == ' ' ||
                                 text[i + 1] == '\n' || text[i + 1] == '\t');
    if (boundary) {
      std::string s = collapse_whitespace(current);
      if (!s.empty() && s != "." && s != "!" && s != "?") out.push_back(s);
      current.clear();
    }
  }
  std::string tail = collapse_whitespace(current);
  if (!tail.empty()) out.push_back(tail);
  return out;
}

std::optional<DateMatch> find_date_expression(const std::string& sentence) {
  std::optional<DateMatch> best;
  for (std::size_t i = 0; i < sentence.size(); ++i) {
    if (is_digit(sentence[i])) {
      if (auto m = iso_match_at(sentence, i)) {
        if (!best || m->begin < best->begin) best = m;
        break;  // scan is left-to-right; first digit hit is earliest ISO
      }
    }
  }
  for (std::size_t i = 0; i + 4 < sentence.size(); ++i) {
    if (auto m = month_name_match_at(sentence, i)) {
      if (!best || m->begin < best->begin) best = m;
      break;
    }
  }
  return best;
}

std::vector<GistRecord> RuleBasedExtractor::extract_gists(const Episode& e) {
  std::vector<GistRecord> out;
  std::string prefix;
  if (e.timestamp) prefix = "[" + render_instant(*e.timestamp) + "] ";

  for (const std::string& sentence : split_sentences(episode_text(e))) {
    auto date = find_date_expression(sentence);
    std::string cleaned =
        date ? remove_span(sentence, date->begin, date->end) : sentence;
    if (cleaned.empty() || cleaned == "." || cleaned == "!" || cleaned == "?") {
      continue;
    }
    char last = cleaned.back();
    if (last != '.' && last != '!' && last != '?') cleaned.push_back('.');

    GistRecord record;
    record.text = prefix + cleaned;
    if (date) {
      record.scope = TimeScope::point_of(date->instant);
    } else if (e.timestamp) {
      record.scope = TimeScope::point_of(*e.timestamp);
    }
    out.push_back(std::move(record));
  }
  return out;
}

std::vector<FactRecord> RuleBasedExtractor::extract_facts(
    const Episode& e, const std::vector<GistRecord>& gists) {
  (void)e;
  std::vector<FactRecord> out;
  for (const GistRecord& gist : gists) {
    std::string core = strip_gist_prefix(gist.text);
    while (!core.empty() &&
           (core.back() == '.' || core.back() == '!' || core.back() == '?')) {
      core.pop_back();
    }
    std::vector<std::string> tokens = split(core, " ");
    if (tokens.size() < 3) continue;

    std::size_t verb_begin = 0, verb_end = 0;
    for (std::size_t i = 1; i + 1 < tokens.size(); ++i) {
      std::string lower = ascii_lower(strip_edge_punct(tokens[i]));
      if (auxiliary_set().count(lower)) {
        verb_begin = i;
        verb_end = i + 1;
        std::string next = ascii_lower(strip_edge_punct(tokens[verb_end]));
        if (verb_end + 1 < tokens.size() &&
            (participle_set().count(next) ||
             (next.size() >= 4 && ends_with(next, "ed")))) {
          ++verb_end;
        }
        break;
      }
      if (looks_like_verb(lower)) {
        verb_begin = i;
        verb_end = i + 1;
        break;
      }
    }
    if (verb_end == 0) continue;
    if (verb_end < tokens.size()) {
      std::string next = ascii_lower(strip_edge_punct(tokens[verb_end]));
      if (verb_end + 1 < tokens.size() && preposition_set().count(next)) {
        ++verb_end;
      }
    }

    FactRecord fact;
    fact.subject = join_range(tokens, 0, verb_begin);
    fact.predicate = join_range(tokens, verb_begin, verb_end);
    fact.object = join_range(tokens, verb_end, tokens.size());
    if (fact.subject.empty() || fact.predicate.empty() || fact.object.empty()) {
      continue;
    }
    if (gist.scope && gist.scope->kind == ScopeKind::Point) {
      fact.qualifier.point_in_time = gist.scope->point;
    } else if (gist.scope && gist.scope->kind == ScopeKind::Interval) {
      fact.qualifier.start_time = gist.scope->start;
      fact.qualifier.end_time = gist.scope->end;
    }
    out.push_back(std::move(fact));
  }
  return out;
}

// ---- replay extractor ----

void ReplayExtractor::set_records(const std::string& chunk_id,
                                  std::vector<GistRecord> gists,
                                  std::vector<FactRecord> facts) {
  records_[chunk_id] = {std::move(gists), std::move(facts)};
}

std::vector<GistRecord> ReplayExtractor::extract_gists(const Episode& e) {
  auto it = records_.find(e.chunk_id);
  if (it == records_.end()) return {};
  return it->second.first;
}

std::vector<FactRecord> ReplayExtractor::extract_facts(
    const Episode& e, const std::vector<GistRecord>&) {
  auto it = records_.find(e.chunk_id);
  if (it == records_.end()) return {};
  return it->second.second;
}

// ---- LLM extractor ----

namespace {

std::optional<nlohmann::json> parse_json_array(const std::string& text) {
  try {
    nlohmann::json j = nlohmann::json::parse(text);
    if (j.is_array()) return j;
  } catch (const nlohmann::json::exception&) {
  }
  return std::nullopt;
}

// One repair pass: strip markdown fences, then take the outermost [...] span.
std::optional<nlohmann::json> repair_json_array(const std::string& text) {
  auto open = text.find('[');
  auto close = text.rfind(']');
  if (open == std::string::npos || close == std::string::npos || close <= open) {
    return std::nullopt;
  }
  return parse_json_array(text.substr(open, close - open + 1));
}

std::vector<GistRecord> gists_from_json(const nlohmann::json& arr,
                                        const Episode& e) {
  std::vector<GistRecord> out;
  for (const auto& item : arr) {
    if (!item.is_object() || !item.contains("text")) {
      raise(ErrorCode::MalformedExtraction, "gist item is not {\"text\",...}");
    }
    GistRecord record;
    record.text = item["text"].get<std::string>();
    if (item.contains("date") && !item["date"].is_null()) {
      record.scope =
          TimeScope::point_of(parse_instant(item["date"].get<std::string>()));
    } else if (e.timestamp) {
      record.scope = TimeScope::point_of(*e.timestamp);
    }
    validate_gist_record(record);
    out.push_back(std::move(record));
  }
  return out;
}

std::vector<FactRecord> facts_from_json(const nlohmann::json& arr) {
  std::vector<FactRecord> out;
  for (const auto& item : arr) {
    if (!item.is_object()) {
      raise(ErrorCode::MalformedExtraction, "fact item is not an object");
    }
    FactRecord record;
    record.subject = item.value("subject", std::string());
    record.predicate = item.value("predicate", std::string());
    record.object = item.value("object", std::string());
    auto read_time = [&](const char* key) -> std::optional<TimeInstant> {
      if (!item.contains(key) || item[key].is_null()) return std::nullopt;
      return parse_instant(item[key].get<std::string>());
    };
    record.qualifier.point_in_time = read_time("point_in_time");
    record.qualifier.start_time = read_time("start_time");
    record.qualifier.end_time = read_time("end_time");
    validate_fact_record(record);
    out.push_back(std::move(record));
  }
  return out;
}

}  // namespace

LlmExtractor::LlmExtractor(std::shared_ptr<ChatClient> client,
                           ExtractorConfig config)
    : client_(std::move(client)), config_(std::move(config)) {
  if (config_.gist_prompt.empty() || config_.fact_prompt.empty()) {
    raise(ErrorCode::InvalidArgument,
          "extractor prompts must be non-empty for the model-backed extractor");
  }
}

std::string LlmExtractor::call_model(const std::string& prompt,
                                     const std::string& payload) {
  ChatRequest req;
  req.model = config_.model;
  req.temperature = config_.temperature;
  req.messages = {{"system", prompt}, {"user", payload}};
  try {
    return client_->chat(req).text;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ProviderUnavailable) {
      raise(ErrorCode::ExtractorUnavailable,
            std::string("extraction model unavailable: ") + e.what());
    }
    throw;
  }
}

std::vector<GistRecord> LlmExtractor::extract_gists(const Episode& e) {
  std::string payload;
  if (e.timestamp) payload += "Timestamp: " + render_instant(*e.timestamp) + "\n";
  payload += "Episode:\n" + episode_text(e);

  std::string last_output;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    last_output = call_model(config_.gist_prompt, payload);
    auto arr = parse_json_array(last_output);
    if (!arr) arr = repair_json_array(last_output);
    if (!arr) continue;
    try {
      return gists_from_json(*arr, e);
    } catch (const Error&) {
      continue;  // invalid record; retry
    }
  }
  log_warn("gist extraction returned unparseable output for chunk " +
           e.chunk_id + "; raw output: " + last_output);
  raise(ErrorCode::MalformedExtraction,
        "gist extraction failed after retries for chunk " + e.chunk_id);
}

std::vector<FactRecord> LlmExtractor::extract_facts(
    const Episode& e, const std::vector<GistRecord>& gists) {
  std::string payload;
  if (e.timestamp) payload += "Timestamp: " + render_instant(*e.timestamp) + "\n";
  payload += "Episode:\n" + episode_text(e) + "\nGists:\n";
  for (const GistRecord& g : gists) payload += "- " + g.text + "\n";

  std::string last_output;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    last_output = call_model(config_.fact_prompt, payload);
    auto arr = parse_json_array(last_output);
    if (!arr) arr = repair_json_array(last_output);
    if (!arr) continue;
    try {
      return facts_from_json(*arr);
    } catch (const Error&) {
      continue;
    }
  }
  log_warn("fact extraction returned unparseable output for chunk " +
           e.chunk_id + "; raw output: " + last_output);
  raise(ErrorCode::MalformedExtraction,
        "fact extraction failed after retries for chunk " + e.chunk_id);
}

}  // namespace remem
