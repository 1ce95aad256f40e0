#include "remem/clients.hpp"

#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <fstream>

#include "json.hpp"

#include "remem/errors.hpp"
#include "remem/util.hpp"

namespace remem {

namespace {

int phase_index(Phase p) { return static_cast<int>(p); }

std::string read_file_or_empty(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return {};
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

}  // namespace

// ---- usage accounting ------------------------------------------------------

void UsageMeter::record(Phase phase, std::uint64_t prompt_tokens,
                        std::uint64_t completion_tokens) {
  std::lock_guard<std::mutex> lock(mutex_);
  UsageCounters& c = by_phase_[phase_index(phase)];
  c.requests += 1;
  c.prompt_tokens += prompt_tokens;
  c.completion_tokens += completion_tokens;
}

UsageCounters UsageMeter::phase_totals(Phase phase) const {
  std::lock_guard<std::mutex> lock(mutex_);
  return by_phase_[phase_index(phase)];
}

UsageCounters UsageMeter::grand_total() const {
  std::lock_guard<std::mutex> lock(mutex_);
  UsageCounters total;
  for (const UsageCounters& c : by_phase_) {
    total.requests += c.requests;
    total.prompt_tokens += c.prompt_tokens;
    total.completion_tokens += c.completion_tokens;
  }
  return total;
}

std::uint64_t estimate_tokens(std::string_view text) {
  return (text.size() + 3) / 4;
}

void TokenBudget::charge(std::uint64_t estimated_tokens) {
  if (ceiling_ == 0) {
    used_.fetch_add(estimated_tokens);
    return;
  }
  std::uint64_t prior = used_.load();
  for (;;) {
    if (prior + estimated_tokens > ceiling_) {
      raise(ErrorCode::BudgetExceeded,
            "token budget exceeded: used " + std::to_string(prior) + " + " +
                std::to_string(estimated_tokens) + " > ceiling " +
                std::to_string(ceiling_));
    }
    if (used_.compare_exchange_weak(prior, prior + estimated_tokens)) return;
  }
}

// ---- response cache --------------------------------------------------------

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (ec) {
    raise(ErrorCode::Io,
          "cannot create cache directory " + dir_.string() + ": " + ec.message());
  }
}

std::optional<std::string> ResponseCache::get(const std::string& key) const {
  std::filesystem::path path = dir_ / (key + ".json");
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

void ResponseCache::put(const std::string& key, const std::string& value) const {
  std::filesystem::path final_path = dir_ / (key + ".json");
  if (std::filesystem::exists(final_path)) return;  // entries are immutable
  std::filesystem::path tmp_path =
      dir_ / (key + ".tmp." + std::to_string(::getpid()));
  {
    std::ofstream out(tmp_path, std::ios::binary | std::ios::trunc);
    if (!out) {
      raise(ErrorCode::Io, "cannot write cache file " + tmp_path.string());
    }
    out.write(value.data(), static_cast<std::streamsize>(value.size()));
  }
  std::error_code ec;
  std::filesystem::rename(tmp_path, final_path, ec);
  if (ec) {
    std::filesystem::remove(tmp_path, ec);
  }
}

std::string ResponseCache::key_of(std::string_view provider_tag,
                                  std::string_view canonical_request) {
  std::string blob;
  blob.reserve(provider_tag.size() + canonical_request.size() + 1);
  blob.append(provider_tag);
  blob.push_back('\x1f');
  blob.append(canonical_request);
  std::uint64_t h = fnv1a64(blob);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---- network instrumentation -------------------------------------------------

namespace {
std::atomic<std::uint64_t> g_network_requests{0};
}

std::uint64_t network_request_count() { return g_network_requests.load(); }
void count_network_request() { g_network_requests.fetch_add(1); }

// ---- canonical request encodings ----------------------------------------------

std::string canonicalize_chat_request(const ChatRequest& request) {
  nlohmann::ordered_json j;
  j["kind"] = "chat";
  j["model"] = request.model;
  j["temperature"] = request.temperature;
  j["max_output_tokens"] = request.max_output_tokens;
  nlohmann::ordered_json msgs = nlohmann::ordered_json::array();
  for (const ChatMessage& m : request.messages) {
    msgs.push_back({{"role", m.role}, {"content", m.content}});
  }
  j["messages"] = std::move(msgs);
  return j.dump();
}

std::string canonicalize_embed_request(std::string_view model,
                                       std::string_view text) {
  nlohmann::ordered_json j;
  j["kind"] = "embed";
  j["model"] = std::string(model);
  j["text"] = std::string(text);
  return j.dump();
}

// ---- mock embedding client ----------------------------------------------------

MockEmbeddingClient::MockEmbeddingClient(std::size_t dimension)
    : dimension_(dimension) {
  if (dimension_ == 0) {
    raise(ErrorCode::InvalidArgument, "embedding dimension must be positive");
  }
}

std::vector<std::vector<float>> MockEmbeddingClient::embed(
    const std::vector<std::string>& texts) {
  calls_.fetch_add(1);
  std::vector<std::vector<float>> rows;
  rows.reserve(texts.size());
  for (const std::string& text : texts) {
    std::uint64_t state = fnv1a64(text);
    std::vector<float> row(dimension_);
    // Box-Muller over splitmix64 keeps the stream identical across platforms.
    for (std::size_t i = 0; i < dimension_; i += 2) {
      std::uint64_t z1 = splitmix64(state);
      std::uint64_t z2 = splitmix64(state);
      double u1 = (static_cast<double>(z1 >> 11) + 1.0) * 0x1.0p-53;
      double u2 = static_cast<double>(z2 >> 11) * 0x1.0p-53;
      double r = std::sqrt(-2.0 * std::log(u1));
      double a = 2.0 * 3.14159265358979323846 * u2;
      row[i] = static_cast<float>(r * std::cos(a));
      if (i + 1 < dimension_) row[i + 1] = static_cast<float>(r * std::sin(a));
    }
    double norm = 0.0;
    for (float v : row) norm += static_cast<double>(v) * v;
    norm = std::sqrt(norm);
    if (norm < 1e-12) {
      row[0] = 1.0f;
    } else {
      for (float& v : row) v = static_cast<float>(v / norm);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string MockEmbeddingClient::provider_tag() const {
  return "mock-embed-" + std::to_string(dimension_);
}

// ---- stub chat client ----------------------------------------------------------

StubChatClient::StubChatClient(std::string default_reply)
    : default_reply_(std::move(default_reply)) {}

ChatResponse StubChatClient::chat(const ChatRequest& request) {
  if (request.messages.empty()) {
    raise(ErrorCode::InvalidArgument, "chat request has no messages");
  }
  std::uint64_t prompt_estimate = 0;
  for (const ChatMessage& m : request.messages) {
    prompt_estimate += estimate_tokens(m.content);
  }
  if (budget) budget->charge(prompt_estimate);

  std::string reply;
  {
    std::lock_guard<std::mutex> lock(mutex_);
    recorded_.push_back(request);
    calls_ += 1;
    if (!queued_.empty()) {
      reply = std::move(queued_.front());
      queued_.pop_front();
    } else {
      std::string last_user;
      for (auto it = request.messages.rbegin(); it != request.messages.rend();
           ++it) {
        if (it->role == "user") {
          last_user = it->content;
          break;
        }
      }
      bool matched = false;
      for (const auto& [needle, rule_reply] : rules_) {
        if (last_user.find(needle) != std::string::npos) {
          reply = rule_reply;
          matched = true;
          break;
        }
      }
      if (!matched) reply = default_reply_;
    }
  }

  ChatResponse resp;
  resp.text = reply;
  resp.prompt_tokens = prompt_estimate;
  resp.completion_tokens = estimate_tokens(reply);
  if (meter) meter->record(phase, resp.prompt_tokens, resp.completion_tokens);
  return resp;
}

std::string StubChatClient::provider_tag() const { return "stub-chat"; }

void StubChatClient::push_reply(std::string reply) {
  std::lock_guard<std::mutex> lock(mutex_);
  queued_.push_back(std::move(reply));
}

void StubChatClient::add_rule(std::string needle, std::string reply) {
  std::lock_guard<std::mutex> lock(mutex_);
  rules_.emplace_back(std::move(needle), std::move(reply));
}

void StubChatClient::set_default_reply(std::string reply) {
  std::lock_guard<std::mutex> lock(mutex_);
  default_reply_ = std::move(reply);
}

std::uint64_t StubChatClient::call_count() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return calls_;
}

std::vector<ChatRequest> StubChatClient::recorded_requests() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return recorded_;
}

// ---- flaky chat client ----------------------------------------------------------

FlakyChatClient::FlakyChatClient(std::shared_ptr<ChatClient> inner,
                                 int failures_before_ok)
    : inner_(std::move(inner)), remaining_failures_(failures_before_ok) {}

ChatResponse FlakyChatClient::chat(const ChatRequest& request) {
  if (remaining_failures_.fetch_sub(1) > 0) {
    raise(ErrorCode::ProviderUnavailable, "simulated transient failure");
  }
  return inner_->chat(request);
}

std::string FlakyChatClient::provider_tag() const {
  return inner_->provider_tag();
}

// ---- caching decorators ----------------------------------------------------------

namespace {

std::string encode_chat_response(const ChatResponse& resp) {
  nlohmann::json j;
  j["text"] = resp.text;
  j["prompt_tokens"] = resp.prompt_tokens;
  j["completion_tokens"] = resp.completion_tokens;
  return j.dump();
}

ChatResponse decode_chat_response(const std::string& blob) {
  nlohmann::json j = nlohmann::json::parse(blob);
  ChatResponse resp;
  resp.text = j.at("text").get<std::string>();
  resp.prompt_tokens = j.value("prompt_tokens", 0ULL);
  resp.completion_tokens = j.value("completion_tokens", 0ULL);
  return resp;
}

std::string encode_embedding_row(const std::vector<float>& row) {
  nlohmann::json j;
  j["embedding"] = row;
  return j.dump();
}

std::vector<float> decode_embedding_row(const std::string& blob) {
  nlohmann::json j = nlohmann::json::parse(blob);
  return j.at("embedding").get<std::vector<float>>();
}

}  // namespace

CachingChatClient::CachingChatClient(std::shared_ptr<ChatClient> inner,
                                     std::shared_ptr<ResponseCache> cache)
    : inner_(std::move(inner)), cache_(std::move(cache)) {}

ChatResponse CachingChatClient::chat(const ChatRequest& request) {
  std::string key = ResponseCache::key_of(inner_->provider_tag(),
                                          canonicalize_chat_request(request));
  if (auto hit = cache_->get(key)) return decode_chat_response(*hit);
  ChatResponse resp = inner_->chat(request);
  cache_->put(key, encode_chat_response(resp));
  return resp;
}

std::string CachingChatClient::provider_tag() const {
  return inner_->provider_tag();
}

CachingEmbeddingClient::CachingEmbeddingClient(
    std::shared_ptr<EmbeddingClient> inner,
    std::shared_ptr<ResponseCache> cache)
    : inner_(std::move(inner)), cache_(std::move(cache)) {}

std::vector<std::vector<float>> CachingEmbeddingClient::embed(
    const std::vector<std::string>& texts) {
  std::vector<std::vector<float>> rows(texts.size());
  std::vector<std::size_t> miss_indices;
  std::vector<std::string> miss_texts;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    std::string key = ResponseCache::key_of(
        inner_->provider_tag(),
        canonicalize_embed_request(inner_->provider_tag(), texts[i]));
    if (auto hit = cache_->get(key)) {
      rows[i] = decode_embedding_row(*hit);
    } else {
      miss_indices.push_back(i);
      miss_texts.push_back(texts[i]);
    }
  }
  if (!miss_texts.empty()) {
    std::vector<std::vector<float>> fresh = inner_->embed(miss_texts);
    if (fresh.size() != miss_texts.size()) {
      raise(ErrorCode::ProviderUnavailable,
            "embedding provider returned wrong row count");
    }
    for (std::size_t k = 0; k < miss_indices.size(); ++k) {
      std::string key = ResponseCache::key_of(
          inner_->provider_tag(),
          canonicalize_embed_request(inner_->provider_tag(), miss_texts[k]));
      cache_->put(key, encode_embedding_row(fresh[k]));
      rows[miss_indices[k]] = std::move(fresh[k]);
    }
  }
  return rows;
}

std::size_t CachingEmbeddingClient::dimension() const {
  return inner_->dimension();
}

std::string CachingEmbeddingClient::provider_tag() const {
  return inner_->provider_tag();
}

// ---- environment wiring -----------------------------------------------------------

namespace {
std::string env_or_empty(const char* name) {
  const char* v = std::getenv(name);
  return v ? std::string(v) : std::string();
}
}  // namespace

ClientEnv ClientEnv::from_environment() {
  ClientEnv env;
  env.chat_base_url = env_or_empty("REMEM_CHAT_BASE_URL");
  env.chat_api_key = env_or_empty("REMEM_CHAT_API_KEY");
  env.embed_base_url = env_or_empty("REMEM_EMBED_BASE_URL");
  env.embed_api_key = env_or_empty("REMEM_EMBED_API_KEY");
  env.cache_dir = env_or_empty("REMEM_CACHE_DIR");
  return env;
}

}  // namespace remem
