#pragma once

#include <atomic>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace remem {

// ---- usage accounting ------------------------------------------------------

enum class Phase { Indexing, Inference, Evaluation };

struct UsageCounters {
  std::uint64_t requests = 0;
  std::uint64_t prompt_tokens = 0;
  std::uint64_t completion_tokens = 0;
};

// Thread-safe per-phase accumulator so indexing and inference costs can be
// reported separately.
class UsageMeter {
 public:
  void record(Phase phase, std::uint64_t prompt_tokens,
              std::uint64_t completion_tokens);
  UsageCounters phase_totals(Phase phase) const;
  UsageCounters grand_total() const;

 private:
  mutable std::mutex mutex_;
  UsageCounters by_phase_[3];
};

// Rough chars/4 heuristic, rounded up; used only for budget enforcement,
// never for billing-grade numbers.
std::uint64_t estimate_tokens(std::string_view text);

// Shared ceiling across clients. ceiling 0 means unlimited. charge() throws
// BudgetExceeded when the running total would pass the ceiling.
class TokenBudget {
 public:
  explicit TokenBudget(std::uint64_t ceiling = 0) : ceiling_(ceiling) {}

  void charge(std::uint64_t estimated_tokens);
  std::uint64_t used() const { return used_.load(); }
  std::uint64_t ceiling() const { return ceiling_; }

 private:
  std::uint64_t ceiling_;
  std::atomic<std::uint64_t> used_{0};
};

// ---- chat ------------------------------------------------------------------

struct ChatMessage {
  std::string role;
  std::string content;
};

struct ChatRequest {
  std::string model;
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  int max_output_tokens = 1024;
};

struct ChatResponse {
  std::string text;
  std::uint64_t prompt_tokens = 0;
  std::uint64_t completion_tokens = 0;
};

// One contract for all four model roles (extractor, planner, synthesizer,
// judge); callers differ only in the prompts they send.
class ChatClient {
 public:
  virtual ~ChatClient() = default;
  virtual ChatResponse chat(const ChatRequest& request) = 0;
  // Stable identity used in cache keys.
  virtual std::string provider_tag() const = 0;
};

// ---- embeddings ------------------------------------------------------------

class EmbeddingClient {
 public:
  virtual ~EmbeddingClient() = default;
  // Row-per-text matrix, rows L2-normalized. Order matches the input.
  virtual std::vector<std::vector<float>> embed(
      const std::vector<std::string>& texts) = 0;
  // 0 until the dimension is known (first live call fixes it).
  virtual std::size_t dimension() const = 0;
  virtual std::string provider_tag() const = 0;
};

// ---- response cache --------------------------------------------------------

// Content-addressed file cache: one file per key, written atomically via
// rename, immutable once present.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir);

  std::optional<std::string> get(const std::string& key) const;
  void put(const std::string& key, const std::string& value) const;

  static std::string key_of(std::string_view provider_tag,
                            std::string_view canonical_request);

  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
};

// ---- network instrumentation ------------------------------------------------

// Counts every outbound HTTP request made by the live clients. The offline
// suite asserts this stays zero.
std::uint64_t network_request_count();
void count_network_request();

// ---- live HTTP clients (OpenAI-compatible shapes) ---------------------------

struct HttpClientConfig {
  std::string base_url;            // e.g. https://api.example.com/v1
  std::string api_key;
  std::string model;
  int max_retries = 3;             // retry attempts after the first try
  int backoff_initial_ms = 250;    // doubles per retry
  std::size_t batch_limit = 128;   // embeddings per provider call
  std::shared_ptr<ResponseCache> cache;       // optional
  std::shared_ptr<TokenBudget> budget;        // optional
  UsageMeter* meter = nullptr;                // optional
  Phase phase = Phase::Inference;
};

class HttpChatClient : public ChatClient {
 public:
  explicit HttpChatClient(HttpClientConfig config);
  ChatResponse chat(const ChatRequest& request) override;
  std::string provider_tag() const override;

 private:
  HttpClientConfig config_;
};

class HttpEmbeddingClient : public EmbeddingClient {
 public:
  explicit HttpEmbeddingClient(HttpClientConfig config);
  std::vector<std::vector<float>> embed(
      const std::vector<std::string>& texts) override;
  std::size_t dimension() const override;
  std::string provider_tag() const override;

 private:
  std::vector<std::vector<float>> fetch(const std::vector<std::string>& texts);

  HttpClientConfig config_;
  mutable std::mutex mutex_;
  std::size_t dimension_ = 0;
};

// ---- deterministic test doubles ---------------------------------------------

/// Hash-seeded unit vectors: identical text always embeds to the identical
// row, with no network involved.
class MockEmbeddingClient : public EmbeddingClient {
 public:
  explicit MockEmbeddingClient(std::size_t dimension = 32);
  std::vector<std::vector<float>> embed(
      const std::vector<std::string>& texts) override;
  std::size_t dimension() const override { return dimension_; }
  std::string provider_tag() const override;

  std::uint64_t call_count() const { return calls_.load(); }

 private:
  std::size_t dimension_;
  std::atomic<std::uint64_t> calls_{0};
};

/// Scriptable chat double. Resolution order per request: queued replies
// (pop front), then substring rules against the last user message, then the
// default reply. Records every request it sees.
class StubChatClient : public ChatClient {
 public:
  explicit StubChatClient(std::string default_reply = "");

  ChatResponse chat(const ChatRequest& request) override;
  std::string provider_tag() const override;

  void push_reply(std::string reply);
  void add_rule(std::string needle, std::string reply);
  void set_default_reply(std::string reply);

  std::uint64_t call_count() const;
  std::vector<ChatRequest> recorded_requests() const;

  std::shared_ptr<TokenBudget> budget;  // optional, enforced like live clients
  UsageMeter* meter = nullptr;
  Phase phase = Phase::Inference;

 private:
  mutable std::mutex mutex_;
  std::string default_reply_;
  std::deque<std::string> queued_;
  std::vector<std::pair<std::string, std::string>> rules_;
  std::vector<ChatRequest> recorded_;
  std::uint64_t calls_ = 0;
};

// Chat double that fails a fixed number of times before succeeding; exercises
// the retry path without a network.
class FlakyChatClient : public ChatClient {
 public:
  FlakyChatClient(std::shared_ptr<ChatClient> inner, int failures_before_ok);
  ChatResponse chat(const ChatRequest& request) override;
  std::string provider_tag() const override;

 private:
  std::shared_ptr<ChatClient> inner_;
  std::atomic<int> remaining_failures_;
};

// Caching decorator usable over any ChatClient (the live client already
// consults the cache internally; this lets stubs exercise the same path).
class CachingChatClient : public ChatClient {
 public:
  CachingChatClient(std::shared_ptr<ChatClient> inner,
                    std::shared_ptr<ResponseCache> cache);
  ChatResponse chat(const ChatRequest& request) override;
  std::string provider_tag() const override;

 private:
  std::shared_ptr<ChatClient> inner_;
  std::shared_ptr<ResponseCache> cache_;
};

// Per-text caching decorator over any EmbeddingClient; only cache misses
// reach the inner provider.
class CachingEmbeddingClient : public EmbeddingClient {
 public:
  CachingEmbeddingClient(std::shared_ptr<EmbeddingClient> inner,
                         std::shared_ptr<ResponseCache> cache);
  std::vector<std::vector<float>> embed(
      const std::vector<std::string>& texts) override;
  std::size_t dimension() const override;
  std::string provider_tag() const override;

 private:
  std::shared_ptr<EmbeddingClient> inner_;
  std::shared_ptr<ResponseCache> cache_;
};

// Canonical JSON encodings used for cache keys.
std::string canonicalize_chat_request(const ChatRequest& request);
std::string canonicalize_embed_request(std::string_view model,
                                       std::string_view text);

// ---- environment wiring ------------------------------------------------------

struct ClientEnv {
  std::string chat_base_url;
  std::string chat_api_key;
  std::string embed_base_url;
  std::string embed_api_key;
  std::string cache_dir;

  static ClientEnv from_environment();
  bool has_chat() const { return !chat_base_url.empty() && !chat_api_key.empty(); }
  bool has_embed() const {
    return !embed_base_url.empty() && !embed_api_key.empty();
  }
};

}  // namespace remem
