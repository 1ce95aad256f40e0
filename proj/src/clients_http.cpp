// Live OpenAI-compatible HTTP clients. Kept in one translation unit so the
// heavy httplib header is compiled once.

#include <chrono>
#include <cmath>
#include <thread>

#include <httplib.h>
#include "json.hpp"

#include "remem/clients.hpp"
#include "remem/errors.hpp"
#include "remem/util.hpp"

namespace remem {

namespace {

struct SplitUrl {
  std::string host;        // scheme://host[:port]
  std::string path_prefix; // e.g. /v1, no trailing slash
};

SplitUrl split_base_url(const std::string& base_url) {
  auto scheme_end = base_url.find("://");
  if (scheme_end == std::string::npos) {
    raise(ErrorCode::InvalidArgument,
          "base URL must include a scheme: " + base_url);
  }
  auto path_start = base_url.find('/', scheme_end + 3);
  SplitUrl out;
  if (path_start == std::string::npos) {
    out.host = base_url;
  } else {
    out.host = base_url.substr(0, path_start);
    out.path_prefix = base_url.substr(path_start);
    while (!out.path_prefix.empty() && out.path_prefix.back() == '/') {
      out.path_prefix.pop_back();
    }
  }
  return out;
}

bool transient_status(int status) {
  return status == 429 || (status >= 500 && status < 600);
}

// POSTs JSON with exponential backoff on transport errors and transient HTTP
// statuses. Throws ProviderUnavailable once retries are exhausted.
nlohmann::json post_json(const HttpClientConfig& config,
                         const std::string& endpoint,
                         const nlohmann::json& body) {
  SplitUrl url = split_base_url(config.base_url);
  std::string path = url.path_prefix + endpoint;
  std::string payload = body.dump();

  httplib::Headers headers = {
      {"Authorization", "Bearer " + config.api_key},
  };

  std::string last_failure;
  for (int attempt = 0; attempt <= config.max_retries; ++attempt) {
    if (attempt > 0) {
      int delay = config.backoff_initial_ms * (1 << (attempt - 1));
      std::this_thread::sleep_for(std::chrono::milliseconds(delay));
    }
    count_network_request();
    httplib::Client client(url.host);
    client.set_connection_timeout(30);
    client.set_read_timeout(120);
    auto res = client.Post(path, headers, payload, "application/json");
    if (!res) {
      last_failure = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 200) {
      try {
        return nlohmann::json::parse(res->body);
      } catch (const nlohmann::json::exception& e) {
        raise(ErrorCode::ProviderUnavailable,
              std::string("provider returned unparseable JSON: ") + e.what());
      }
    }
    last_failure = "HTTP " + std::to_string(res->status);
    if (!transient_status(res->status)) break;
  }
  raise(ErrorCode::ProviderUnavailable,
        "request to " + config.base_url + endpoint + " failed: " + last_failure);
}

}  // namespace

// ---- chat ----------------------------------------------------------------

HttpChatClient::HttpChatClient(HttpClientConfig config)
    : config_(std::move(config)) {
  if (config_.base_url.empty()) {
    raise(ErrorCode::ProviderUnavailable, "chat base URL not configured");
  }
}

std::string HttpChatClient::provider_tag() const {
  return "http-chat:" + config_.model;
}

ChatResponse HttpChatClient::chat(const ChatRequest& request) {
  if (request.messages.empty()) {
    raise(ErrorCode::InvalidArgument, "chat request has no messages");
  }
  std::uint64_t prompt_estimate = 0;
  for (const ChatMessage& m : request.messages) {
    prompt_estimate += estimate_tokens(m.content);
  }
  if (config_.budget) config_.budget->charge(prompt_estimate);

  std::string cache_key;
  if (config_.cache) {
    cache_key = ResponseCache::key_of(provider_tag(),
                                      canonicalize_chat_request(request));
    if (auto hit = config_.cache->get(cache_key)) {
      nlohmann::json j = nlohmann::json::parse(*hit);
      ChatResponse resp;
      resp.text = j.at("text").get<std::string>();
      resp.prompt_tokens = j.value("prompt_tokens", 0ULL);
      resp.completion_tokens = j.value("completion_tokens", 0ULL);
      return resp;
    }
  }

  nlohmann::json body;
  body["model"] = request.model.empty() ? config_.model : request.model;
  body["temperature"] = request.temperature;
  body["max_tokens"] = request.max_output_tokens;
  nlohmann::json msgs = nlohmann::json::array();
  for (const ChatMessage& m : request.messages) {
    msgs.push_back({{"role", m.role}, {"content", m.content}});
  }
  body["messages"] = std::move(msgs);

  nlohmann::json reply = post_json(config_, "/chat/completions", body);

  ChatResponse resp;
  try {
    resp.text =
        reply.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorCode::ProviderUnavailable,
          std::string("chat response missing choices[0].message.content: ") +
              e.what());
  }
  if (reply.contains("usage")) {
    resp.prompt_tokens = reply["usage"].value("prompt_tokens", 0ULL);
    resp.completion_tokens = reply["usage"].value("completion_tokens", 0ULL);
  } else {
    resp.prompt_tokens = prompt_estimate;
    resp.completion_tokens = estimate_tokens(resp.text);
  }
  if (config_.meter) {
    config_.meter->record(config_.phase, resp.prompt_tokens,
                          resp.completion_tokens);
  }
  if (config_.cache) {
    nlohmann::json j;
    j["text"] = resp.text;
    j["prompt_tokens"] = resp.prompt_tokens;
    j["completion_tokens"] = resp.completion_tokens;
    config_.cache->put(cache_key, j.dump());
  }
  return resp;
}

// ---- embeddings ------------------------------------------------------------

HttpEmbeddingClient::HttpEmbeddingClient(HttpClientConfig config)
    : config_(std::move(config)) {
  if (config_.base_url.empty()) {
    raise(ErrorCode::EmbeddingUnavailable, "embedding base URL not configured");
  }
}

std::string HttpEmbeddingClient::provider_tag() const {
  return "http-embed:" + config_.model;
}

std::size_t HttpEmbeddingClient::dimension() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return dimension_;
}

std::vector<std::vector<float>> HttpEmbeddingClient::fetch(
    const std::vector<std::string>& texts) {
  nlohmann::json body;
  body["model"] = config_.model;
  body["input"] = texts;
  nlohmann::json reply = post_json(config_, "/embeddings", body);

  std::vector<std::vector<float>> rows;
  rows.reserve(texts.size());
  try {
    for (const auto& item : reply.at("data")) {
      rows.push_back(item.at("embedding").get<std::vector<float>>());
    }
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorCode::EmbeddingUnavailable,
          std::string("embedding response missing data[].embedding: ") +
              e.what());
  }
  if (rows.size() != texts.size()) {
    raise(ErrorCode::EmbeddingUnavailable,
          "embedding provider returned " + std::to_string(rows.size()) +
              " rows for " + std::to_string(texts.size()) + " inputs");
  }
  return rows;
}

std::vector<std::vector<float>> HttpEmbeddingClient::embed(
    const std::vector<std::string>& texts) {
  std::vector<std::vector<float>> rows(texts.size());
  std::vector<std::size_t> miss_indices;
  std::vector<std::string> miss_texts;

  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (config_.cache) {
      std::string key = ResponseCache::key_of(
          provider_tag(), canonicalize_embed_request(config_.model, texts[i]));
      if (auto hit = config_.cache->get(key)) {
        nlohmann::json j = nlohmann::json::parse(*hit);
        rows[i] = j.at("embedding").get<std::vector<float>>();
        continue;
      }
    }
    miss_indices.push_back(i);
    miss_texts.push_back(texts[i]);
  }

  for (std::size_t off = 0; off < miss_texts.size();
       off += config_.batch_limit) {
    std::size_t take = std::min(config_.batch_limit, miss_texts.size() - off);
    std::vector<std::string> batch(miss_texts.begin() + off,
                                   miss_texts.begin() + off + take);
    std::uint64_t batch_estimate = 0;
    for (const std::string& t : batch) batch_estimate += estimate_tokens(t);
    if (config_.budget) config_.budget->charge(batch_estimate);

    std::vector<std::vector<float>> fresh = fetch(batch);
    for (std::size_t k = 0; k < fresh.size(); ++k) {
      std::vector<float>& row = fresh[k];
      double norm = 0.0;
      for (float v : row) norm += static_cast<double>(v) * v;
      norm = std::sqrt(norm);
      if (norm > 1e-12) {
        for (float& v : row) v = static_cast<float>(v / norm);
      }
      std::size_t original_index = miss_indices[off + k];
      if (config_.cache) {
        nlohmann::json j;
        j["embedding"] = row;
        std::string key = ResponseCache::key_of(
            provider_tag(),
            canonicalize_embed_request(config_.model, texts[original_index]));
        config_.cache->put(key, j.dump());
      }
      rows[original_index] = std::move(row);
    }
    if (config_.meter) config_.meter->record(config_.phase, batch_estimate, 0);
  }

  std::lock_guard<std::mutex> lock(mutex_);
  for (const auto& row : rows) {
    if (dimension_ == 0) dimension_ = row.size();
    if (row.size() != dimension_) {
      raise(ErrorCode::DimensionMismatch,
            "embedding dimension changed from " + std::to_string(dimension_) +
                " to " + std::to_string(row.size()));
    }
  }
  return rows;
}

}  // namespace remem
