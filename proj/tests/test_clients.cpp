#include <cmath>
#include <cstdlib>
#include <memory>
#include <string>
#include <vector>

#include "doctest.h"
#include "remem/clients.hpp"
#include "remem/errors.hpp"
#include "support/builders.hpp"

using namespace remem;
using testgen::capture_error;

namespace {

ChatRequest simple_request(const std::string& user_text,
                           const std::string& system_text = "sys") {
  ChatRequest req;
  req.model = "m";
  req.messages = {{"system", system_text}, {"user", user_text}};
  return req;
}

double row_norm(const std::vector<float>& row) {
  double sum = 0.0;
  for (float v : row) sum += static_cast<double>(v) * v;
  return std::sqrt(sum);
}

}  // namespace

TEST_SUITE("clients") {

TEST_CASE("usage meter keeps phases separate") {
  UsageMeter meter;
  meter.record(Phase::Indexing, 100, 10);
  meter.record(Phase::Indexing, 50, 5);
  meter.record(Phase::Inference, 7, 3);

  UsageCounters idx = meter.phase_totals(Phase::Indexing);
  CHECK(idx.requests == 2);
  CHECK(idx.prompt_tokens == 150);
  CHECK(idx.completion_tokens == 15);

  UsageCounters inf = meter.phase_totals(Phase::Inference);
  CHECK(inf.requests == 1);
  CHECK(meter.phase_totals(Phase::Evaluation).requests == 0);

  UsageCounters total = meter.grand_total();
  CHECK(total.requests == 3);
  CHECK(total.prompt_tokens == 157);
  CHECK(total.completion_tokens == 18);
}

TEST_CASE("estimate_tokens rounds chars/4 up") {
  CHECK(estimate_tokens("") == 0);
  CHECK(estimate_tokens("abc") == 1);
  CHECK(estimate_tokens("abcd") == 1);
  CHECK(estimate_tokens("abcde") == 2);
  CHECK(estimate_tokens(std::string(400, 'x')) == 100);
}

TEST_CASE("token budget enforces its ceiling atomically") {
  TokenBudget unlimited(0);
  unlimited.charge(1000000);
  CHECK(unlimited.used() == 1000000);

  TokenBudget budget(10);
  CHECK(budget.ceiling() == 10);
  budget.charge(6);
  CHECK(budget.used() == 6);

  auto err = capture_error([&] { budget.charge(5); });
  REQUIRE(err.has_value());
  CHECK(err->code() == ErrorCode::BudgetExceeded);
  CHECK(std::string(err->what()).find(
            "token budget exceeded: used 6 + 5 > ceiling 10") !=
        std::string::npos);
  // A rejected charge does not consume budget.
  CHECK(budget.used() == 6);
  budget.charge(4);
  CHECK(budget.used() == 10);
}

TEST_CASE("mock embeddings are deterministic unit rows") {
  MockEmbeddingClient mock(16);
  CHECK(mock.dimension() == 16);
  CHECK(mock.provider_tag() == "mock-embed-16");

  auto rows1 = mock.embed({"alpha", "beta", "alpha"});
  auto rows2 = mock.embed({"alpha"});
  REQUIRE(rows1.size() == 3);
  CHECK(rows1[0] == rows1[2]);
  CHECK(rows1[0] == rows2[0]);
  CHECK(rows1[0] != rows1[1]);
  for (const auto& row : rows1) {
    REQUIRE(row.size() == 16);
    CHECK(row_norm(row) == doctest::Approx(1.0).epsilon(1e-6));
  }
  CHECK(mock.call_count() == 2);

  MockEmbeddingClient odd(7);
  CHECK(odd.embed({"x"})[0].size() == 7);
  CHECK(row_norm(odd.embed({"x"})[0]) == doctest::Approx(1.0).epsilon(1e-6));

  auto err = capture_error([&] { MockEmbeddingClient bad(0); });
  REQUIRE(err.has_value());
  CHECK(err->code() == ErrorCode::InvalidArgument);
  CHECK(std::string(err->what()).find("embedding dimension must be positive") !=
        std::string::npos);
}

TEST_CASE("stub chat resolves queued replies, rules, then default") {
  StubChatClient stub("fallback");
  CHECK(stub.provider_tag() == "stub-chat");
  CHECK(stub.chat(simple_request("hello")).text == "fallback");

  stub.push_reply("first");
  stub.push_reply("second");
  CHECK(stub.chat(simple_request("hello")).text == "first");
  CHECK(stub.chat(simple_request("hello")).text == "second");
  CHECK(stub.chat(simple_request("hello")).text == "fallback");

  // Rules match substrings of the last user message, first rule wins.
  stub.add_rule("weather", "rainy");
  stub.add_rule("weather today", "sunny");
  CHECK(stub.chat(simple_request("what is the weather today?")).text ==
        "rainy");
  CHECK(stub.chat(simple_request("unrelated")).text == "fallback");
  // The rule needle must be in the user message, not the system prompt.
  CHECK(stub.chat(simple_request("hi", "weather system prompt")).text ==
        "fallback");
  // Queued replies preempt rules.
  stub.push_reply("queued wins");
  CHECK(stub.chat(simple_request("weather")).text == "queued wins");

  stub.set_default_reply("new default");
  CHECK(stub.chat(simple_request("unrelated")).text == "new default");

  CHECK(stub.call_count() == 9);
  CHECK(stub.recorded_requests().size() == 9);
  CHECK(stub.recorded_requests()[0].messages[1].content == "hello");

  auto err = capture_error([&] { stub.chat(ChatRequest{}); });
  REQUIRE(err.has_value());
  CHECK(err->code() == ErrorCode::InvalidArgument);
  CHECK(std::string(err->what()).find("chat request has no messages") !=
        std::string::npos);
}

TEST_CASE("stub chat reports token usage and honors budget and meter") {
  StubChatClient stub("ok here");
  UsageMeter meter;
  stub.meter = &meter;
  stub.phase = Phase::Indexing;

  // "sys" -> 1 token, 8-char user text -> 2 tokens, reply "ok here" -> 2.
  ChatResponse resp = stub.chat(simple_request("12345678"));
  CHECK(resp.prompt_tokens == 3);
  CHECK(resp.completion_tokens == 2);
  UsageCounters idx = meter.phase_totals(Phase::Indexing);
  CHECK(idx.requests == 1);
  CHECK(idx.prompt_tokens == 3);
  CHECK(idx.completion_tokens == 2);
  CHECK(meter.phase_totals(Phase::Inference).requests == 0);

  StubChatClient capped("x");
  capped.budget = std::make_shared<TokenBudget>(2);
  auto err = capture_error([&] { capped.chat(simple_request("12345678")); });
  REQUIRE(err.has_value());
  CHECK(err->code() == ErrorCode::BudgetExceeded);
  // The budget rejects before the reply is produced or recorded.
  CHECK(capped.call_count() == 0);
}

TEST_CASE("flaky chat fails a fixed number of times") {
  auto inner = std::make_shared<StubChatClient>("eventually");
  FlakyChatClient flaky(inner, 2);
  CHECK(flaky.provider_tag() == "stub-chat");

  for (int i = 0; i < 2; ++i) {
    auto err = capture_error([&] { flaky.chat(simple_request("q")); });
    REQUIRE(err.has_value());
    CHECK(err->code() == ErrorCode::ProviderUnavailable);
    CHECK(std::string(err->what()).find("simulated transient failure") !=
          std::string::npos);
  }
  CHECK(flaky.chat(simple_request("q")).text == "eventually");
  CHECK(inner->call_count() == 1);
}

TEST_CASE("response cache is content-addressed and immutable") {
  testgen::TempDir dir("cache");
  ResponseCache cache(dir.path / "nested" / "cache");
  CHECK(std::filesystem::is_directory(cache.dir()));

  CHECK_FALSE(cache.get("aabb").has_value());
  cache.put("aabb", "payload one");
  CHECK(cache.get("aabb") == "payload one");
  // Entries never change once written.
  cache.put("aabb", "payload two");
  CHECK(cache.get("aabb") == "payload one");

  std::string k1 = ResponseCache::key_of("tag", "request");
  CHECK(k1.size() == 16);
  CHECK(k1.find_first_not_of("0123456789abcdef") == std::string::npos);
  CHECK(k1 == ResponseCache::key_of("tag", "request"));
  CHECK(k1 != ResponseCache::key_of("tag2", "request"));
  CHECK(k1 != ResponseCache::key_of("tag", "request2"));
  // The separator keeps (tag, request) splits from colliding.
  CHECK(ResponseCache::key_of("ab", "c") != ResponseCache::key_of("a", "bc"));
}

TEST_CASE("canonical encodings are byte-stable") {
  ChatRequest req = simple_request("hi");
  std::string canon = canonicalize_chat_request(req);
  CHECK(canon ==
        R"({"kind":"chat","model":"m","temperature":0.0,"max_output_tokens":1024,)"
        R"("messages":[{"role":"system","content":"sys"},{"role":"user","content":"hi"}]})");
  CHECK(canon == canonicalize_chat_request(req));

  ChatRequest warm = req;
  warm.temperature = 0.7;
  CHECK(canonicalize_chat_request(warm) != canon);
  ChatRequest other_model = req;
  other_model.model = "m2";
  CHECK(canonicalize_chat_request(other_model) != canon);

  CHECK(canonicalize_embed_request("m", "text") ==
        R"({"kind":"embed","model":"m","text":"text"})");
}

TEST_CASE("caching chat client serves repeats from disk") {
  testgen::TempDir dir("chat-cache");
  auto cache = std::make_shared<ResponseCache>(dir.path);
  auto inner = std::make_shared<StubChatClient>("cached answer");
  CachingChatClient client(inner, cache);
  CHECK(client.provider_tag() == "stub-chat");

  ChatResponse first = client.chat(simple_request("question"));
  CHECK(first.text == "cached answer");
  CHECK(inner->call_count() == 1);

  // Change the stub's reply: a cache hit must not reach the inner client.
  inner->set_default_reply("changed");
  ChatResponse second = client.chat(simple_request("question"));
  CHECK(second.text == "cached answer");
  CHECK(second.prompt_tokens == first.prompt_tokens);
  CHECK(second.completion_tokens == first.completion_tokens);
  CHECK(inner->call_count() == 1);

  CHECK(client.chat(simple_request("different question")).text == "changed");
  CHECK(inner->call_count() == 2);
}

TEST_CASE("caching embedding client only forwards misses") {
  testgen::TempDir dir("embed-cache");
  auto cache = std::make_shared<ResponseCache>(dir.path);
  auto inner = std::make_shared<MockEmbeddingClient>(8);
  CachingEmbeddingClient client(inner, cache);
  CHECK(client.dimension() == 8);
  CHECK(client.provider_tag() == "mock-embed-8");

  auto direct = inner->embed({"a", "b", "c"});
  std::uint64_t baseline = inner->call_count();

  auto first = client.embed({"a", "b"});
  CHECK(inner->call_count() == baseline + 1);
  CHECK(first[0] == direct[0]);
  CHECK(first[1] == direct[1]);

  // Full hit: inner does not run at all.
  auto repeat = client.embed({"a", "b"});
  CHECK(inner->call_count() == baseline + 1);
  CHECK(repeat == first);

  // Partial hit: only "c" reaches the provider, order is preserved.
  auto mixed = client.embed({"c", "a"});
  CHECK(inner->call_count() == baseline + 2);
  CHECK(mixed[0] == direct[2]);
  CHECK(mixed[1] == direct[0]);

  // A second decorator over the same directory shares the entries.
  auto counter = std::make_shared<MockEmbeddingClient>(8);
  CachingEmbeddingClient sibling(counter, cache);
  auto shared = sibling.embed({"a", "b", "c"});
  CHECK(counter->call_count() == 0);
  CHECK(shared[0] == direct[0]);
  CHECK(shared[2] == direct[2]);
}

TEST_CASE("offline suites make zero network requests") {
  CHECK(network_request_count() == 0);
}

TEST_CASE("client environment wiring") {
  auto save = [](const char* name) {
    const char* v = std::getenv(name);
    return v ? std::optional<std::string>(v) : std::nullopt;
  };
  auto restore = [](const char* name, const std::optional<std::string>& v) {
    if (v) ::setenv(name, v->c_str(), 1);
    else ::unsetenv(name);
  };
  auto chat_url = save("REMEM_CHAT_BASE_URL");
  auto chat_key = save("REMEM_CHAT_API_KEY");
  auto embed_url = save("REMEM_EMBED_BASE_URL");
  auto embed_key = save("REMEM_EMBED_API_KEY");
  auto cache_dir = save("REMEM_CACHE_DIR");

  ::unsetenv("REMEM_CHAT_BASE_URL");
  ::unsetenv("REMEM_CHAT_API_KEY");
  ::unsetenv("REMEM_EMBED_BASE_URL");
  ::unsetenv("REMEM_EMBED_API_KEY");
  ::setenv("REMEM_CACHE_DIR", "/tmp/remem-cache-test", 1);

  ClientEnv none = ClientEnv::from_environment();
  CHECK_FALSE(none.has_chat());
  CHECK_FALSE(none.has_embed());
  CHECK(none.cache_dir == "/tmp/remem-cache-test");

  ::setenv("REMEM_CHAT_BASE_URL", "https://example.invalid/v1", 1);
  ClientEnv url_only = ClientEnv::from_environment();
  // Both the URL and the key are required.
  CHECK_FALSE(url_only.has_chat());

  ::setenv("REMEM_CHAT_API_KEY", "k", 1);
  ::setenv("REMEM_EMBED_BASE_URL", "https://example.invalid/v1", 1);
  ::setenv("REMEM_EMBED_API_KEY", "k2", 1);
  ClientEnv full = ClientEnv::from_environment();
  CHECK(full.has_chat());
  CHECK(full.has_embed());
  CHECK(full.chat_base_url == "https://example.invalid/v1");

  restore("REMEM_CHAT_BASE_URL", chat_url);
  restore("REMEM_CHAT_API_KEY", chat_key);
  restore("REMEM_EMBED_BASE_URL", embed_url);
  restore("REMEM_EMBED_API_KEY", embed_key);
  restore("REMEM_CACHE_DIR", cache_dir);
}

}  // TEST_SUITE
