#include <deque>
#include <thread>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "httplib.h"
#include "twb/error.hpp"
#include "twb/io.hpp"
#include "twb/llm_gateway.hpp"

using namespace twb;
using namespace twb::testing;
using namespace std::chrono_literals;

namespace {

// Replays canned responses and records every request.
class FakeTransport : public Transport {
 public:
  explicit FakeTransport(std::deque<HttpResponse> responses) : responses_(std::move(responses)) {}

  HttpResponse post(const HttpRequest& request) override {
    requests.push_back(request);
    if (responses_.empty()) return {500, "", ""};
    HttpResponse r = responses_.front();
    if (responses_.size() > 1) responses_.pop_front();
    return r;
  }

  std::vector<HttpRequest> requests;

 private:
  std::deque<HttpResponse> responses_;
};

const char* kOpenAiOk = R"({"choices":[{"message":{"role":"assistant","content":"hello"}}]})";
const char* kAnthropicOk = R"({"content":[{"type":"text","text":"hel"},{"type":"text","text":"lo"}]})";
const char* kSecret = "sk-test-0123456789";

std::optional<std::string> test_env(const std::string& name) {
  if (name == "MW_LLM_API_KEY") return std::string(kSecret);
  return std::nullopt;
}

Conversation hello() { return Conversation{{{Role::System, "be brief"}, {Role::User, "say hello"}}}; }

LlmConfig openai() {
  LlmConfig c;
  c.base_url = "http://llm.invalid/v1/";
  c.max_retries = 2;
  return c;
}

struct Harness {
  std::shared_ptr<FakeTransport> transport;
  std::vector<std::chrono::milliseconds> sleeps;
  LlmClient client;

  explicit Harness(std::deque<HttpResponse> responses)
      : transport(std::make_shared<FakeTransport>(std::move(responses))),
        client(transport, [this](std::chrono::milliseconds d) { sleeps.push_back(d); }, 7) {
    client.set_getenv(test_env);
  }
};

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::IoFailure;
}

}  // namespace

TEST(LlmGateway, OpenAiRequestShape) {
  Harness h({{200, kOpenAiOk, ""}});
  EXPECT_EQ(h.client.chat(hello(), openai()), "hello");
  ASSERT_EQ(h.transport->requests.size(), 1u);
  const HttpRequest& r = h.transport->requests[0];
  EXPECT_EQ(r.url, "http://llm.invalid/v1/chat/completions");
  Json body = Json::parse(r.body);
  EXPECT_EQ(body["model"], "gpt-4");
  EXPECT_EQ(body["messages"].size(), 2u);
  EXPECT_EQ(body["messages"][0]["role"], "system");
  bool auth = false;
  for (const auto& [k, v] : r.headers) auth |= k == "Authorization" && v == std::string("Bearer ") + kSecret;
  EXPECT_TRUE(auth);
}

TEST(LlmGateway, AnthropicRequestShape) {
  Harness h({{200, kAnthropicOk, ""}});
  LlmConfig c = openai();
  c.provider = Provider::AnthropicCompatible;
  EXPECT_EQ(h.client.chat(hello(), c), "hello");
  const HttpRequest& r = h.transport->requests[0];
  EXPECT_EQ(r.url, "http://llm.invalid/v1/messages");
  Json body = Json::parse(r.body);
  EXPECT_EQ(body["system"], "be brief");
  ASSERT_EQ(body["messages"].size(), 1u);
  EXPECT_EQ(body["messages"][0]["role"], "user");
}

TEST(LlmGateway, RetriesTransientFailures) {
  Harness h({{429, "", ""}, {503, "", ""}, {200, kOpenAiOk, ""}});
  EXPECT_EQ(h.client.chat(hello(), openai()), "hello");
  EXPECT_EQ(h.client.last_attempts(), 3);
  ASSERT_EQ(h.sleeps.size(), 2u);
  EXPECT_LE(h.sleeps[0], 1000ms);
  EXPECT_LE(h.sleeps[1], 2000ms);
}

TEST(LlmGateway, GivesUpAfterMaxRetries) {
  Harness rate({{429, "", ""}});
  EXPECT_EQ(code_of([&] { rate.client.chat(hello(), openai()); }), ErrorCode::RateLimited);
  EXPECT_EQ(rate.client.last_attempts(), 3);

  Harness down({{0, "", "connection refused"}});
  LlmConfig c = openai();
  c.max_retries = 0;
  EXPECT_EQ(code_of([&] { down.client.chat(hello(), c); }), ErrorCode::Unavailable);
  EXPECT_EQ(down.client.last_attempts(), 1);
  EXPECT_TRUE(down.sleeps.empty());
}

TEST(LlmGateway, StatusMapping) {
  struct Case {
    HttpResponse response;
    ErrorCode code;
  };
  for (const auto& c : std::vector<Case>{{{401, "", ""}, ErrorCode::AuthFailure},
                                         {{403, "", ""}, ErrorCode::AuthFailure},
                                         {{400, "bad", ""}, ErrorCode::ProviderRejected},
                                         {{200, "not json", ""}, ErrorCode::MalformedResponse},
                                         {{200, R"({"choices":[]})", ""}, ErrorCode::MalformedResponse}}) {
    Harness h({c.response});
    EXPECT_EQ(code_of([&] { h.client.chat(hello(), openai()); }), c.code) << c.response.status;
    EXPECT_EQ(h.client.last_attempts(), 1);
  }
}

TEST(LlmGateway, MissingCredential) {
  Harness h({{200, kOpenAiOk, ""}});
  h.client.set_getenv([](const std::string&) { return std::nullopt; });
  EXPECT_EQ(code_of([&] { h.client.chat(hello(), openai()); }), ErrorCode::AuthFailure);
  EXPECT_TRUE(h.transport->requests.empty());
}

TEST(LlmGateway, TranscriptRedactsKey) {
  TempDir dir;
  Harness h({{400, std::string("echo of ") + kSecret, ""}, {200, kOpenAiOk, ""}});
  h.client.set_transcript(dir / "transcript.jsonl");
  EXPECT_THROW(h.client.chat(hello(), openai()), Error);
  EXPECT_EQ(h.client.chat(hello(), openai()), "hello");
  std::string log = read_file(dir / "transcript.jsonl");
  EXPECT_EQ(log.find(kSecret), std::string::npos);
  EXPECT_NE(log.find("[REDACTED]"), std::string::npos);
  std::size_t lines = std::count(log.begin(), log.end(), '\n');
  EXPECT_EQ(lines, 2u);
  Json last = Json::parse(log.substr(log.rfind('\n', log.size() - 2) + 1));
  EXPECT_EQ(last["response"], "hello");
  EXPECT_EQ(last["request"][1]["content"], "say hello");
}

TEST(LlmGateway, BackoffStaysWithinCap) {
  std::mt19937_64 rng(1);
  RetryPolicy p{100ms, 2.0};
  for (int attempt = 0; attempt < 5; ++attempt) {
    for (int i = 0; i < 200; ++i) {
      auto d = backoff_delay(p, attempt, rng);
      EXPECT_GE(d.count(), 0);
      EXPECT_LE(d.count(), 100 << attempt);
    }
  }
}

TEST(LlmGateway, MockSequenceClampsToLast) {
  TempDir dir;
  write_file(dir / "reply.txt", "from file");
  LlmConfig c;
  c.provider = Provider::Mock;
  c.mock_script = write_mock_script(dir.path(), "seq.json",
                                    Json::parse(R"({"mode":"sequence","responses":["one",{"file":"reply.txt"}]})"))
                      .string();
  LlmClient client;
  EXPECT_EQ(client.chat(hello(), c), "one");
  EXPECT_EQ(client.chat(hello(), c), "from file");
  EXPECT_EQ(client.chat(hello(), c), "from file");
}

TEST(LlmGateway, MockEchoAndPatterns) {
  TempDir dir;
  LlmConfig c;
  c.provider = Provider::Mock;
  c.mock_script = write_mock_script(dir.path(), "echo.json", Json::parse(R"({"mode":"echo"})")).string();
  LlmClient client;
  EXPECT_EQ(client.chat(hello(), c), "say hello");

  c.mock_script = write_mock_script(dir.path(), "pat.json", Json::parse(R"({"mode":"patterns",
      "rules":[{"match":"hel+o","response":"matched"}],"default":"fallback"})"))
                      .string();
  EXPECT_EQ(client.chat(hello(), c), "matched");
  EXPECT_EQ(client.chat(Conversation{{{Role::User, "other"}}}, c), "fallback");

  c.mock_script = (dir / "missing.json").string();
  EXPECT_EQ(code_of([&] { client.chat(hello(), c); }), ErrorCode::InvalidConfig);
}

TEST(LlmGateway, ConfigLayering) {
  auto env = [](const std::string& name) -> std::optional<std::string> {
    if (name == "MW_LLM_MODEL") return "env-model";
    if (name == "MW_LLM_BASE_URL") return "https://env.example/v1";
    return std::nullopt;
  };
  PartialLlmConfig session = PartialLlmConfig::from_json(Json::parse(R"({"model_name":"session-model"})"));
  PartialLlmConfig request = PartialLlmConfig::from_json(Json::parse(R"({"temperature":0.5})"));
  LlmConfig c = load_llm_config(session, request, env);
  EXPECT_EQ(c.model_name, "session-model");
  EXPECT_EQ(c.base_url, "https://env.example/v1");
  EXPECT_EQ(c.temperature, 0.5);
  EXPECT_EQ(c.max_retries, LlmConfig{}.max_retries);

  PartialLlmConfig override_model = PartialLlmConfig::from_json(Json::parse(R"({"model_name":"req"})"));
  EXPECT_EQ(load_llm_config(session, override_model, env).model_name, "req");
  EXPECT_EQ(PartialLlmConfig::from_json(session.to_json()).model_name, session.model_name);
}

TEST(LlmGateway, ConfigValidation) {
  auto bad = [](const char* doc) {
    return code_of([&] { load_llm_config(PartialLlmConfig::from_json(Json::parse(doc)), {}, test_env); });
  };
  EXPECT_EQ(bad(R"({"temperature":3})"), ErrorCode::InvalidConfig);
  EXPECT_EQ(bad(R"({"max_retries":-1})"), ErrorCode::InvalidConfig);
  EXPECT_EQ(bad(R"({"provider":"nope"})"), ErrorCode::InvalidConfig);
  EXPECT_EQ(bad(R"({"base_url":"ftp://x"})"), ErrorCode::InvalidConfig);
  EXPECT_EQ(bad(R"({"provider":"mock"})"), ErrorCode::InvalidConfig);
  EXPECT_EQ(bad(R"({"colour":"red"})"), ErrorCode::InvalidConfig);
  EXPECT_EQ(bad(R"({"model_name":5})"), ErrorCode::InvalidConfig);
}

TEST(LlmGateway, HttpTransportAgainstLocalServer) {
  httplib::Server server;
  std::string seen_auth, seen_body;
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    seen_auth = req.get_header_value("Authorization");
    seen_body = req.body;
    res.set_content(kOpenAiOk, "application/json");
  });
  int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  LlmClient client(std::make_shared<HttpTransport>(), [](std::chrono::milliseconds) {});
  client.set_getenv(test_env);
  LlmConfig c = openai();
  c.base_url = "http://127.0.0.1:" + std::to_string(port) + "/v1";
  EXPECT_EQ(client.chat(hello(), c), "hello");
  EXPECT_EQ(seen_auth, std::string("Bearer ") + kSecret);
  EXPECT_EQ(Json::parse(seen_body)["messages"][1]["content"], "say hello");
  server.stop();
  t.join();

  // nothing listens there any more
  c.max_retries = 0;
  EXPECT_EQ(code_of([&] { client.chat(hello(), c); }), ErrorCode::Unavailable);
}
