#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

namespace twb {

enum class Provider { OpenAiCompatible, AnthropicCompatible, Mock };

std::string_view provider_name(Provider provider) noexcept;
// Accepts "openai_compatible"/"openai" and "anthropic_compatible"/"anthropic".
std::optional<Provider> provider_from_name(std::string_view name) noexcept;

struct LlmConfig {
  Provider provider = Provider::OpenAiCompatible;
  std::string base_url = "https://api.openai.com/v1";
  std::string model_name = "gpt-4";
  std::string api_key_ref = "MW_LLM_API_KEY";  // name of the env var holding the key
  double temperature = 0.0;
  int max_output_tokens = 4096;
  int request_timeout_seconds = 120;
  int max_retries = 2;
  std::string mock_script;  // path; mock provider only

  // Throws InvalidConfig naming the offending field.
  void validate() const;
};

// A layer of settings; unset fields fall through to the layer below.
struct PartialLlmConfig {
  std::optional<Provider> provider;
  std::optional<std::string> base_url;
  std::optional<std::string> model_name;
  std::optional<std::string> api_key_ref;
  std::optional<double> temperature;
  std::optional<int> max_output_tokens;
  std::optional<int> request_timeout_seconds;
  std::optional<int> max_retries;
  std::optional<std::string> mock_script;

  void apply_to(LlmConfig& config) const;

  static PartialLlmConfig from_json(const nlohmann::ordered_json& doc);  // throws InvalidConfig
  nlohmann::ordered_json to_json() const;

  // MW_LLM_PROVIDER, MW_LLM_BASE_URL, MW_LLM_MODEL, MW_LLM_MOCK_SCRIPT.
  static PartialLlmConfig from_env(const std::function<std::optional<std::string>(const std::string&)>& getenv);
};

std::optional<std::string> process_env(const std::string& name);

// request override > session setting > environment > built-in default.
LlmConfig load_llm_config(const PartialLlmConfig& session, const PartialLlmConfig& request,
                          const std::function<std::optional<std::string>(const std::string&)>& getenv = process_env);

enum class Role { System, User, Assistant };
std::string_view role_name(Role role) noexcept;

struct ChatMessage {
  Role role;
  std::string content;

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct Conversation {
  std::vector<ChatMessage> messages;

  // Non-empty and the first non-system message is from the user.
  void validate() const;

  nlohmann::ordered_json to_json() const;
  static Conversation from_json(const nlohmann::ordered_json& doc);

  friend bool operator==(const Conversation&, const Conversation&) = default;
};

struct HttpRequest {
  std::string url;
  std::vector<std::pair<std::string, std::string>> headers;
  std::string body;
  int timeout_seconds = 120;
};

struct HttpResponse {
  int status = 0;  // 0: no response (connection failure or timeout)
  std::string body;
  std::string transport_error;
};

class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResponse post(const HttpRequest& request) = 0;
};

// cpp-httplib backed; https supported through OpenSSL.
class HttpTransport : public Transport {
 public:
  HttpResponse post(const HttpRequest& request) override;
};

struct RetryPolicy {
  std::chrono::milliseconds base{1000};
  double factor = 2.0;
};

class LlmClient {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  explicit LlmClient(std::shared_ptr<Transport> transport = std::make_shared<HttpTransport>(),
                     Sleeper sleeper = nullptr, std::uint64_t seed = std::random_device{}());

  // Transcript records go to this JSON-lines file when set.
  void set_transcript(std::optional<std::filesystem::path> path);
  void set_retry_policy(RetryPolicy policy) { retry_ = policy; }
  void set_getenv(std::function<std::optional<std::string>(const std::string&)> getenv) {
    getenv_ = std::move(getenv);
  }

  // One completion. Retries 429/5xx/timeouts up to config.max_retries with
  // full-jitter exponential backoff.
  std::string chat(const Conversation& conversation, const LlmConfig& config);

  // Number of transport calls made by the last chat().
  int last_attempts() const { return last_attempts_; }

 private:
  std::string mock_reply(const Conversation& conversation, const LlmConfig& config);
  void record(const Conversation& conversation, const LlmConfig& config, const std::string& started,
              const std::optional<std::string>& response, const std::optional<std::string>& error,
              const std::string& secret);

  std::shared_ptr<Transport> transport_;
  Sleeper sleeper_;
  std::mt19937_64 rng_;
  RetryPolicy retry_;
  std::function<std::optional<std::string>(const std::string&)> getenv_ = process_env;
  std::optional<std::filesystem::path> transcript_;
  std::atomic<int> last_attempts_{0};

  std::mutex mutex_;
  std::map<std::string, std::size_t> mock_cursor_;  // per script path
};

// Full-jitter delay for retry number `attempt` (0-based): uniform in
// [0, base * factor^attempt].
std::chrono::milliseconds backoff_delay(const RetryPolicy& policy, int attempt, std::mt19937_64& rng);

}  // namespace twb
