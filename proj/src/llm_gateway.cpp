#include "twb/llm_gateway.hpp"

#include <cmath>
#include <cstdlib>
#include <regex>
#include <thread>

#include "httplib.h"
#include "twb/error.hpp"
#include "twb/io.hpp"

namespace twb {

using Json = nlohmann::ordered_json;

std::string_view provider_name(Provider provider) noexcept {
  switch (provider) {
    case Provider::OpenAiCompatible: return "openai_compatible";
    case Provider::AnthropicCompatible: return "anthropic_compatible";
    case Provider::Mock: return "mock";
  }
  return "mock";
}

std::optional<Provider> provider_from_name(std::string_view name) noexcept {
  if (name == "openai_compatible" || name == "openai") return Provider::OpenAiCompatible;
  if (name == "anthropic_compatible" || name == "anthropic") return Provider::AnthropicCompatible;
  if (name == "mock") return Provider::Mock;
  return std::nullopt;
}

void LlmConfig::validate() const {
  auto bad = [](const std::string& field, const std::string& why) {
    throw Error(ErrorCode::InvalidConfig, field + ": " + why);
  };
  if (!(temperature >= 0.0 && temperature <= 2.0)) bad("temperature", "must be within [0, 2]");
  if (max_output_tokens < 1) bad("max_output_tokens", "must be positive");
  if (request_timeout_seconds < 1) bad("request_timeout_seconds", "must be positive");
  if (max_retries < 0) bad("max_retries", "must be non-negative");
  if (provider == Provider::Mock) {
    if (mock_script.empty()) bad("mock_script", "the mock provider needs a script path");
  } else {
    if (base_url.empty()) bad("base_url", "required for " + std::string(provider_name(provider)));
    if (!std::regex_match(base_url, std::regex(R"(https?://[^/\s]+(/\S*)?)"))) bad("base_url", "not an http(s) URL");
    if (model_name.empty()) bad("model_name", "required");
    if (api_key_ref.empty()) bad("api_key_ref", "required");
  }
}

void PartialLlmConfig::apply_to(LlmConfig& config) const {
  if (provider) config.provider = *provider;
  if (base_url) config.base_url = *base_url;
  if (model_name) config.model_name = *model_name;
  if (api_key_ref) config.api_key_ref = *api_key_ref;
  if (temperature) config.temperature = *temperature;
  if (max_output_tokens) config.max_output_tokens = *max_output_tokens;
  if (request_timeout_seconds) config.request_timeout_seconds = *request_timeout_seconds;
  if (max_retries) config.max_retries = *max_retries;
  if (mock_script) config.mock_script = *mock_script;
}

PartialLlmConfig PartialLlmConfig::from_json(const Json& doc) {
  PartialLlmConfig out;
  if (doc.is_null()) return out;
  if (!doc.is_object()) throw Error(ErrorCode::InvalidConfig, "llm settings must be an object");
  for (const auto& [key, value] : doc.items()) {
    if (value.is_null()) continue;
    auto want_string = [&]() {
      if (!value.is_string()) throw Error(ErrorCode::InvalidConfig, key + ": expected a string");
      return value.get<std::string>();
    };
    auto want_int = [&]() {
      if (!value.is_number_integer()) throw Error(ErrorCode::InvalidConfig, key + ": expected an integer");
      return value.get<int>();
    };
    if (key == "provider") {
      auto p = provider_from_name(want_string());
      if (!p) throw Error(ErrorCode::InvalidConfig, "provider: unknown provider " + value.get<std::string>());
      out.provider = p;
    } else if (key == "base_url") {
      out.base_url = want_string();
    } else if (key == "model_name") {
      out.model_name = want_string();
    } else if (key == "api_key_ref") {
      out.api_key_ref = want_string();
    } else if (key == "temperature") {
      if (!value.is_number()) throw Error(ErrorCode::InvalidConfig, "temperature: expected a number");
      out.temperature = value.get<double>();
    } else if (key == "max_output_tokens") {
      out.max_output_tokens = want_int();
    } else if (key == "request_timeout_seconds") {
      out.request_timeout_seconds = want_int();
    } else if (key == "max_retries") {
      out.max_retries = want_int();
    } else if (key == "mock_script") {
      out.mock_script = want_string();
    } else {
      throw Error(ErrorCode::InvalidConfig, key + ": unknown setting");
    }
  }
  return out;
}

Json PartialLlmConfig::to_json() const {
  Json doc = Json::object();
  if (provider) doc["provider"] = std::string(provider_name(*provider));
  if (base_url) doc["base_url"] = *base_url;
  if (model_name) doc["model_name"] = *model_name;
  if (api_key_ref) doc["api_key_ref"] = *api_key_ref;
  if (temperature) doc["temperature"] = *temperature;
  if (max_output_tokens) doc["max_output_tokens"] = *max_output_tokens;
  if (request_timeout_seconds) doc["request_timeout_seconds"] = *request_timeout_seconds;
  if (max_retries) doc["max_retries"] = *max_retries;
  if (mock_script) doc["mock_script"] = *mock_script;
  return doc;
}

PartialLlmConfig PartialLlmConfig::from_env(
    const std::function<std::optional<std::string>(const std::string&)>& getenv) {
  PartialLlmConfig out;
  if (auto v = getenv("MW_LLM_PROVIDER"); v && !v->empty()) {
    auto p = provider_from_name(*v);
    if (!p) throw Error(ErrorCode::InvalidConfig, "provider: unknown provider " + *v + " in MW_LLM_PROVIDER");
    out.provider = p;
  }
  if (auto v = getenv("MW_LLM_BASE_URL"); v && !v->empty()) out.base_url = *v;
  if (auto v = getenv("MW_LLM_MODEL"); v && !v->empty()) out.model_name = *v;
  if (auto v = getenv("MW_LLM_MOCK_SCRIPT"); v && !v->empty()) out.mock_script = *v;
  return out;
}

std::optional<std::string> process_env(const std::string& name) {
  if (const char* v = std::getenv(name.c_str())) return std::string(v);
  return std::nullopt;
}

LlmConfig load_llm_config(const PartialLlmConfig& session, const PartialLlmConfig& request,
                          const std::function<std::optional<std::string>(const std::string&)>& getenv) {
  LlmConfig config;
  PartialLlmConfig::from_env(getenv).apply_to(config);
  session.apply_to(config);
  request.apply_to(config);
  config.validate();
  return config;
}

std::string_view role_name(Role role) noexcept {
  switch (role) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "user";
}

void Conversation::validate() const {
  if (messages.empty()) throw Error(ErrorCode::InvalidArgument, "conversation is empty");
  for (const auto& m : messages) {
    if (m.role == Role::System) continue;
    if (m.role != Role::User) throw Error(ErrorCode::InvalidArgument, "first non-system message must be from the user");
    return;
  }
  throw Error(ErrorCode::InvalidArgument, "conversation has no user message");
}

Json Conversation::to_json() const {
  Json doc = Json::array();
  for (const auto& m : messages) {
    Json entry;
    entry["role"] = std::string(role_name(m.role));
    entry["content"] = m.content;
    doc.push_back(std::move(entry));
  }
  return doc;
}

Conversation Conversation::from_json(const Json& doc) {
  Conversation out;
  for (const auto& entry : doc) {
    auto role = entry.at("role").get<std::string>();
    Role r = role == "system" ? Role::System : role == "assistant" ? Role::Assistant : Role::User;
    out.messages.push_back({r, entry.at("content").get<std::string>()});
  }
  return out;
}

HttpResponse HttpTransport::post(const HttpRequest& request) {
  static const std::regex url_re(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(request.url, m, url_re)) return {0, "", "bad url " + request.url};
  httplib::Client client(m[1].str());
  client.set_connection_timeout(request.timeout_seconds, 0);
  client.set_read_timeout(request.timeout_seconds, 0);
  client.set_write_timeout(request.timeout_seconds, 0);
  httplib::Headers headers;
  for (const auto& [k, v] : request.headers) headers.emplace(k, v);
  std::string path = m[2].matched ? m[2].str() : "/";
  auto res = client.Post(path, headers, request.body, "application/json");
  if (!res) return {0, "", httplib::to_string(res.error())};
  return {res->status, res->body, ""};
}

std::chrono::milliseconds backoff_delay(const RetryPolicy& policy, int attempt, std::mt19937_64& rng) {
  double cap = static_cast<double>(policy.base.count()) * std::pow(policy.factor, attempt);
  std::uniform_real_distribution<double> dist(0.0, cap);
  return std::chrono::milliseconds(static_cast<std::int64_t>(dist(rng)));
}

LlmClient::LlmClient(std::shared_ptr<Transport> transport, Sleeper sleeper, std::uint64_t seed)
    : transport_(std::move(transport)), sleeper_(std::move(sleeper)), rng_(seed) {
  if (!sleeper_) sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

void LlmClient::set_transcript(std::optional<std::filesystem::path> path) { transcript_ = std::move(path); }

namespace {

std::string redact(std::string text, const std::string& secret) {
  if (secret.empty()) return text;
  std::size_t pos = 0;
  while ((pos = text.find(secret, pos)) != std::string::npos) {
    text.replace(pos, secret.size(), "[REDACTED]");
    pos += 10;
  }
  return text;
}

const std::string& last_user_message(const Conversation& conversation) {
  for (auto it = conversation.messages.rbegin(); it != conversation.messages.rend(); ++it) {
    if (it->role == Role::User) return it->content;
  }
  throw Error(ErrorCode::InvalidArgument, "conversation has no user message");
}

std::string resolve_response(const Json& entry, const std::filesystem::path& base) {
  if (entry.is_string()) return entry.get<std::string>();
  if (entry.is_object() && entry.contains("file")) {
    std::filesystem::path p = entry["file"].get<std::string>();
    return read_file(p.is_absolute() ? p : base / p);
  }
  throw Error(ErrorCode::InvalidConfig, "mock_script: response entries are strings or {\"file\": path}");
}

std::string extract_text(Provider provider, const std::string& body) {
  Json doc = Json::parse(body, nullptr, false);
  if (doc.is_discarded()) throw Error(ErrorCode::MalformedResponse, "response is not JSON");
  try {
    if (provider == Provider::AnthropicCompatible) {
      std::string text;
      for (const auto& block : doc.at("content")) {
        if (block.value("type", "") == "text") text += block.at("text").get<std::string>();
      }
      if (doc.at("content").empty()) throw Error(ErrorCode::MalformedResponse, "response has no content blocks");
      return text;
    }
    const auto& content = doc.at("choices").at(0).at("message").at("content");
    if (!content.is_string()) throw Error(ErrorCode::MalformedResponse, "message content is not text");
    return content.get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedResponse, std::string("unexpected response shape: ") + e.what());
  }
}

HttpRequest build_request(const Conversation& conversation, const LlmConfig& config, const std::string& key) {
  HttpRequest request;
  request.timeout_seconds = config.request_timeout_seconds;
  std::string base = config.base_url;
  while (!base.empty() && base.back() == '/') base.pop_back();
  Json body;
  body["model"] = config.model_name;
  if (config.provider == Provider::AnthropicCompatible) {
    request.url = base + "/messages";
    request.headers = {{"x-api-key", key}, {"anthropic-version", "2023-06-01"}};
    std::string system;
    Json messages = Json::array();
    for (const auto& m : conversation.messages) {
      if (m.role == Role::System) {
        system += (system.empty() ? "" : "\n\n") + m.content;
        continue;
      }
      messages.push_back({{"role", std::string(role_name(m.role))}, {"content", m.content}});
    }
    body["max_tokens"] = config.max_output_tokens;
    body["temperature"] = config.temperature;
    if (!system.empty()) body["system"] = system;
    body["messages"] = std::move(messages);
  } else {
    request.url = base + "/chat/completions";
    request.headers = {{"Authorization", "Bearer " + key}};
    body["messages"] = conversation.to_json();
    body["temperature"] = config.temperature;
    body["max_tokens"] = config.max_output_tokens;
  }
  request.body = body.dump();
  return request;
}

}  // namespace

std::string LlmClient::mock_reply(const Conversation& conversation, const LlmConfig& config) {
  std::filesystem::path script_path = config.mock_script;
  Json script;
  try {
    script = Json::parse(read_file(script_path));
  } catch (const Error& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("mock_script: ") + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("mock_script: ") + e.what());
  }
  auto base = script_path.parent_path();
  std::string mode = script.value("mode", "sequence");
  if (mode == "echo") return last_user_message(conversation);
  if (mode == "sequence") {
    const Json& responses = script.at("responses");
    if (!responses.is_array() || responses.empty()) {
      throw Error(ErrorCode::InvalidConfig, "mock_script: responses must be a non-empty array");
    }
    std::size_t i;
    {
      std::lock_guard lock(mutex_);
      i = mock_cursor_[script_path.string()]++;
    }
    if (script.value("cycle", false)) {
      i %= responses.size();
    } else {
      i = std::min(i, responses.size() - 1);
    }
    return resolve_response(responses[i], base);
  }
  if (mode == "patterns") {
    const std::string& user = last_user_message(conversation);
    for (const auto& rule : script.at("rules")) {
      if (std::regex_search(user, std::regex(rule.at("match").get<std::string>()))) {
        return resolve_response(rule.at("response"), base);
      }
    }
    if (script.contains("default")) return resolve_response(script["default"], base);
    throw Error(ErrorCode::MalformedResponse, "mock script has no rule for this conversation");
  }
  throw Error(ErrorCode::InvalidConfig, "mock_script: unknown mode " + mode);
}

void LlmClient::record(const Conversation& conversation, const LlmConfig& config, const std::string& started,
                       const std::optional<std::string>& response, const std::optional<std::string>& error,
                       const std::string& secret) {
  if (!transcript_) return;
  Json rec;
  rec["started_at"] = started;
  rec["finished_at"] = utc_timestamp();
  rec["provider"] = std::string(provider_name(config.provider));
  rec["model"] = config.model_name;
  rec["attempts"] = last_attempts_.load();
  rec["request"] = conversation.to_json();
  rec["response"] = response ? Json(*response) : Json(nullptr);
  rec["error"] = error ? Json(*error) : Json(nullptr);
  std::lock_guard lock(mutex_);
  append_line(*transcript_, redact(rec.dump(), secret));
}

std::string LlmClient::chat(const Conversation& conversation, const LlmConfig& config) {
  config.validate();
  conversation.validate();
  last_attempts_ = 0;
  std::string started = utc_timestamp();

  if (config.provider == Provider::Mock) {
    std::string reply = mock_reply(conversation, config);
    record(conversation, config, started, reply, std::nullopt, "");
    return reply;
  }

  auto key = getenv_(config.api_key_ref);
  if (!key || key->empty()) {
    std::string msg = "credential variable " + config.api_key_ref + " is not set";
    record(conversation, config, started, std::nullopt, msg, "");
    throw Error(ErrorCode::AuthFailure, msg);
  }
  HttpRequest request = build_request(conversation, config, *key);

  for (int attempt = 0;; ++attempt) {
    HttpResponse response = transport_->post(request);
    ++last_attempts_;
    ErrorCode failure;
    std::string detail;
    if (response.status >= 200 && response.status < 300) {
      try {
        std::string text = extract_text(config.provider, response.body);
        record(conversation, config, started, text, std::nullopt, *key);
        return text;
      } catch (const Error& e) {
        record(conversation, config, started, std::nullopt, e.what(), *key);
        throw;
      }
    } else if (response.status == 401 || response.status == 403) {
      std::string msg = "provider rejected the credentials (HTTP " + std::to_string(response.status) + ")";
      record(conversation, config, started, std::nullopt, msg, *key);
      throw Error(ErrorCode::AuthFailure, msg);
    } else if (response.status == 429) {
      failure = ErrorCode::RateLimited;
      detail = "rate limited (HTTP 429)";
    } else if (response.status == 0 || response.status >= 500) {
      failure = ErrorCode::Unavailable;
      detail = response.status == 0 ? "no response: " + response.transport_error
                                    : "provider unavailable (HTTP " + std::to_string(response.status) + ")";
    } else {
      std::string msg = "provider rejected the request (HTTP " + std::to_string(response.status) +
                        "): " + redact(response.body.substr(0, 300), *key);
      record(conversation, config, started, std::nullopt, msg, *key);
      throw Error(ErrorCode::ProviderRejected, msg);
    }
    if (attempt >= config.max_retries) {
      std::string msg = detail + " after " + std::to_string(last_attempts_) + " attempts";
      record(conversation, config, started, std::nullopt, msg, *key);
      throw Error(failure, msg);
    }
    std::chrono::milliseconds delay;
    {
      std::lock_guard lock(mutex_);
      delay = backoff_delay(retry_, attempt, rng_);
    }
    sleeper_(delay);
  }
}

}  // namespace twb
