#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "copic/net/http_client.hpp"

namespace copic::llm {

struct ChatMessage {
  std::string role;  // "user" or "assistant"
  std::string content;
};

/// One completion request. round/program/attempt identify the call so
/// offline fixtures can be looked up without depending on thread timing.
struct ChatRequest {
  std::vector<ChatMessage> messages;
  int round = 1;
  int program = 1;
  int attempt = 0;
};

struct ChatResponse {
  std::string content;
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
};

class ChatClient {
 public:
  virtual ~ChatClient() = default;
  /// Throws TransportError when the backend is unreachable after retries and
  /// GatewayError for a malformed or missing response.
  virtual ChatResponse complete(const ChatRequest& request) = 0;
  virtual std::string name() const = 0;
};

struct HttpChatConfig {
  std::string url = "https://api.openai.com/v1/chat/completions";
  std::string model = "gpt-4o";
  double temperature = 0.7;
  int max_tokens = 2048;
  double timeout_s = 120.0;
  net::RetryPolicy retry;
  std::uint64_t seed = 0;  // jitter stream
};

/// Name of the only place the live API key is read from.
inline constexpr const char* kApiKeyEnv = "COPIC_API_KEY";

/// OpenAI-compatible chat-completions endpoint.
class HttpChatClient : public ChatClient {
 public:
  HttpChatClient(HttpChatConfig config, std::string api_key, net::PostFn post = net::post_json,
                 net::SleepFn sleep = {});

  /// Reads the key from COPIC_API_KEY; throws ConfigError naming the
  /// variable when it is unset or empty.
  static std::shared_ptr<HttpChatClient> from_env(HttpChatConfig config);

  ChatResponse complete(const ChatRequest& request) override;
  std::string name() const override { return "http:" + config_.model; }

  nlohmann::json request_body(const ChatRequest& request) const;
  /// Reads choices[0].message.content and usage.{prompt,completion}_tokens.
  static ChatResponse parse_response(const std::string& body);

 private:
  HttpChatConfig config_;
  std::string api_key_;
  net::PostFn post_;
  net::SleepFn sleep_;
  std::atomic<std::uint64_t> calls_{0};
};

/// Offline responses. manifest.json lists
///   {"responses": [{"round": 1, "program": 1, "attempt": 0, "file": "r1_p1.txt",
///                   "prompt_tokens": 812, "completion_tokens": 640}, ...]}
/// "attempt" defaults to 0. Every served response is counted.
class FixtureChatClient : public ChatClient {
 public:
  explicit FixtureChatClient(const std::filesystem::path& dir);

  ChatResponse complete(const ChatRequest& request) override;
  std::string name() const override { return "fixture:" + dir_.string(); }

  /// Sum of the token counts of every response served so far.
  std::pair<std::int64_t, std::int64_t> served_tokens() const;
  int served() const;
  bool has(int round, int program, int attempt) const;

 private:
  std::filesystem::path dir_;
  std::map<std::tuple<int, int, int>, ChatResponse> responses_;
  mutable std::mutex mu_;
  int served_ = 0;
  std::int64_t served_in_ = 0, served_out_ = 0;
};

}  // namespace copic::llm
