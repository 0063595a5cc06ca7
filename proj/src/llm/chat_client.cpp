#include "copic/llm/chat_client.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "copic/errors.hpp"

namespace copic::llm {

using nlohmann::json;

HttpChatClient::HttpChatClient(HttpChatConfig config, std::string api_key, net::PostFn post,
                               net::SleepFn sleep)
    : config_(std::move(config)), api_key_(std::move(api_key)), post_(std::move(post)),
      sleep_(std::move(sleep)) {
  if (api_key_.empty()) throw ConfigError(std::string(kApiKeyEnv) + " is empty");
}

std::shared_ptr<HttpChatClient> HttpChatClient::from_env(HttpChatConfig config) {
  const char* key = std::getenv(kApiKeyEnv);
  if (key == nullptr || *key == '\0') {
    throw ConfigError(std::string("live mode needs an API key in the ") + kApiKeyEnv +
                      " environment variable");
  }
  return std::make_shared<HttpChatClient>(std::move(config), key);
}

json HttpChatClient::request_body(const ChatRequest& request) const {
  json messages = json::array();
  for (const auto& m : request.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
  return {{"model", config_.model},
          {"messages", messages},
          {"temperature", config_.temperature},
          {"max_tokens", config_.max_tokens}};
}

ChatResponse HttpChatClient::parse_response(const std::string& body) {
  try {
    const json j = json::parse(body);
    ChatResponse r;
    r.content = j.at("choices").at(0).at("message").at("content").get<std::string>();
    r.prompt_tokens = j.at("usage").at("prompt_tokens").get<std::int64_t>();
    r.completion_tokens = j.at("usage").at("completion_tokens").get<std::int64_t>();
    if (r.prompt_tokens < 0 || r.completion_tokens < 0) throw GatewayError("negative token usage");
    return r;
  } catch (const json::exception& e) {
    throw GatewayError(std::string("malformed chat response: ") + e.what());
  }
}

ChatResponse HttpChatClient::complete(const ChatRequest& request) {
  net::HttpRequest req;
  req.url = config_.url;
  req.body = request_body(request).dump();
  req.headers = {{"Authorization", "Bearer " + api_key_}};
  req.timeout_s = config_.timeout_s;
  const std::uint64_t call = calls_++;
  const auto resp = net::post_with_retries(req, config_.retry, config_.seed + call, post_, sleep_);
  if (resp.status != 200) {
    throw TransportError("chat endpoint returned HTTP " + std::to_string(resp.status));
  }
  return parse_response(resp.body);
}

FixtureChatClient::FixtureChatClient(const std::filesystem::path& dir) : dir_(dir) {
  const auto manifest = dir / "manifest.json";
  std::ifstream in(manifest);
  if (!in) throw ConfigError("fixture manifest not found: " + manifest.string());
  json j;
  try {
    j = json::parse(in);
    for (const auto& e : j.at("responses")) {
      const int round = e.value("round", 1);
      const int program = e.at("program").get<int>();
      const int attempt = e.value("attempt", 0);
      const auto file = dir / e.at("file").get<std::string>();
      std::ifstream body(file, std::ios::binary);
      if (!body) throw ConfigError("fixture response missing: " + file.string());
      std::ostringstream text;
      text << body.rdbuf();
      ChatResponse r{text.str(), e.at("prompt_tokens").get<std::int64_t>(),
                     e.at("completion_tokens").get<std::int64_t>()};
      if (r.prompt_tokens < 0 || r.completion_tokens < 0) throw ConfigError("negative token count in manifest");
      if (!responses_.emplace(std::make_tuple(round, program, attempt), std::move(r)).second) {
        throw ConfigError("duplicate fixture entry for round " + std::to_string(round) + " program " +
                          std::to_string(program) + " attempt " + std::to_string(attempt));
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError("bad fixture manifest " + manifest.string() + ": " + e.what());
  }
}

ChatResponse FixtureChatClient::complete(const ChatRequest& request) {
  const auto it = responses_.find({request.round, request.program, request.attempt});
  if (it == responses_.end()) {
    throw GatewayError("fixtures exhausted: no response for round " + std::to_string(request.round) +
                       " program " + std::to_string(request.program) + " attempt " +
                       std::to_string(request.attempt));
  }
  std::lock_guard lock(mu_);
  ++served_;
  served_in_ += it->second.prompt_tokens;
  served_out_ += it->second.completion_tokens;
  return it->second;
}

std::pair<std::int64_t, std::int64_t> FixtureChatClient::served_tokens() const {
  std::lock_guard lock(mu_);
  return {served_in_, served_out_};
}

int FixtureChatClient::served() const {
  std::lock_guard lock(mu_);
  return served_;
}

bool FixtureChatClient::has(int round, int program, int attempt) const {
  return responses_.count({round, program, attempt}) != 0;
}

}  // namespace copic::llm
