#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "copic/net/http_client.hpp"

namespace copic::critic {

struct TokenLogprob {
  std::string token;
  double logprob = 0.0;
};

struct ScoreResult {
  std::vector<TokenLogprob> tokens;  // concatenate to the continuation
  std::int64_t input_tokens = 0;     // context plus continuation, as billed
};

/// Frozen language-model stand-in: log-probabilities of a continuation's
/// tokens given a context. Implementations are read-only after construction.
class ScorerBackend {
 public:
  virtual ~ScorerBackend() = default;
  virtual ScoreResult score(const std::string& context, const std::string& continuation) const = 0;
  virtual std::vector<std::string> tokenize(const std::string& text) const = 0;
  virtual std::string name() const = 0;
};

/// Whitespace tokenizer: each token is a run of non-space characters with the
/// whitespace before it attached, so the pieces concatenate back to `text`.
/// Trailing whitespace joins the last token.
std::vector<std::string> whitespace_tokens(std::string_view text);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view text, std::uint64_t seed = 0xcbf29ce484222325ULL);

/// Explicit (context hash, token) -> logprob table. Tokens are matched with
/// their leading whitespace stripped. Lookup order: exact context, wildcard
/// context, then the default logprob.
class TableBackend : public ScorerBackend {
 public:
  explicit TableBackend(double default_logprob = -10.0);

  void set(std::string_view context, std::string_view token, double logprob);
  void set_any_context(std::string_view token, double logprob);
  double lookup(std::string_view context, std::string_view token) const;
  double default_logprob() const { return default_logprob_; }

  /// {"default": -10, "entries": [{"context": "*", "token": "SCV", "logprob": -1.0}, ...]}
  /// where "context" is either "*" or literal context text.
  static TableBackend from_json(const nlohmann::json& j);

  ScoreResult score(const std::string& context, const std::string& continuation) const override;
  std::vector<std::string> tokenize(const std::string& text) const override {
    return whitespace_tokens(text);
  }
  std::string name() const override { return "table"; }

 private:
  static std::string key(std::uint64_t context_hash, std::string_view token);

  double default_logprob_;
  bool has_exact_ = false;
  std::map<std::string, double, std::less<>> table_;
};

/// Deterministic pseudo-model: each token's logprob is a hash of the context,
/// the tokens before it and the token itself, spread over [-4, -0.1].
class HashBackend : public ScorerBackend {
 public:
  explicit HashBackend(std::uint64_t salt = 0) : salt_(salt) {}
  ScoreResult score(const std::string& context, const std::string& continuation) const override;
  std::vector<std::string> tokenize(const std::string& text) const override {
    return whitespace_tokens(text);
  }
  std::string name() const override { return "hash"; }

 private:
  std::uint64_t salt_;
};

struct HttpBackendConfig {
  std::string url;  // completions endpoint, e.g. http://localhost:8000/v1/completions
  std::string model;
  std::string api_key;  // may be empty for local servers
  double timeout_s = 30.0;
  net::RetryPolicy retry;
};

/// OpenAI-style completions endpoint with echo + logprobs: the prompt is
/// context + continuation, max_tokens 0, and the echoed per-token logprobs
/// past the context boundary are returned.
class HttpLogprobBackend : public ScorerBackend {
 public:
  explicit HttpLogprobBackend(HttpBackendConfig config, net::PostFn post = net::post_json);

  nlohmann::json request_body(const std::string& context, const std::string& continuation) const;
  /// Pulls the continuation tokens out of a completions response.
  static ScoreResult parse_response(const nlohmann::json& response, std::size_t context_chars);

  ScoreResult score(const std::string& context, const std::string& continuation) const override;
  std::vector<std::string> tokenize(const std::string& text) const override {
    return whitespace_tokens(text);
  }
  std::string name() const override { return "http"; }

 private:
  HttpBackendConfig config_;
  net::PostFn post_;
};

/// "table" (requires table_path), "hash", or "http" (requires url).
/// Unknown names throw ConfigError.
struct BackendSpec {
  std::string kind = "hash";
  std::string table_path;
  HttpBackendConfig http;
  std::uint64_t salt = 0;
};
std::unique_ptr<ScorerBackend> make_backend(const BackendSpec& spec);

}  // namespace copic::critic
