#include "copic/critic/scorer_backend.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "copic/errors.hpp"

namespace copic::critic {

namespace {

std::string_view trim_left(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
  return s.substr(i);
}

std::uint64_t mix(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

void check_logprob(double lp) {
  if (!std::isfinite(lp) || lp > 0.0) {
    throw ConfigError("logprob must be finite and <= 0, got " + std::to_string(lp));
  }
}

}  // namespace

std::vector<std::string> whitespace_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    std::size_t start = i;
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i == text.size() && !out.empty() && trim_left(text.substr(start)).empty()) {
      out.back() += std::string(text.substr(start));
      break;
    }
    out.emplace_back(text.substr(start, i - start));
  }
  return out;
}

std::uint64_t fnv1a(std::string_view text, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

TableBackend::TableBackend(double default_logprob) : default_logprob_(default_logprob) {
  check_logprob(default_logprob);
}

std::string TableBackend::key(std::uint64_t context_hash, std::string_view token) {
  std::string k = std::to_string(context_hash);
  k += '\x1f';
  k += trim_left(token);
  return k;
}

void TableBackend::set(std::string_view context, std::string_view token, double logprob) {
  check_logprob(logprob);
  table_[key(fnv1a(context), token)] = logprob;
  has_exact_ = true;
}

void TableBackend::set_any_context(std::string_view token, double logprob) {
  check_logprob(logprob);
  table_[key(0, token)] = logprob;
}

double TableBackend::lookup(std::string_view context, std::string_view token) const {
  if (has_exact_) {
    auto it = table_.find(key(fnv1a(context), token));
    if (it != table_.end()) return it->second;
  }
  auto it = table_.find(key(0, token));
  return it == table_.end() ? default_logprob_ : it->second;
}

TableBackend TableBackend::from_json(const nlohmann::json& j) {
  try {
    TableBackend t(j.value("default", -10.0));
    for (const auto& e : j.value("entries", nlohmann::json::array())) {
      const std::string ctx = e.at("context").get<std::string>();
      const std::string tok = e.at("token").get<std::string>();
      const double lp = e.at("logprob").get<double>();
      if (ctx == "*") {
        t.set_any_context(tok, lp);
      } else {
        t.set(ctx, tok, lp);
      }
    }
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("logprob table: ") + e.what());
  }
}

ScoreResult TableBackend::score(const std::string& context, const std::string& continuation) const {
  ScoreResult r;
  for (auto& tok : whitespace_tokens(continuation)) {
    const double lp = lookup(context, tok);
    r.tokens.push_back({std::move(tok), lp});
  }
  r.input_tokens = static_cast<std::int64_t>(whitespace_tokens(context).size() + r.tokens.size());
  return r;
}

ScoreResult HashBackend::score(const std::string& context, const std::string& continuation) const {
  ScoreResult r;
  std::uint64_t state = mix(fnv1a(context) ^ salt_);
  for (auto& tok : whitespace_tokens(continuation)) {
    state = mix(state ^ fnv1a(trim_left(tok)));
    const double u = static_cast<double>(state >> 11) * 0x1.0p-53;
    r.tokens.push_back({std::move(tok), -(0.1 + 3.9 * u)});
  }
  r.input_tokens = static_cast<std::int64_t>(whitespace_tokens(context).size() + r.tokens.size());
  return r;
}

HttpLogprobBackend::HttpLogprobBackend(HttpBackendConfig config, net::PostFn post)
    : config_(std::move(config)), post_(std::move(post)) {
  if (config_.url.empty()) throw ConfigError("http scorer backend needs a url");
  net::split_url(config_.url);
}

nlohmann::json HttpLogprobBackend::request_body(const std::string& context,
                                                const std::string& continuation) const {
  return {{"model", config_.model},  {"prompt", context + continuation},
          {"max_tokens", 0},         {"echo", true},
          {"logprobs", 0},           {"temperature", 0.0}};
}

ScoreResult HttpLogprobBackend::parse_response(const nlohmann::json& response,
                                               std::size_t context_chars) {
  try {
    const auto& lp = response.at("choices").at(0).at("logprobs");
    const auto& tokens = lp.at("tokens");
    const auto& logprobs = lp.at("token_logprobs");
    const auto& offsets = lp.at("text_offset");
    if (tokens.size() != logprobs.size() || tokens.size() != offsets.size()) {
      throw ScoringError("logprobs arrays differ in length");
    }
    ScoreResult r;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      const auto tok = tokens[i].get<std::string>();
      const auto off = offsets[i].get<std::size_t>();
      // A token straddling the boundary belongs to the continuation.
      if (off + tok.size() <= context_chars) continue;
      if (logprobs[i].is_null()) throw ScoringError("null logprob inside the continuation");
      const double v = logprobs[i].get<double>();
      if (!std::isfinite(v) || v > 1e-9) throw ScoringError("invalid logprob " + std::to_string(v));
      r.tokens.push_back({tok, std::min(v, 0.0)});
    }
    if (response.contains("usage") && response["usage"].contains("prompt_tokens")) {
      r.input_tokens = response["usage"]["prompt_tokens"].get<std::int64_t>();
    } else {
      r.input_tokens = static_cast<std::int64_t>(tokens.size());
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ScoringError(std::string("malformed completions response: ") + e.what());
  }
}

ScoreResult HttpLogprobBackend::score(const std::string& context,
                                      const std::string& continuation) const {
  net::HttpRequest req;
  req.url = config_.url;
  req.body = request_body(context, continuation).dump();
  req.timeout_s = config_.timeout_s;
  if (!config_.api_key.empty()) req.headers.emplace_back("Authorization", "Bearer " + config_.api_key);
  net::HttpResponse resp = net::post_with_retries(req, config_.retry, fnv1a(req.body), post_);
  if (resp.status != 200) {
    throw TransportError("scorer endpoint returned HTTP " + std::to_string(resp.status));
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(resp.body);
  } catch (const nlohmann::json::exception& e) {
    throw ScoringError(std::string("scorer response is not JSON: ") + e.what());
  }
  return parse_response(j, context.size());
}

std::unique_ptr<ScorerBackend> make_backend(const BackendSpec& spec) {
  if (spec.kind == "hash") return std::make_unique<HashBackend>(spec.salt);
  if (spec.kind == "table") {
    std::ifstream in(spec.table_path);
    if (!in) throw ConfigError("cannot open logprob table '" + spec.table_path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(ss.str());
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("logprob table: ") + e.what());
    }
    return std::make_unique<TableBackend>(TableBackend::from_json(j));
  }
  if (spec.kind == "http") return std::make_unique<HttpLogprobBackend>(spec.http);
  throw ConfigError("unknown scorer backend '" + spec.kind + "' (expected table, hash or http)");
}

}  // namespace copic::critic
