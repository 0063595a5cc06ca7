#include <httplib.h>

#include <chrono>
#include <random>
#include <thread>

#include "copic/errors.hpp"
#include "copic/net/http_client.hpp"

namespace copic::net {

std::pair<std::string, std::string> split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("URL without scheme: " + url);
  const std::string scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") throw ConfigError("unsupported URL scheme: " + scheme);
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
  if (scheme == "https") throw ConfigError("this build has no TLS support; use an http:// endpoint");
#endif
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  if (path_start == scheme_end + 3) throw ConfigError("URL without host: " + url);
  return {url.substr(0, path_start), url.substr(path_start)};
}

HttpResponse post_json(const HttpRequest& request) {
  auto [origin, path] = split_url(request.url);
  httplib::Client client(origin);
  const auto secs = static_cast<time_t>(request.timeout_s);
  const auto usecs = static_cast<time_t>((request.timeout_s - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);
  httplib::Headers headers;
  for (const auto& [k, v] : request.headers) headers.emplace(k, v);
  auto result = client.Post(path, headers, request.body, "application/json");
  if (!result) {
    throw TransportError("POST " + origin + path + " failed: " + httplib::to_string(result.error()));
  }
  return {result->status, result->body};
}

HttpResponse post_with_retries(const HttpRequest& request, const RetryPolicy& policy,
                               std::uint64_t seed, const PostFn& post, const SleepFn& sleep) {
  std::mt19937_64 rng(seed);
  auto pause = [&](int attempt) {
    double delay = policy.base_delay_s;
    for (int i = 0; i < attempt; ++i) delay *= policy.factor;
    delay += delay * policy.jitter * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
    if (sleep) {
      sleep(delay);
    } else {
      std::this_thread::sleep_for(std::chrono::duration<double>(delay));
    }
  };
  std::string last_error;
  for (int attempt = 0;; ++attempt) {
    try {
      HttpResponse r = post(request);
      if (r.status != 429 && r.status < 500) return r;
      last_error = "HTTP " + std::to_string(r.status) + ": " + r.body.substr(0, 200);
    } catch (const TransportError& e) {
      last_error = e.what();
    }
    if (attempt >= policy.max_retries) break;
    pause(attempt);
  }
  throw TransportError("giving up after " + std::to_string(policy.max_retries + 1) +
                       " attempts: " + last_error);
}

}  // namespace copic::net
