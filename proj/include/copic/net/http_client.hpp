#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace copic::net {

struct HttpRequest {
  std::string url;  // http(s)://host[:port]/path
  std::string body;
  std::vector<std::pair<std::string, std::string>> headers;
  double timeout_s = 60.0;
};

struct HttpResponse {
  int status = 0;
  std::string body;
};

/// Splits a URL into "scheme://host[:port]" and the path ("/" when empty).
/// Throws ConfigError for anything that is not http or https.
std::pair<std::string, std::string> split_url(const std::string& url);

/// One POST with a JSON body. Throws TransportError when no HTTP response
/// arrives (DNS, connect, TLS, timeout). HTTP error statuses are returned.
HttpResponse post_json(const HttpRequest& request);

struct RetryPolicy {
  int max_retries = 3;
  double base_delay_s = 0.5;
  double factor = 2.0;
  double jitter = 0.25;  // fraction of the delay added at random
};

using PostFn = std::function<HttpResponse(const HttpRequest&)>;
using SleepFn = std::function<void(double seconds)>;

/// Retries transport failures, 429 and 5xx with exponential backoff. Other
/// statuses are returned as-is. Throws TransportError once retries run out.
HttpResponse post_with_retries(const HttpRequest& request, const RetryPolicy& policy,
                               std::uint64_t seed, const PostFn& post = post_json,
                               const SleepFn& sleep = {});

}  // namespace copic::net
