#pragma once

#include <atomic>
#include <cstdint>

#include <json.hpp>

namespace copic::llm {

struct TokenCounts {
  std::int64_t llm_input = 0;
  std::int64_t llm_output = 0;
  std::int64_t critic_input = 0;
  std::int64_t critic_output = 0;

  std::int64_t cost() const { return llm_input + llm_output + critic_input + critic_output; }
  bool operator==(const TokenCounts&) const = default;
};

nlohmann::json to_json(const TokenCounts& c);
TokenCounts token_counts_from_json(const nlohmann::json& j);

/// Running token totals for the Cost metric. Counters only grow; concurrent
/// gateway requests may add to it from several threads.
class TokenLedger {
 public:
  TokenLedger() = default;
  explicit TokenLedger(const TokenCounts& start) { restore(start); }

  void add_llm(std::int64_t input, std::int64_t output);
  void add_critic(std::int64_t input, std::int64_t output);

  TokenCounts snapshot() const;
  std::int64_t cost() const { return snapshot().cost(); }
  /// Resume support: replaces the totals with a saved snapshot.
  void restore(const TokenCounts& c);

 private:
  std::atomic<std::int64_t> llm_input_{0};
  std::atomic<std::int64_t> llm_output_{0};
  std::atomic<std::int64_t> critic_input_{0};
  std::atomic<std::int64_t> critic_output_{0};
};

}  // namespace copic::llm
