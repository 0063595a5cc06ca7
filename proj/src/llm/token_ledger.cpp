#include "copic/llm/token_ledger.hpp"

#include "copic/errors.hpp"

namespace copic::llm {

nlohmann::json to_json(const TokenCounts& c) {
  return {{"llm_input", c.llm_input},
          {"llm_output", c.llm_output},
          {"critic_input", c.critic_input},
          {"critic_output", c.critic_output},
          {"cost", c.cost()}};
}

TokenCounts token_counts_from_json(const nlohmann::json& j) {
  try {
    return {j.at("llm_input").get<std::int64_t>(), j.at("llm_output").get<std::int64_t>(),
            j.at("critic_input").get<std::int64_t>(), j.at("critic_output").get<std::int64_t>()};
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("token ledger: ") + e.what());
  }
}

void TokenLedger::add_llm(std::int64_t input, std::int64_t output) {
  if (input < 0 || output < 0) throw PreconditionError("negative token count");
  llm_input_ += input;
  llm_output_ += output;
}

void TokenLedger::add_critic(std::int64_t input, std::int64_t output) {
  if (input < 0 || output < 0) throw PreconditionError("negative token count");
  critic_input_ += input;
  critic_output_ += output;
}

TokenCounts TokenLedger::snapshot() const {
  return {llm_input_.load(), llm_output_.load(), critic_input_.load(), critic_output_.load()};
}

void TokenLedger::restore(const TokenCounts& c) {
  llm_input_ = c.llm_input;
  llm_output_ = c.llm_output;
  critic_input_ = c.critic_input;
  critic_output_ = c.critic_output;
}

}  // namespace copic::llm
