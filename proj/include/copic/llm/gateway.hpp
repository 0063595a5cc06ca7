#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "copic/env/observation.hpp"
#include "copic/llm/chat_client.hpp"
#include "copic/llm/token_ledger.hpp"
#include "copic/planlang/program.hpp"

namespace copic::llm {

/// Contents of the first ``` fenced block (the info string after the opening
/// fence is ignored). Throws NoCodeBlock when there is no fence or the first
/// fence is never closed.
std::string extract_code(std::string_view response);

struct HistoryStep {
  std::string obs_text;
  std::string plan_text;
  int program_id = 0;
};

struct EpisodeHistory {
  int episode = 0;  // 1-based within the round
  std::vector<HistoryStep> steps;
  bool success = false;
};

struct HistorySummary {
  std::vector<EpisodeHistory> entries;
  /// Steps dropped from the front of each entry to meet the budget.
  std::vector<std::size_t> elided;

  bool empty() const { return entries.empty(); }
  /// The <trajectory, signal> listing embedded in the evolve prompt.
  std::string render() const;
};

inline constexpr std::size_t kKeptFinalSteps = 10;

/// Keeps the last M episodes. A trajectory whose rendering exceeds
/// `char_budget` loses its oldest steps first, but the final 10 steps are
/// always kept. Throws PreconditionError for no episodes or M < 1.
HistorySummary summarize_history(std::span<const EpisodeHistory> episodes, int M,
                                 std::size_t char_budget = 4000);

/// The task as the prompts show it: {"SCV": 16, ...} in target order.
std::string task_json(const env::TaskSpec& task);

std::string render_init_prompt(const env::TaskSpec& task);
std::string render_evolve_prompt(std::span<const planlang::PlanningProgram> current,
                                 const HistorySummary& summary, const env::TaskSpec& task);

struct GatewayConfig {
  int repair_retries = 2;
  /// JSONL transcript of every request and response; empty disables it.
  std::filesystem::path log_path;
};

/// Turns prompts into parsed planning programs.
class LlmGateway {
 public:
  LlmGateway(std::shared_ptr<ChatClient> client, TokenLedger& ledger, GatewayConfig config = {});

  /// n independent requests for round 1; programs get ids 1..n, generation 0.
  /// Throws GatewayError on transport failure and NoViableExperts when every
  /// program faults.
  std::vector<planlang::PlanningProgram> generate_programs(const env::TaskSpec& task, int n);

  /// One evolve prompt, n sampled completions. Replacement i keeps id i; an
  /// unusable replacement keeps the incumbent. Generation increments either
  /// way.
  std::vector<planlang::PlanningProgram> evolve_programs(
      std::span<const planlang::PlanningProgram> current, const HistorySummary& summary,
      const env::TaskSpec& task);

  /// Completion requests issued, repairs included.
  int requests() const;
  /// Prompts handed to evolve_programs, for inspection.
  const std::vector<std::string>& evolve_prompts() const { return evolve_prompts_; }

 private:
  struct Outcome {
    bool ok = false;
    planlang::PlanningProgram program;
    std::string error;
    std::vector<nlohmann::json> log;
  };

  Outcome obtain(const std::string& prompt, int round, int program_id, int generation);
  std::vector<Outcome> obtain_all(const std::string& prompt, int round, int n, int generation);
  void write_log(const std::vector<Outcome>& outcomes);

  std::shared_ptr<ChatClient> client_;
  TokenLedger& ledger_;
  GatewayConfig config_;
  mutable std::mutex mu_;
  int requests_ = 0;
  std::vector<std::string> evolve_prompts_;
};

}  // namespace copic::llm
