#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "copic/critic/scorer_backend.hpp"
#include "copic/env/observation.hpp"
#include "copic/llm/chat_client.hpp"
#include "copic/ppo/ppo.hpp"

namespace copic::orch {

enum class Mode { kTrain, kEval };

struct RunConfig {
  int n = 3;          // planning programs
  int N = 20;         // episodes per outer round
  int M = 5;          // episodes summarized for evolution
  int K = 128;        // plan selections between fine-tunes
  double threshold = 0.9;
  int T_max = 5;      // actions per plan
  std::uint64_t seed = 0;
  Mode mode = Mode::kTrain;
  env::TaskSpec task = env::reference_task(env::Difficulty::kHard);
  int max_rounds = 10;
  int eval_episodes = 10;
  std::size_t history_chars = 4000;
  int repair_retries = 2;

  ppo::PpoConfig ppo;
  critic::BackendSpec critic;
  llm::HttpChatConfig llm;
  // Offline mode: scripted gateway responses and an offline critic.
  std::filesystem::path fixtures;

  /// Throws ConfigError naming the offending key.
  void validate() const;
};

/// Flat `key = value` lines (a TOML subset): '#' comments, quoted strings,
/// integers, floats and booleans. Keys mirror RunConfig, dotted for nested
/// groups (ppo.lr, critic.backend, llm.model). The task is written
/// `task = "SCV=16,GHOST=2"` with `difficulty = "hard"`.
RunConfig parse_config(const std::string& text, const std::string& origin = "<config>");
RunConfig load_config(const std::filesystem::path& path);

/// Applies one `dotted.key=value` override; unknown keys and values of the
/// wrong type throw ConfigError.
void apply_override(RunConfig& cfg, const std::string& assignment);

/// Every key with its current value, in a form parse_config reads back.
std::string to_text(const RunConfig& cfg);

/// All keys parse_config accepts.
std::vector<std::string> config_keys();

env::TaskSpec parse_task(const std::string& targets, env::Difficulty difficulty);
std::string format_task(const env::TaskSpec& task);

}  // namespace copic::orch
