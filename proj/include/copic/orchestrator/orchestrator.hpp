#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "copic/critic/critic.hpp"
#include "copic/env/unitbuild_env.hpp"
#include "copic/llm/gateway.hpp"
#include "copic/orchestrator/config.hpp"
#include "copic/ppo/ppo.hpp"

namespace copic::orch {

struct CandidateRecord {
  planlang::Plan plan;
  std::string fault;  // non-empty when the program faulted and the plan was substituted
  double base_logit = 0.0;
  double base_score = 0.0;
  double prob = 0.0;  // after the trainable head
};

struct StepRecord {
  env::Observation obs;
  std::vector<CandidateRecord> candidates;
  int chosen = 0;
  double reward = 0.0;
  std::vector<env::RejectedAction> rejected;
};

struct EpisodeRecord {
  int round = 0;
  int episode = 0;
  bool success = false;
  int steps = 0;
  double total_reward = 0.0;
  llm::TokenCounts tokens;  // ledger after the episode
  std::vector<StepRecord> trace;
};

nlohmann::json to_json(const EpisodeRecord& e);
EpisodeRecord episode_from_json(const nlohmann::json& j);

struct EpisodeMetric {
  int round = 0;
  int episode = 0;
  bool success = false;
  int steps = 0;
  std::int64_t cost = 0;
};

struct Metrics {
  double sr = 0.0;
  double avg_step = 0.0;  // failed episodes count as the step cap
  std::int64_t cost = 0;
  std::vector<EpisodeMetric> episodes;
};

Metrics summarize(const std::vector<EpisodeMetric>& episodes, std::int64_t cost);

enum class RunStatus { kSolved, kRoundsExhausted };
std::string_view status_name(RunStatus s);

/// Instrumentation points. Every hook is optional.
struct Hooks {
  std::function<void(int round)> round_start;
  /// After a plan is selected and before the environment steps.
  std::function<void(std::int64_t global_step)> selection;
  /// Right before a fine-tune; `buffer_size` transitions are about to be used.
  std::function<void(std::int64_t global_step, std::size_t buffer_size)> fine_tune;
  std::function<void(const EpisodeRecord&)> episode_end;
  /// Between rounds, before the gateway is asked for new programs.
  std::function<void(int round, const llm::HistorySummary&)> evolve;
};

struct TrainResult {
  std::vector<planlang::PlanningProgram> programs;
  critic::CriticState theta;
  Metrics metrics;  // final round
  std::vector<Metrics> rounds;
  RunStatus status = RunStatus::kRoundsExhausted;
  std::int64_t global_steps = 0;
  int fine_tunes = 0;
  int evolutions = 0;
};

/// Plans with the current experts and critic. Owns the PPO trainer and
/// buffer, which persist across episodes and rounds.
class Orchestrator {
 public:
  /// `gateway` may be null for evaluation-only use. When `run_dir` is
  /// non-empty, training writes its artifacts there and nowhere else.
  Orchestrator(RunConfig cfg, std::shared_ptr<llm::LlmGateway> gateway,
               std::shared_ptr<const critic::ScorerBackend> backend, llm::TokenLedger& ledger,
               std::filesystem::path run_dir = {}, Hooks hooks = {});

  /// Runs one episode from reset until done. Train mode samples plans and
  /// feeds the PPO buffer; eval mode takes the argmax and never updates.
  EpisodeRecord run_episode(std::vector<planlang::PlanningProgram>& programs, critic::CriticState& theta,
                            env::UnitBuildEnv& env, Mode mode, std::mt19937_64& rng, int round = 0,
                            int episode = 0);

  /// Generate, then alternate N-episode planning phases with evolution until
  /// the round's SR reaches the threshold or max_rounds is hit. Resumes from
  /// run_dir/state.json when present.
  TrainResult training_loop();

  /// Training without the gateway: the programs stay fixed. Used by the
  /// ablation and the fixture tests.
  TrainResult train_frozen(std::vector<planlang::PlanningProgram> programs, critic::CriticState theta,
                           int rounds);

  /// Argmax selection on each task; no gateway calls and no theta updates.
  Metrics evaluate(std::vector<planlang::PlanningProgram> programs, const critic::CriticState& theta,
                   const std::vector<env::TaskSpec>& tasks, int episodes_per_task);

  std::int64_t global_steps() const { return global_step_; }
  int fine_tunes() const { return fine_tunes_; }
  const RunConfig& config() const { return cfg_; }

 private:
  Metrics run_round(std::vector<planlang::PlanningProgram>& programs, critic::CriticState& theta, int round,
                    std::vector<llm::EpisodeHistory>* history);
  void save_round(int round, const std::vector<planlang::PlanningProgram>& programs,
                  const critic::CriticState& theta, const Metrics& m, RunStatus* final_status);

  RunConfig cfg_;
  std::shared_ptr<llm::LlmGateway> gateway_;
  std::shared_ptr<const critic::ScorerBackend> backend_;
  llm::TokenLedger& ledger_;
  std::filesystem::path run_dir_;
  Hooks hooks_;
  ppo::PpoTrainer trainer_;
  ppo::RolloutBuffer buffer_;
  std::int64_t global_step_ = 0;
  int fine_tunes_ = 0;
};

/// Independent stream for (seed, round, episode).
std::mt19937_64 episode_rng(std::uint64_t seed, int round, int episode);

/// Program sources saved under run_dir/programs/gen_<g>/program_<id>.plan.
void save_programs(const std::filesystem::path& dir, const std::vector<planlang::PlanningProgram>& programs);
std::vector<planlang::PlanningProgram> load_programs(const std::filesystem::path& dir);

/// Reads every `<id>.plan` in a directory, ordered by id, applying
/// normalize_source. Throws ConfigError when the directory has none.
std::vector<planlang::PlanningProgram> load_plan_dir(const std::filesystem::path& dir);

/// Backend for the run: hash/table/http per config. In fixture mode a
/// critic_table.json in the fixture directory is used when present.
std::shared_ptr<const critic::ScorerBackend> make_run_backend(const RunConfig& cfg);

/// Live HTTP client (key from COPIC_API_KEY) or the fixture client.
std::shared_ptr<llm::ChatClient> make_chat_client(const RunConfig& cfg);

}  // namespace copic::orch
