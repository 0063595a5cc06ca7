#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "copic/env/observation.hpp"
#include "copic/env/tech_tree.hpp"

namespace copic::env {

inline constexpr int kMaxPlanLength = 5;
inline constexpr int kEpisodeTickCap = 200;

struct EnvConfig {
  int max_ticks = kEpisodeTickCap;
  int max_plan_length = kMaxPlanLength;
  int start_minerals = 50;
  int start_workers = 12;
  int minerals_per_worker = 5;
  int mineral_worker_cap = 16;
  int gas_per_worker = 4;
  int gas_workers_per_refinery = 3;
  // Items each producer building may hold at once (in progress or waiting).
  int producer_queue_slots = 1;
};

/// Available actions: "BUILD x" / "TRAIN x" whose producer and prerequisites
/// are complete. Affordability is not considered. Sorted lexically.
std::vector<std::string> action_space(const Observation& obs, const TechTree& tree);

/// Change-in-count reward with a -1 penalty on overshoot, summed over targets.
/// Counts include queued items. Targets may be zero here (the grid oracle
/// exercises that) even though TaskSpec requires >= 1.
double reward(const Observation& obs, const Observation& next_obs,
              std::span<const std::pair<std::string, int>> targets);
inline double reward(const Observation& obs, const Observation& next_obs, const TaskSpec& task) {
  return reward(obs, next_obs, task.targets);
}

bool task_complete(const Observation& obs, const TaskSpec& task);

struct RejectedAction {
  std::string action;
  std::string reason;
};

struct StepResult {
  Observation obs;
  double reward = 0.0;
  bool success = false;
  bool done = false;
  std::vector<std::string> accepted;
  std::vector<RejectedAction> rejected;
  // Actions that are not of the form "BUILD <NAME>" / "TRAIN <NAME>".
  std::vector<std::string> format_errors;
};

/// Economic totals for the conservation check.
struct Accounting {
  std::int64_t minerals_harvested = 0;
  std::int64_t minerals_spent = 0;
  std::int64_t gas_harvested = 0;
  std::int64_t gas_spent = 0;
};

/// Deterministic Terran unit-building simulator. One step executes a plan of
/// at most five actions and then advances one tick.
class UnitBuildEnv {
 public:
  explicit UnitBuildEnv(const TechTree& tree = TechTree::canonical(), EnvConfig config = {});

  /// The seed is accepted for interface symmetry; the simulator has no
  /// stochastic elements.
  Observation reset(const TaskSpec& task, std::uint64_t seed = 0);
  StepResult step(std::span<const std::string> plan);

  const Observation& observation() const { return obs_; }
  const TaskSpec& task() const { return task_; }
  const Accounting& accounting() const { return accounting_; }
  const TechTree& tree() const { return *tree_; }
  const EnvConfig& config() const { return config_; }
  bool done() const { return done_; }
  std::vector<std::string> available_actions() const { return action_space(obs_, *tree_); }

 private:
  struct Job {
    std::string name;
    ItemKind kind;
    std::string producer;
    int remaining;
  };

  bool try_start(const std::string& action, std::string& reason);
  void advance_tick();
  void refresh_derived();
  int jobs_for_producer(const std::string& producer) const;

  const TechTree* tree_;
  EnvConfig config_;
  TaskSpec task_;
  Observation obs_;
  std::vector<Job> jobs_;
  Accounting accounting_;
  bool done_ = true;
};

}  // namespace copic::env
