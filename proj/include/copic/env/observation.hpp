#pragma once

#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

namespace copic::env {

class TechTree;

struct Resources {
  int supply_cap = 0;
  int supply_left = 0;
  int minerals = 0;
  int gas = 0;

  bool operator==(const Resources&) const = default;
};

/// Snapshot of the game state handed to planners and the critic.
struct Observation {
  Resources resource;
  std::map<std::string, int, std::less<>> building;
  std::map<std::string, int, std::less<>> unit;
  std::map<std::string, int, std::less<>> in_production;
  int tick = 0;

  bool operator==(const Observation&) const = default;
};

enum class Difficulty { kEasy, kMedium, kHard };

std::string_view difficulty_name(Difficulty d);
Difficulty parse_difficulty(std::string_view text);

/// Target unit counts for one episode, in instruction order.
struct TaskSpec {
  std::vector<std::pair<std::string, int>> targets;
  Difficulty difficulty = Difficulty::kEasy;

  /// Throws ConfigError for unknown names, counts < 1, or units outside the
  /// difficulty's allowed set.
  void validate(const TechTree& tree) const;
  bool operator==(const TaskSpec&) const = default;
};

/// Reference instructions used by tests, fixtures and the CLI defaults.
TaskSpec reference_task(Difficulty d);

/// One line: "Resource: ... | Building: ... | Unit: ..." with zero counts
/// omitted and names in lexical order; an InProduction section follows when
/// anything is queued.
std::string render_text(const Observation& obs);

/// "SCV=16 SIEGETANK=2 ..." in instruction order.
std::string render_targets(const TaskSpec& task);

nlohmann::json to_json(const Observation& obs);
Observation observation_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TaskSpec& task);
TaskSpec task_from_json(const nlohmann::json& j);

/// Completed plus queued instances of `name`; absent entries count as zero.
int unit_count(const Observation& obs, std::string_view name);

}  // namespace copic::env
