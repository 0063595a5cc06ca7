#include "copic/env/observation.hpp"

#include <algorithm>
#include <array>
#include <sstream>

#include "copic/env/tech_tree.hpp"
#include "copic/errors.hpp"

namespace copic::env {

namespace {

constexpr std::array<std::string_view, 2> kEasyUnits{"SCV", "BATTLECRUISER"};
constexpr std::array<std::string_view, 4> kMediumUnits{"SCV", "THOR", "BANSHEE", "RAVEN"};
constexpr std::array<std::string_view, 5> kHardUnits{"SCV", "SIEGETANK", "VIKINGFIGHTER",
                                                     "MEDIVAC", "GHOST"};

template <std::size_t N>
bool allowed(const std::array<std::string_view, N>& set, std::string_view name) {
  return std::find(set.begin(), set.end(), name) != set.end();
}

void render_counts(std::ostringstream& out, const std::map<std::string, int, std::less<>>& m) {
  for (const auto& [name, count] : m) {
    if (count != 0) out << ' ' << name << '=' << count;
  }
}

}  // namespace

std::string_view difficulty_name(Difficulty d) {
  switch (d) {
    case Difficulty::kEasy:
      return "easy";
    case Difficulty::kMedium:
      return "medium";
    case Difficulty::kHard:
      return "hard";
  }
  return "easy";
}

Difficulty parse_difficulty(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "easy") return Difficulty::kEasy;
  if (lower == "medium") return Difficulty::kMedium;
  if (lower == "hard") return Difficulty::kHard;
  throw ConfigError("unknown difficulty '" + std::string(text) + "'");
}

void TaskSpec::validate(const TechTree& tree) const {
  if (targets.empty()) throw ConfigError("task has no targets");
  for (const auto& [name, count] : targets) {
    const TechEntry* e = tree.find(name);
    if (e == nullptr || e->kind != ItemKind::kUnit) {
      throw ConfigError("unknown unit name in task targets: " + name);
    }
    if (count < 1) throw ConfigError("target count for " + name + " must be >= 1");
    bool ok = false;
    switch (difficulty) {
      case Difficulty::kEasy:
        ok = allowed(kEasyUnits, name);
        break;
      case Difficulty::kMedium:
        ok = allowed(kMediumUnits, name);
        break;
      case Difficulty::kHard:
        ok = allowed(kHardUnits, name);
        break;
    }
    if (!ok) {
      throw ConfigError("unit " + name + " is not part of the " +
                        std::string(difficulty_name(difficulty)) + " task set");
    }
  }
}

TaskSpec reference_task(Difficulty d) {
  switch (d) {
    case Difficulty::kEasy:
      return {{{"SCV", 16}, {"BATTLECRUISER", 1}}, Difficulty::kEasy};
    case Difficulty::kMedium:
      return {{{"SCV", 16}, {"THOR", 3}, {"BANSHEE", 3}, {"RAVEN", 4}}, Difficulty::kMedium};
    case Difficulty::kHard:
      return {{{"SCV", 16}, {"SIEGETANK", 2}, {"VIKINGFIGHTER", 2}, {"MEDIVAC", 2}, {"GHOST", 2}},
              Difficulty::kHard};
  }
  return {};
}

std::string render_text(const Observation& obs) {
  std::ostringstream out;
  out << "Resource: supply_cap=" << obs.resource.supply_cap
      << " supply_left=" << obs.resource.supply_left << " minerals=" << obs.resource.minerals
      << " gas=" << obs.resource.gas << " | Building:";
  render_counts(out, obs.building);
  out << " | Unit:";
  render_counts(out, obs.unit);
  bool queued = std::any_of(obs.in_production.begin(), obs.in_production.end(),
                            [](const auto& kv) { return kv.second != 0; });
  if (queued) {
    out << " | InProduction:";
    render_counts(out, obs.in_production);
  }
  return out.str();
}

std::string render_targets(const TaskSpec& task) {
  std::ostringstream out;
  bool first = true;
  for (const auto& [name, count] : task.targets) {
    if (!first) out << ' ';
    first = false;
    out << name << '=' << count;
  }
  return out.str();
}

nlohmann::json to_json(const Observation& obs) {
  nlohmann::json j;
  j["Resource"] = {{"supply_cap", obs.resource.supply_cap},
                   {"supply_left", obs.resource.supply_left},
                   {"minerals", obs.resource.minerals},
                   {"gas", obs.resource.gas}};
  j["Building"] = nlohmann::json::object();
  for (const auto& [k, v] : obs.building) j["Building"][k] = v;
  j["Unit"] = nlohmann::json::object();
  for (const auto& [k, v] : obs.unit) j["Unit"][k] = v;
  j["InProduction"] = nlohmann::json::object();
  for (const auto& [k, v] : obs.in_production) j["InProduction"][k] = v;
  j["tick"] = obs.tick;
  return j;
}

Observation observation_from_json(const nlohmann::json& j) {
  Observation obs;
  try {
    const auto& r = j.at("Resource");
    obs.resource.supply_cap = r.value("supply_cap", 0);
    obs.resource.supply_left = r.value("supply_left", 0);
    obs.resource.minerals = r.value("minerals", 0);
    obs.resource.gas = r.value("gas", 0);
    for (const char* key : {"Building", "Unit", "InProduction"}) {
      if (!j.contains(key)) continue;
      auto& dest = std::string_view(key) == "Building" ? obs.building
                   : std::string_view(key) == "Unit"   ? obs.unit
                                                       : obs.in_production;
      for (const auto& [k, v] : j.at(key).items()) {
        int count = v.get<int>();
        if (count < 0) throw ConfigError("negative count for " + k);
        dest[k] = count;
      }
    }
    obs.tick = j.value("tick", 0);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("observation: ") + e.what());
  }
  return obs;
}

nlohmann::json to_json(const TaskSpec& task) {
  nlohmann::json targets = nlohmann::json::array();
  for (const auto& [name, count] : task.targets) targets.push_back({name, count});
  return {{"difficulty", difficulty_name(task.difficulty)}, {"targets", targets}};
}

TaskSpec task_from_json(const nlohmann::json& j) {
  TaskSpec task;
  try {
    task.difficulty = parse_difficulty(j.at("difficulty").get<std::string>());
    const auto& t = j.at("targets");
    if (t.is_array()) {
      for (const auto& pair : t) {
        task.targets.emplace_back(pair.at(0).get<std::string>(), pair.at(1).get<int>());
      }
    } else {
      // Object form keeps the document's key order only with ordered_json;
      // plain objects are read in lexical order.
      for (const auto& [k, v] : t.items()) task.targets.emplace_back(k, v.get<int>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("task: ") + e.what());
  }
  return task;
}

int unit_count(const Observation& obs, std::string_view name) {
  int count = 0;
  if (auto it = obs.unit.find(name); it != obs.unit.end()) count += it->second;
  if (auto it = obs.in_production.find(name); it != obs.in_production.end()) count += it->second;
  return count;
}

}  // namespace copic::env
