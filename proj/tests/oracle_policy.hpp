#pragma once

// Hand-written build-order policy used to show the reference tasks are
// reachable and to script long episodes for corpus checks.

#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include "copic/env/unitbuild_env.hpp"

namespace copic::test {

inline int count_with_queue(const env::Observation& obs, const std::string& name) {
  auto get = [&](const auto& m) {
    auto it = m.find(name);
    return it == m.end() ? 0 : it->second;
  };
  return get(obs.building) + get(obs.unit) + get(obs.in_production);
}

/// Buildings needed (transitively) to produce every target unit.
inline std::vector<std::string> required_buildings(const env::TaskSpec& task,
                                                   const env::TechTree& tree) {
  std::set<std::string> need;
  std::vector<std::string> stack;
  for (const auto& [name, n] : task.targets) stack.push_back(name);
  while (!stack.empty()) {
    std::string cur = stack.back();
    stack.pop_back();
    const env::TechEntry* e = tree.find(cur);
    std::vector<std::string> deps = e->prerequisites;
    if (!e->producer.empty()) deps.push_back(e->producer);
    for (const auto& d : deps) {
      if (need.insert(d).second) stack.push_back(d);
    }
  }
  // Order by dependency depth so that parents come first.
  std::vector<std::string> out(need.begin(), need.end());
  auto depth = [&](const std::string& n) {
    int d = 0;
    std::vector<std::pair<std::string, int>> st{{n, 0}};
    while (!st.empty()) {
      auto [cur, k] = st.back();
      st.pop_back();
      d = std::max(d, k);
      const env::TechEntry* e = tree.find(cur);
      for (const auto& p : e->prerequisites) st.push_back({p, k + 1});
      if (!e->producer.empty()) st.push_back({e->producer, k + 1});
    }
    return d;
  };
  std::stable_sort(out.begin(), out.end(),
                   [&](const auto& a, const auto& b) { return depth(a) < depth(b); });
  return out;
}

/// Greedy plan: supply, gas, missing tech, workers, then target units.
inline std::vector<std::string> oracle_plan(const env::Observation& obs, const env::TaskSpec& task,
                                            const env::TechTree& tree) {
  const auto space = env::action_space(obs, tree);
  auto available = [&](const std::string& a) {
    return std::binary_search(space.begin(), space.end(), a);
  };
  std::vector<std::string> plan;
  auto add = [&](const std::string& a) {
    if (plan.size() < static_cast<std::size_t>(env::kMaxPlanLength) && available(a)) plan.push_back(a);
  };
  const auto& in_prod = obs.in_production;
  auto queued = [&](const std::string& n) {
    auto it = in_prod.find(n);
    return it == in_prod.end() ? 0 : it->second;
  };
  if (obs.resource.supply_left < 8 && queued("SUPPLYDEPOT") == 0 &&
      obs.resource.supply_cap < tree.supply_limit()) {
    add("BUILD SUPPLYDEPOT");
  }
  if (count_with_queue(obs, "REFINERY") < 2) add("BUILD REFINERY");
  for (const auto& b : required_buildings(task, tree)) {
    if (count_with_queue(obs, b) == 0) add("BUILD " + b);
  }
  int scv_goal = 16;
  for (const auto& [name, n] : task.targets) {
    if (name == "SCV") scv_goal = std::max(scv_goal, n);
  }
  if (count_with_queue(obs, "SCV") < scv_goal) add("TRAIN SCV");
  for (const auto& [name, n] : task.targets) {
    if (name != "SCV" && count_with_queue(obs, name) < n) add("TRAIN " + name);
  }
  return plan;
}

/// Observations of an oracle-driven Hard episode whose targets are out of
/// reach, so it runs the full tick cap. Includes the initial observation.
inline std::vector<env::Observation> scripted_hard_episode() {
  env::TaskSpec task{{{"SCV", 40}, {"SIEGETANK", 9}, {"VIKINGFIGHTER", 9}, {"MEDIVAC", 9}, {"GHOST", 9}},
                     env::Difficulty::kHard};
  env::UnitBuildEnv env;
  std::vector<env::Observation> out{env.reset(task)};
  while (!env.done()) {
    auto plan = oracle_plan(env.observation(), task, env.tree());
    out.push_back(env.step(plan).obs);
  }
  return out;
}

}  // namespace copic::test
