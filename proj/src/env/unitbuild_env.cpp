#include "copic/env/unitbuild_env.hpp"

#include <algorithm>
#include <regex>

#include "copic/errors.hpp"

namespace copic::env {

namespace {

const std::regex& action_pattern() {
  static const std::regex re("^(BUILD|TRAIN) ([A-Z][A-Z0-9_]*)$");
  return re;
}

}  // namespace

std::vector<std::string> action_space(const Observation& obs, const TechTree& tree) {
  std::vector<std::string> out;
  for (const auto& [name, e] : tree.entries()) {
    if (!tree.unlocked(e, obs.building)) continue;
    out.push_back((e.kind == ItemKind::kBuilding ? "BUILD " : "TRAIN ") + name);
  }
  std::sort(out.begin(), out.end());
  return out;
}

double reward(const Observation& obs, const Observation& next_obs,
              std::span<const std::pair<std::string, int>> targets) {
  constexpr double kNegativeScale = -1.0;
  double r = 0.0;
  for (const auto& [name, target] : targets) {
    const int before = unit_count(obs, name);
    const int after = unit_count(next_obs, name);
    if (before >= target) {
      r += kNegativeScale * (after - before);
    } else if (after <= target) {
      r += after - before;
    } else {
      r += (target - before) + kNegativeScale * (after - target);
    }
  }
  return r;
}

bool task_complete(const Observation& obs, const TaskSpec& task) {
  return std::all_of(task.targets.begin(), task.targets.end(), [&](const auto& t) {
    auto it = obs.unit.find(t.first);
    return it != obs.unit.end() && it->second >= t.second;
  });
}

UnitBuildEnv::UnitBuildEnv(const TechTree& tree, EnvConfig config)
    : tree_(&tree), config_(config) {}

Observation UnitBuildEnv::reset(const TaskSpec& task, std::uint64_t /*seed*/) {
  task.validate(*tree_);
  task_ = task;
  jobs_.clear();
  accounting_ = {};
  obs_ = {};
  for (const auto& b : tree_->building_names()) obs_.building[b] = 0;
  for (const auto& u : tree_->unit_names()) obs_.unit[u] = 0;
  obs_.building["COMMANDCENTER"] = 1;
  obs_.unit["SCV"] = config_.start_workers;
  obs_.resource.minerals = config_.start_minerals;
  obs_.tick = 0;
  refresh_derived();
  done_ = false;
  return obs_;
}

int UnitBuildEnv::jobs_for_producer(const std::string& producer) const {
  return static_cast<int>(std::count_if(jobs_.begin(), jobs_.end(), [&](const Job& j) {
    return j.kind == ItemKind::kUnit && j.producer == producer;
  }));
}

bool UnitBuildEnv::try_start(const std::string& action, std::string& reason) {
  const auto space = action_space(obs_, *tree_);
  if (!std::binary_search(space.begin(), space.end(), action)) {
    reason = "not in action space";
    return false;
  }
  const TechEntry& e = *tree_->find(action.substr(6));
  if (obs_.resource.minerals < e.cost_minerals) {
    reason = "insufficient minerals";
    return false;
  }
  if (obs_.resource.gas < e.cost_gas) {
    reason = "insufficient gas";
    return false;
  }
  if (e.kind == ItemKind::kUnit) {
    if (obs_.resource.supply_left < e.supply) {
      reason = "insufficient supply";
      return false;
    }
    const int capacity = obs_.building.at(e.producer) * config_.producer_queue_slots;
    if (jobs_for_producer(e.producer) >= capacity) {
      reason = "producer busy";
      return false;
    }
  }
  obs_.resource.minerals -= e.cost_minerals;
  obs_.resource.gas -= e.cost_gas;
  accounting_.minerals_spent += e.cost_minerals;
  accounting_.gas_spent += e.cost_gas;
  jobs_.push_back({e.name, e.kind, e.producer, e.build_ticks});
  refresh_derived();
  return true;
}

void UnitBuildEnv::advance_tick() {
  const int workers = obs_.unit.at("SCV");
  const int mined = config_.minerals_per_worker * std::min(workers, config_.mineral_worker_cap);
  const int refineries = obs_.building.at("REFINERY");
  const int gas_workers = std::min(workers, config_.gas_workers_per_refinery * refineries);
  const int gas = config_.gas_per_worker * gas_workers;
  obs_.resource.minerals += mined;
  obs_.resource.gas += gas;
  accounting_.minerals_harvested += mined;
  accounting_.gas_harvested += gas;

  // Structures build in parallel; units advance only on the first
  // `count(producer)` jobs queued for that producer.
  std::map<std::string, int, std::less<>> lanes_used;
  std::vector<Job> finished;
  for (auto& job : jobs_) {
    if (job.kind == ItemKind::kUnit) {
      int& used = lanes_used[job.producer];
      if (used >= obs_.building.at(job.producer)) continue;
      ++used;
    }
    if (--job.remaining == 0) finished.push_back(job);
  }
  std::erase_if(jobs_, [](const Job& j) { return j.remaining == 0; });
  for (const auto& job : finished) {
    auto& counts = job.kind == ItemKind::kBuilding ? obs_.building : obs_.unit;
    counts[job.name] += 1;
  }
  ++obs_.tick;
  refresh_derived();
}

void UnitBuildEnv::refresh_derived() {
  int cap = 0;
  int used = 0;
  for (const auto& [name, count] : obs_.building) {
    if (const TechEntry* e = tree_->find(name)) cap += e->supply_provided * count;
  }
  for (const auto& [name, count] : obs_.unit) {
    if (const TechEntry* e = tree_->find(name)) used += e->supply * count;
  }
  obs_.in_production.clear();
  for (const auto& job : jobs_) {
    obs_.in_production[job.name] += 1;
    if (job.kind == ItemKind::kUnit) used += tree_->find(job.name)->supply;
  }
  obs_.resource.supply_cap = std::min(cap, tree_->supply_limit());
  obs_.resource.supply_left = obs_.resource.supply_cap - used;
}

StepResult UnitBuildEnv::step(std::span<const std::string> plan) {
  if (done_) throw PreconditionError("step() on a finished episode; call reset()");
  if (static_cast<int>(plan.size()) > config_.max_plan_length) {
    throw PreconditionError("plan has " + std::to_string(plan.size()) + " actions; limit is " +
                            std::to_string(config_.max_plan_length));
  }
  const Observation before = obs_;
  StepResult result;
  for (const auto& action : plan) {
    if (!std::regex_match(action, action_pattern())) {
      result.format_errors.push_back(action);
      result.rejected.push_back({action, "malformed action"});
      continue;
    }
    std::string reason;
    if (try_start(action, reason)) {
      result.accepted.push_back(action);
    } else {
      result.rejected.push_back({action, reason});
    }
  }
  advance_tick();
  result.obs = obs_;
  result.reward = reward(before, obs_, task_);
  result.success = task_complete(obs_, task_);
  result.done = result.success || obs_.tick >= config_.max_ticks;
  done_ = result.done;
  return result;
}

}  // namespace copic::env
