#include "copic/env/tech_tree.hpp"

#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include <json.hpp>

#include "copic/assets_data.hpp"
#include "copic/errors.hpp"

namespace copic::env {

namespace {

TechEntry entry_from_json(const std::string& name, ItemKind kind, const nlohmann::json& j) {
  TechEntry e;
  e.name = name;
  e.kind = kind;
  e.cost_minerals = j.value("cost_minerals", 0);
  e.cost_gas = j.value("cost_gas", 0);
  e.supply = j.value("supply", 0);
  e.supply_provided = j.value("supply_provided", 0);
  e.build_ticks = j.value("build_ticks", 1);
  e.producer = j.value("producer", std::string{});
  e.prerequisites = j.value("prerequisites", std::vector<std::string>{});
  if (e.cost_minerals < 0 || e.cost_gas < 0 || e.supply < 0 || e.supply_provided < 0 ||
      e.build_ticks < 1) {
    throw ConfigError("tech tree: negative cost or non-positive build time for " + name);
  }
  return e;
}

}  // namespace

const TechTree& TechTree::canonical() {
  static const TechTree tree = from_json(assets::kTechTreeJson);
  return tree;
}

TechTree TechTree::from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("tech tree: ") + e.what());
  }
  TechTree tree;
  tree.supply_limit_ = j.value("supply_limit", 200);
  try {
    for (const auto& [name, body] : j.at("buildings").items()) {
      tree.entries_.emplace(name, entry_from_json(name, ItemKind::kBuilding, body));
    }
    for (const auto& [name, body] : j.at("units").items()) {
      if (tree.entries_.contains(name)) throw ConfigError("tech tree: duplicate name " + name);
      tree.entries_.emplace(name, entry_from_json(name, ItemKind::kUnit, body));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("tech tree: ") + e.what());
  }
  tree.validate();
  return tree;
}

TechTree TechTree::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open tech tree " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

const TechEntry* TechTree::find(std::string_view name) const {
  auto it = entries_.find(name);
  return it == entries_.end() ? nullptr : &it->second;
}

std::vector<std::string> TechTree::building_names() const {
  std::vector<std::string> out;
  for (const auto& [name, e] : entries_) {
    if (e.kind == ItemKind::kBuilding) out.push_back(name);
  }
  return out;
}

std::vector<std::string> TechTree::unit_names() const {
  std::vector<std::string> out;
  for (const auto& [name, e] : entries_) {
    if (e.kind == ItemKind::kUnit) out.push_back(name);
  }
  return out;
}

void TechTree::validate() const {
  auto require_building = [&](const std::string& owner, const std::string& b) {
    const TechEntry* e = find(b);
    if (e == nullptr || e->kind != ItemKind::kBuilding) {
      throw ConfigError("tech tree: " + owner + " references unknown building " + b);
    }
  };
  for (const auto& [name, e] : entries_) {
    if (e.kind == ItemKind::kUnit && e.producer.empty()) {
      throw ConfigError("tech tree: unit " + name + " has no producer");
    }
    if (!e.producer.empty()) require_building(name, e.producer);
    for (const auto& p : e.prerequisites) require_building(name, p);
  }
  // Depth-first cycle check over producer + prerequisite edges.
  std::map<std::string, int, std::less<>> state;  // 0 new, 1 active, 2 done
  std::function<void(const TechEntry&)> visit = [&](const TechEntry& e) {
    int& s = state[e.name];
    if (s == 2) return;
    if (s == 1) throw ConfigError("tech tree: prerequisite cycle through " + e.name);
    s = 1;
    if (!e.producer.empty()) visit(*find(e.producer));
    for (const auto& p : e.prerequisites) visit(*find(p));
    state[e.name] = 2;
  };
  for (const auto& [name, e] : entries_) visit(e);
}

}  // namespace copic::env
