#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace copic::env {

enum class ItemKind { kBuilding, kUnit };

struct TechEntry {
  std::string name;
  ItemKind kind = ItemKind::kBuilding;
  int cost_minerals = 0;
  int cost_gas = 0;
  int supply = 0;           // supply consumed (units)
  int supply_provided = 0;  // supply granted once completed (buildings)
  int build_ticks = 1;
  // Building that trains the unit or hosts the add-on; empty for structures
  // placed by workers.
  std::string producer;
  std::vector<std::string> prerequisites;
};

/// Costs, build times and prerequisite graph of every producible item.
class TechTree {
 public:
  /// The tree shipped in assets/tech_tree.json.
  static const TechTree& canonical();
  static TechTree from_json(std::string_view text);
  static TechTree load(const std::filesystem::path& path);

  const TechEntry* find(std::string_view name) const;
  const std::map<std::string, TechEntry, std::less<>>& entries() const { return entries_; }
  std::vector<std::string> building_names() const;
  std::vector<std::string> unit_names() const;
  int supply_limit() const { return supply_limit_; }

  /// True when every prerequisite and the producer (if any) has at least one
  /// completed instance in `buildings`.
  template <typename Counts>
  bool unlocked(const TechEntry& entry, const Counts& buildings) const {
    auto has = [&](const std::string& b) {
      auto it = buildings.find(b);
      return it != buildings.end() && it->second > 0;
    };
    if (!entry.producer.empty() && !has(entry.producer)) return false;
    for (const auto& p : entry.prerequisites) {
      if (!has(p)) return false;
    }
    return true;
  }

 private:
  void validate() const;

  std::map<std::string, TechEntry, std::less<>> entries_;
  int supply_limit_ = 200;
};

}  // namespace copic::env
