#pragma once

// Line-by-line transcription of the reference building reward, kept apart
// from the library implementation so the two can be compared.

#include <map>
#include <string>
#include <utility>

namespace copic::test {

// (completed, under construction) per unit name.
using CountPairs = std::map<std::string, std::pair<int, int>>;

inline std::pair<int, int> obtain_unit_count(const CountPairs& obs, const std::string& k) {
  auto it = obs.find(k);
  return it == obs.end() ? std::pair<int, int>{0, 0} : it->second;
}

inline double building_ins_reward(const CountPairs& obs, const CountPairs& next_obs,
                                  const std::map<std::string, int>& parsed_ins) {
  double reward = 0;
  const int negative_reward_scale = -1;
  for (const auto& [k, target] : parsed_ins) {
    auto [c_k_obs, u_k_obs] = obtain_unit_count(obs, k);
    auto [c_k_next_obs, u_k_next_obs] = obtain_unit_count(next_obs, k);
    const int k_obs = c_k_obs + u_k_obs;
    const int k_next_obs = c_k_next_obs + u_k_next_obs;
    if (k_obs >= target) {
      reward += negative_reward_scale * (k_next_obs - k_obs);
    } else {
      if (k_next_obs <= target) {
        reward += k_next_obs - k_obs;
      } else {
        reward += ((target - k_obs) + negative_reward_scale * (k_next_obs - target));
      }
    }
  }
  return reward;
}

}  // namespace copic::test
