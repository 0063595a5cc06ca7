#pragma once

// Random table-backend scoring problems plus a direct evaluation of the
// length-normalized softmax that never touches the library's scoring code.

#include <cmath>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "copic/critic/scorer_backend.hpp"
#include "copic/planlang/program.hpp"

namespace copic::test {

struct ScoringProblem {
  critic::TableBackend table{-10.0};
  std::string prompt;
  std::vector<planlang::Plan> candidates;
  // Oracle copies of the table contents.
  std::map<std::string, double> any_context;
  std::map<std::string, double> this_context;
  double fallback = -10.0;
};

inline ScoringProblem random_scoring_problem(std::mt19937_64& rng) {
  static const std::vector<std::string> kVerbs{"BUILD", "TRAIN"};
  static const std::vector<std::string> kNames{"SCV;", "SCV", "GHOST;", "GHOST", "REFINERY;",
                                               "REFINERY", "FACTORY", "FACTORY;", "MEDIVAC",
                                               "do", "nothing", "STARPORT;"};
  std::uniform_real_distribution<double> lp(-8.0, -0.01);
  ScoringProblem p;
  p.prompt = "prompt #" + std::to_string(rng() % 100000) + "\nChosen plan:";
  std::vector<std::string> vocab = kVerbs;
  vocab.insert(vocab.end(), kNames.begin(), kNames.end());
  for (const auto& w : vocab) {
    const auto roll = rng() % 3;
    if (roll == 0) {
      const double v = lp(rng);
      p.table.set_any_context(w, v);
      p.any_context[w] = v;
    } else if (roll == 1) {
      const double v = lp(rng);
      p.table.set(p.prompt, w, v);
      p.this_context[w] = v;
      // A decoy entry under a different context must not leak in.
      p.table.set(p.prompt + "x", w, lp(rng));
    }
  }
  const int n = 1 + static_cast<int>(rng() % 6);
  for (int i = 0; i < n; ++i) {
    planlang::Plan plan;
    const int len = static_cast<int>(rng() % 6);
    for (int k = 0; k < len; ++k) {
      std::string name = kNames[rng() % kNames.size()];
      if (name.back() == ';') name.pop_back();
      plan.actions.push_back(kVerbs[rng() % 2] + " " + name);
    }
    p.candidates.push_back(plan);
  }
  return p;
}

/// Expected (logit, score) per candidate.
inline std::vector<std::pair<double, double>> oracle_scores(const ScoringProblem& p) {
  std::vector<double> logits;
  for (const auto& plan : p.candidates) {
    std::string text;
    for (std::size_t i = 0; i < plan.actions.size(); ++i) text += (i ? "; " : "") + plan.actions[i];
    if (text.empty()) text = "do nothing";
    std::istringstream words(text);
    std::string w;
    double sum = 0.0;
    int count = 0;
    while (words >> w) {
      ++count;
      if (auto it = p.this_context.find(w); it != p.this_context.end()) {
        sum += it->second;
      } else if (auto jt = p.any_context.find(w); jt != p.any_context.end()) {
        sum += jt->second;
      } else {
        sum += p.fallback;
      }
    }
    logits.push_back(sum / count);
  }
  long double z = 0;
  for (double l : logits) z += std::exp(static_cast<long double>(l));
  std::vector<std::pair<double, double>> out;
  for (double l : logits) out.push_back({l, static_cast<double>(std::exp(static_cast<long double>(l)) / z)});
  return out;
}

}  // namespace copic::test
