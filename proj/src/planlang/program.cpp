#include <regex>

#include "copic/planlang/parser.hpp"
#include "copic/planlang/program.hpp"

namespace copic::planlang {

PlanningProgram PlanningProgram::from_source(int id, std::string source, int generation) {
  PlanningProgram p;
  p.id = id;
  p.ast = parse_program(source);
  p.source = std::move(source);
  p.generation = generation;
  return p;
}

PlanningProgram PlanningProgram::faulted(int id, std::string source, std::string reason,
                                         int generation) {
  PlanningProgram p;
  p.id = id;
  p.source = std::move(source);
  p.generation = generation;
  p.fault = reason.empty() ? "program unavailable" : std::move(reason);
  return p;
}

std::string normalize_source(const std::string& source) {
  static const std::regex kPopFront(R"(\.pop\(\s*0\s*\))");
  // dict(sorted(X.items(), key=lambda v: v[i]))
  static const std::regex kDictSorted(
      R"(dict\(\s*sorted\(\s*([A-Za-z_]\w*)\.items\(\)\s*,\s*key\s*=\s*lambda\s+(\w+)\s*:\s*\2\s*\[\s*([01])\s*\]\s*\)\s*\))");
  // sorted(X, key=lambda v: v[i]) on a plain name or X.items()
  static const std::regex kSortedKey(
      R"(sorted\(\s*([A-Za-z_]\w*(?:\.items\(\))?)\s*,\s*key\s*=\s*lambda\s+(\w+)\s*:\s*\2\s*\[\s*(\d+)\s*\]\s*\))");
  std::string out = std::regex_replace(source, kPopFront, ".pop_front()");
  out = std::regex_replace(out, kDictSorted, "$1.sorted_by($3)");
  out = std::regex_replace(out, kSortedKey, "$1.sorted_by($3)");
  return out;
}

}  // namespace copic::planlang
