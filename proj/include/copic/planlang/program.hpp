#pragma once

#include <string>
#include <vector>

#include "copic/env/observation.hpp"
#include "copic/planlang/ast.hpp"

namespace copic::planlang {

struct ProgramStats {
  int episodes_used = 0;
  int times_chosen = 0;
};

/// One expert: a PlanLang planner and its bookkeeping.
struct PlanningProgram {
  int id = 0;
  std::string source;
  Module ast;
  int generation = 0;
  ProgramStats stats;
  // Non-empty when the source never parsed; evaluation then faults
  // immediately and the caller substitutes an empty plan.
  std::string fault;

  /// Parses and validates `source`; throws ParseError/UnsupportedConstruct.
  static PlanningProgram from_source(int id, std::string source, int generation = 0);
  /// A placeholder expert for a program that could not be obtained.
  static PlanningProgram faulted(int id, std::string source, std::string reason,
                                 int generation = 0);
  bool ok() const { return fault.empty(); }
};

struct Plan {
  std::vector<std::string> actions;
  int source_program = 0;

  bool operator==(const Plan&) const = default;
};

struct SandboxLimits {
  int max_interp_steps = 10'000;
  int max_collection_len = 1'000;
  int max_call_depth = 16;

  /// Throws PreconditionError unless every limit is positive.
  void validate() const;
};

struct EvalStats {
  int steps = 0;
};

/// Runs planner(obs, action_space, task) in the sandbox. The inputs are
/// copied into fresh values, so the program cannot touch caller state.
/// The returned plan is truncated to the first five actions.
/// Throws ProgramFault on runtime errors and SandboxBudgetExceeded when a
/// limit trips.
Plan evaluate(const PlanningProgram& program, const env::Observation& obs,
              const std::vector<std::string>& action_space, const env::TaskSpec& task,
              const SandboxLimits& limits = {}, EvalStats* stats = nullptr);

/// Rewrites the two Python idioms the subset spells differently:
/// `.pop(0)` becomes `.pop_front()`, and
/// `dict(sorted(X.items(), key=lambda v: v[i]))` becomes `X.sorted_by(i)`.
/// Everything else is left alone.
std::string normalize_source(const std::string& source);

}  // namespace copic::planlang
