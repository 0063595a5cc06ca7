#pragma once

#include <string_view>

#include "copic/planlang/ast.hpp"

namespace copic::planlang {

inline constexpr std::string_view kEntryFunction = "planner";
inline constexpr int kEntryArity = 3;

/// Syntax-level parse of a PlanLang module. Throws ParseError (with line and
/// column) or UnsupportedConstruct when the source leaves the subset.
Module parse(std::string_view source);

/// parse() plus program checks: the module must define planner(obs,
/// action_space, task), call only builtins or functions it defines, and keep
/// top-level code to imports, definitions, assignments and docstrings.
Module parse_program(std::string_view source);

bool is_builtin_function(std::string_view name);
bool is_math_function(std::string_view name);
bool is_collection_method(std::string_view name);

}  // namespace copic::planlang
