#pragma once

#include <string>

#include "copic/planlang/ast.hpp"

namespace copic::planlang {

/// Canonical source for a module: 4-space indentation, double-quoted strings,
/// minimal parentheses. parse(pretty_print(m)) is structurally equal to m.
std::string pretty_print(const Module& module);

std::string pretty_print(const Expr& expr);

}  // namespace copic::planlang
