#pragma once

#include <map>
#include <set>
#include <string>
#include <string_view>

namespace copic::llm {

/// Names of the `{$name$}` placeholders in a template body.
std::set<std::string> placeholders(std::string_view body);

/// Substitutes every `{$name$}`. Inserted values are not rescanned, so code
/// containing braces is safe. Throws PreconditionError for a placeholder
/// without a binding or a binding the template never uses.
std::string render_template(std::string_view body, const std::map<std::string, std::string>& vars);

}  // namespace copic::llm
