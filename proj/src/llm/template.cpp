#include "copic/llm/template.hpp"

#include <cctype>

#include "copic/errors.hpp"

namespace copic::llm {

namespace {

constexpr std::string_view kOpen = "{$";
constexpr std::string_view kClose = "$}";

bool valid_name(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) return false;
  }
  return true;
}

// Calls on_text / on_name for the pieces of `body`, in order.
template <typename Text, typename Name>
void scan(std::string_view body, Text on_text, Name on_name) {
  std::size_t pos = 0;
  while (pos < body.size()) {
    const auto open = body.find(kOpen, pos);
    if (open == std::string_view::npos) break;
    const auto close = body.find(kClose, open + kOpen.size());
    if (close == std::string_view::npos) break;
    const auto name = body.substr(open + kOpen.size(), close - open - kOpen.size());
    if (!valid_name(name)) {
      on_text(body.substr(pos, open + 1 - pos));
      pos = open + 1;
      continue;
    }
    on_text(body.substr(pos, open - pos));
    on_name(std::string(name));
    pos = close + kClose.size();
  }
  on_text(body.substr(pos));
}

}  // namespace

std::set<std::string> placeholders(std::string_view body) {
  std::set<std::string> out;
  scan(body, [](std::string_view) {}, [&](const std::string& n) { out.insert(n); });
  return out;
}

std::string render_template(std::string_view body, const std::map<std::string, std::string>& vars) {
  std::string out;
  std::set<std::string> used;
  scan(
      body, [&](std::string_view t) { out += t; },
      [&](const std::string& n) {
        auto it = vars.find(n);
        if (it == vars.end()) throw PreconditionError("template placeholder {$" + n + "$} is unbound");
        used.insert(n);
        out += it->second;
      });
  for (const auto& [k, v] : vars) {
    if (!used.contains(k)) throw PreconditionError("template has no placeholder {$" + k + "$}");
  }
  return out;
}

}  // namespace copic::llm
