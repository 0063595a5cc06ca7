#include "copic/orchestrator/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "copic/env/tech_tree.hpp"
#include "copic/env/unitbuild_env.hpp"
#include "copic/errors.hpp"

namespace copic::orch {

namespace {

enum class Kind { kString, kNumber, kBool };

struct Value {
  Kind kind;
  std::string text;  // unquoted
};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

// `loose` (command-line overrides) lets bare words stand for strings.
Value parse_value(const std::string& raw, bool loose, const std::string& where) {
  if (raw.size() >= 2 && raw.front() == '"' && raw.back() == '"') {
    std::string out;
    for (std::size_t i = 1; i + 1 < raw.size(); ++i) {
      if (raw[i] == '\\' && i + 2 < raw.size()) {
        ++i;
        out += raw[i] == 'n' ? '\n' : raw[i];
      } else if (raw[i] == '"') {
        throw ConfigError(where + ": stray quote in string");
      } else {
        out += raw[i];
      }
    }
    return {Kind::kString, out};
  }
  if (raw == "true" || raw == "false") return {Kind::kBool, raw};
  double d;
  const auto [p, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), d);
  if (!raw.empty() && ec == std::errc() && p == raw.data() + raw.size()) return {Kind::kNumber, raw};
  if (loose) return {Kind::kString, raw};
  throw ConfigError(where + ": cannot read value '" + raw + "' (strings need double quotes)");
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

std::string fmt_double(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  std::string s = out.str();
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

template <typename T>
T as_integer(const Value& v, const std::string& key) {
  if (v.kind != Kind::kNumber) throw ConfigError(key + ": expected an integer");
  T out;
  const auto [p, ec] = std::from_chars(v.text.data(), v.text.data() + v.text.size(), out);
  if (ec != std::errc() || p != v.text.data() + v.text.size()) {
    throw ConfigError(key + ": expected an integer, got '" + v.text + "'");
  }
  return out;
}

double as_double(const Value& v, const std::string& key) {
  if (v.kind != Kind::kNumber) throw ConfigError(key + ": expected a number");
  return std::stod(v.text);
}

std::string as_string(const Value& v, const std::string& key) {
  if (v.kind != Kind::kString) throw ConfigError(key + ": expected a string");
  return v.text;
}

env::Difficulty parse_difficulty(const std::string& s) {
  if (s == "easy") return env::Difficulty::kEasy;
  if (s == "medium") return env::Difficulty::kMedium;
  if (s == "hard") return env::Difficulty::kHard;
  throw ConfigError("difficulty: expected easy, medium or hard, got '" + s + "'");
}

struct Key {
  std::string name;
  std::function<void(RunConfig&, const Value&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define INT_KEY(NAME, FIELD)                                                          \
  Key {                                                                              \
    NAME, [](RunConfig& c, const Value& v) { c.FIELD = as_integer<decltype(c.FIELD)>(v, NAME); }, \
        [](const RunConfig& c) { return std::to_string(c.FIELD); }                   \
  }
#define DOUBLE_KEY(NAME, FIELD)                                                  \
  Key {                                                                         \
    NAME, [](RunConfig& c, const Value& v) { c.FIELD = as_double(v, NAME); },   \
        [](const RunConfig& c) { return fmt_double(c.FIELD); }                  \
  }
#define STRING_KEY(NAME, FIELD)                                                 \
  Key {                                                                        \
    NAME, [](RunConfig& c, const Value& v) { c.FIELD = as_string(v, NAME); },  \
        [](const RunConfig& c) { return quote(c.FIELD); }                      \
  }

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      INT_KEY("n", n),
      INT_KEY("N", N),
      INT_KEY("M", M),
      INT_KEY("K", K),
      DOUBLE_KEY("threshold", threshold),
      INT_KEY("T_max", T_max),
      INT_KEY("seed", seed),
      Key{"mode",
          [](RunConfig& c, const Value& v) {
            const auto s = as_string(v, "mode");
            if (s == "train") c.mode = Mode::kTrain;
            else if (s == "eval") c.mode = Mode::kEval;
            else throw ConfigError("mode: expected train or eval, got '" + s + "'");
          },
          [](const RunConfig& c) { return quote(c.mode == Mode::kTrain ? "train" : "eval"); }},
      Key{"difficulty",
          [](RunConfig& c, const Value& v) { c.task.difficulty = parse_difficulty(as_string(v, "difficulty")); },
          [](const RunConfig& c) { return quote(std::string(env::difficulty_name(c.task.difficulty))); }},
      Key{"task",
          [](RunConfig& c, const Value& v) { c.task = parse_task(as_string(v, "task"), c.task.difficulty); },
          [](const RunConfig& c) { return quote(format_task(c.task)); }},
      INT_KEY("max_rounds", max_rounds),
      INT_KEY("eval_episodes", eval_episodes),
      INT_KEY("history_chars", history_chars),
      INT_KEY("repair_retries", repair_retries),
      DOUBLE_KEY("ppo.gamma", ppo.gamma),
      DOUBLE_KEY("ppo.lambda", ppo.gae_lambda),
      DOUBLE_KEY("ppo.clip_eps", ppo.clip_eps),
      INT_KEY("ppo.epochs", ppo.epochs),
      INT_KEY("ppo.minibatch", ppo.minibatch),
      DOUBLE_KEY("ppo.lr", ppo.lr),
      DOUBLE_KEY("ppo.value_coef", ppo.value_coef),
      DOUBLE_KEY("ppo.entropy_coef", ppo.entropy_coef),
      DOUBLE_KEY("ppo.max_grad_norm", ppo.max_grad_norm),
      STRING_KEY("critic.backend", critic.kind),
      STRING_KEY("critic.table", critic.table_path),
      STRING_KEY("critic.url", critic.http.url),
      STRING_KEY("critic.model", critic.http.model),
      INT_KEY("critic.salt", critic.salt),
      STRING_KEY("llm.url", llm.url),
      STRING_KEY("llm.model", llm.model),
      DOUBLE_KEY("llm.temperature", llm.temperature),
      INT_KEY("llm.max_tokens", llm.max_tokens),
      DOUBLE_KEY("llm.timeout_s", llm.timeout_s),
      Key{"fixtures", [](RunConfig& c, const Value& v) { c.fixtures = as_string(v, "fixtures"); },
          [](const RunConfig& c) { return quote(c.fixtures.string()); }},
  };
  return table;
}

const Key& find_key(const std::string& name) {
  for (const auto& k : keys()) {
    if (k.name == name) return k;
  }
  throw ConfigError("unknown config key '" + name + "'");
}

}  // namespace

env::TaskSpec parse_task(const std::string& targets, env::Difficulty difficulty) {
  env::TaskSpec t;
  t.difficulty = difficulty;
  std::stringstream in(targets);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ConfigError("task: expected NAME=count, got '" + item + "'");
    const std::string name = trim(item.substr(0, eq));
    const std::string count = trim(item.substr(eq + 1));
    int c = 0;
    const auto [p, ec] = std::from_chars(count.data(), count.data() + count.size(), c);
    if (name.empty() || ec != std::errc() || p != count.data() + count.size()) {
      throw ConfigError("task: bad target '" + item + "'");
    }
    t.targets.emplace_back(name, c);
  }
  if (t.targets.empty()) throw ConfigError("task: no targets");
  return t;
}

std::string format_task(const env::TaskSpec& task) {
  std::string out;
  for (const auto& [name, count] : task.targets) {
    if (!out.empty()) out += ',';
    out += name + "=" + std::to_string(count);
  }
  return out;
}

void RunConfig::validate() const {
  if (n < 1) throw ConfigError("n must be >= 1");
  if (N < 1) throw ConfigError("N must be >= 1");
  if (M < 1 || M > N) throw ConfigError("M must be in [1, N]");
  if (K < 1) throw ConfigError("K must be >= 1");
  if (!(threshold > 0.0 && threshold <= 1.0)) throw ConfigError("threshold must be in (0, 1]");
  if (T_max < 1 || T_max > env::kMaxPlanLength) throw ConfigError("T_max must be in [1, 5]");
  if (max_rounds < 1) throw ConfigError("max_rounds must be >= 1");
  if (eval_episodes < 1) throw ConfigError("eval_episodes must be >= 1");
  if (history_chars < 1) throw ConfigError("history_chars must be >= 1");
  if (repair_retries < 0) throw ConfigError("repair_retries must be >= 0");
  try {
    ppo.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(e.what());
  }
  if (critic.kind != "hash" && critic.kind != "table" && critic.kind != "http") {
    throw ConfigError("critic.backend: unknown backend '" + critic.kind + "'");
  }
  task.validate(env::TechTree::canonical());
}

RunConfig parse_config(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  std::stringstream in(text);
  std::string line;
  int lineno = 0;
  // The task depends on the difficulty, which may come later in the file.
  std::string task_text;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = origin + ":" + std::to_string(lineno);
    bool in_string = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) in_string = !in_string;
      if (line[i] == '#' && !in_string) {
        line.resize(i);
        break;
      }
    }
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const Value v = parse_value(trim(line.substr(eq + 1)), false, where);
    if (key == "task") {
      task_text = as_string(v, where + ": task");
      continue;
    }
    try {
      find_key(key).set(cfg, v);
    } catch (const ConfigError& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
  if (!task_text.empty()) cfg.task = parse_task(task_text, cfg.task.difficulty);
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), path.string());
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = trim(assignment.substr(0, eq));
  const Value v = parse_value(trim(assignment.substr(eq + 1)), true, "override " + key);
  find_key(key).set(cfg, v);
}

std::string to_text(const RunConfig& cfg) {
  std::string out;
  for (const auto& k : keys()) out += k.name + " = " + k.get(cfg) + "\n";
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& k : keys()) out.push_back(k.name);
  return out;
}

}  // namespace copic::orch
