// Drives the built `copic` binary. Every invocation runs with a scratch
// directory as its working directory so stray writes would show up.
#include <doctest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kRoot = COPIC_SOURCE_DIR;
const fs::path kFixtures = kRoot / "fixtures";

struct Run {
  int code = -1;
  std::string out;  // stdout and stderr, unless stderr was discarded
};

fs::path sandbox(const std::string& name) {
  auto d = fs::temp_directory_path() / ("copic_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

Run copic(const fs::path& cwd, const std::string& args, bool keep_stderr = true) {
  const std::string cmd = "cd '" + cwd.string() + "' && env -u COPIC_API_KEY COPIC_KERNELS=scalar '" +
                          std::string(COPIC_CLI) + "' " + args + (keep_stderr ? " 2>&1" : " 2>/dev/null");
  Run r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 4096> buf;
  std::size_t n;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::set<std::string> entries(const fs::path& dir) {
  std::set<std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) out.insert(e.path().filename().string());
  return out;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

}  // namespace

TEST_CASE("parse: valid program, empty file, disallowed construct") {
  const auto dir = sandbox("parse");
  auto ok = copic(dir, "parse " + q(kFixtures / "programs" / "hard" / "1.plan"));
  CHECK(ok.code == 0);

  std::ofstream(dir / "empty.plan").close();
  auto empty = copic(dir, "parse empty.plan");
  CHECK(empty.code == 1);
  CHECK(empty.out.find("expected function definition") != std::string::npos);

  std::ofstream(dir / "imp.plan") << "import os\ndef planner(obs, action_space, task):\n    return []\n";
  auto imp = copic(dir, "parse imp.plan");
  CHECK(imp.code == 1);
  CHECK(imp.out.find("imp.plan:1:") != std::string::npos);
  CHECK(imp.out.find("unsupported construct: import") != std::string::npos);
  CHECK(entries(dir) == std::set<std::string>{"empty.plan", "imp.plan"});
}

TEST_CASE("score: table example, single plan, JSON and bad backend") {
  const auto dir = sandbox("score");
  const auto s = kFixtures / "scoring";
  auto table = copic(dir, "score --obs " + q(s / "obs.json") + " --plans " + q(s / "plans.json") +
                              " --backend table --table " + q(s / "table.json"));
  CHECK(table.code == 0);
  CHECK(table.out.find("0.8808  TRAIN SCV") != std::string::npos);
  CHECK(table.out.find("0.1192  WAIT") != std::string::npos);

  auto single = copic(dir, "score --json --obs " + q(s / "obs.json") + " --plans " + q(s / "single_plan.json"));
  REQUIRE(single.code == 0);
  const auto j = json::parse(single.out);
  REQUIRE(j.size() == 1);
  CHECK(j[0]["score"] == 1.0);

  auto js = copic(dir, "score --json --obs " + q(s / "obs.json") + " --plans " + q(s / "plans.json") +
                           " --backend table --table " + q(s / "table.json"),
                  false);
  REQUIRE(js.code == 0);
  const auto rows = json::parse(js.out);
  REQUIRE(rows.size() == 2);
  double total = 0.0;
  for (const auto& r : rows) {
    for (const char* key : {"plan", "tokens", "words", "sum_logprob", "logit", "score"}) CHECK(r.contains(key));
    total += r["score"].get<double>();
  }
  CHECK(std::abs(total - 1.0) < 1e-12);
  CHECK(rows[0]["logit"] == -1.0);
  CHECK(json::parse(rows.dump()) == rows);

  auto bad = copic(dir, "score --backend nope --obs " + q(s / "obs.json") + " --plans " + q(s / "plans.json"));
  CHECK(bad.code == 2);
  CHECK(entries(dir).empty());
}

TEST_CASE("train: config errors, missing key and exit status") {
  const auto dir = sandbox("train_errors");
  CHECK(copic(dir, "train --out run --set bogus=1").code == 2);
  CHECK(copic(dir, "train --out run --set n=abc").code == 2);
  CHECK(copic(dir, "train").code == 2);
  CHECK(copic(dir, "frobnicate").code == 2);
  auto nokey = copic(dir, "train --out live");
  CHECK(nokey.code == 2);
  CHECK(nokey.out.find("COPIC_API_KEY") != std::string::npos);

  // A gateway that runs dry is exit 3.
  auto dry = copic(dir, "train --out dry --fixtures " + q(kFixtures / "missing_fence") +
                            " --set difficulty=easy --set task=SCV=16,BATTLECRUISER=30 --set max_rounds=2");
  CHECK(dry.code == 3);
  CHECK(dry.out.find("fixtures exhausted") != std::string::npos);
}

TEST_CASE("train: shipped easy config solves in one round, same seed same metrics") {
  const auto dir = sandbox("train_easy");
  const std::string base = "--config " + q(kRoot / "configs" / "easy.toml") + " --fixtures " + q(kFixtures / "easy");
  const std::string args = base + " --seed 7";
  auto a = copic(dir, "train " + args + " --out a");
  REQUIRE(a.code == 0);
  auto b = copic(dir, "train " + args + " --out b");
  REQUIRE(b.code == 0);
  CHECK(entries(dir) == std::set<std::string>{"a", "b"});
  const auto csv = slurp(dir / "a" / "metrics.csv");
  CHECK(csv == slurp(dir / "b" / "metrics.csv"));
  std::istringstream lines(csv);
  std::string line, last;
  while (std::getline(lines, line)) last = line;
  CHECK(last.rfind("1,20,1,", 0) == 0);
  CHECK(last.find(",1,") != std::string::npos);  // running sr is 1 at episode 20

  auto other = copic(dir, "train " + base + " --seed 8 --out c");
  CHECK(other.code == 0);

  // Export keeps one row per episode and the plotting columns.
  auto exp = copic(dir, "export-metrics --run a --out a/curve.csv");
  REQUIRE(exp.code == 0);
  const auto curve = slurp(dir / "a" / "curve.csv");
  CHECK(curve.rfind("round,episode,sr,avg_step,cost\n", 0) == 0);
  CHECK(std::count(curve.begin(), curve.end(), '\n') == 21);
}

TEST_CASE("eval: shipped checkpoint, no LLM tokens") {
  const auto dir = sandbox("eval");
  auto ev = copic(dir, "eval --set difficulty=easy --set task=SCV=16,BATTLECRUISER=1 --fixtures " +
                           q(kFixtures / "easy") + " --programs " + q(kFixtures / "programs" / "easy") +
                           " --checkpoint " + q(kFixtures / "easy" / "critic_checkpoint.json") +
                           " --episodes 10 --out ev");
  REQUIRE(ev.code == 0);
  CHECK(ev.out.find("sr=1.0000") != std::string::npos);
  CHECK(ev.out.find("llm_input=0 llm_output=0") != std::string::npos);
  CHECK(ev.out.find("critic_input=0") == std::string::npos);
  CHECK(entries(dir / "ev") == std::set<std::string>{"eval_metrics.csv", "eval_transcript.jsonl"});
  CHECK(entries(dir) == std::set<std::string>{"ev"});

  auto missing = copic(dir, "eval --checkpoint nowhere.json");
  CHECK(missing.code == 2);
}

TEST_CASE("replay and eval of a fixture run") {
  const auto dir = sandbox("replay");
  REQUIRE(copic(dir, "train --fixtures " + q(kFixtures / "hard") + " --seed 1 --out run").code == 0);
  CHECK(entries(dir) == std::set<std::string>{"run"});

  auto ep = copic(dir, "replay --run run --episode 21", false);
  REQUIRE(ep.code == 0);
  CHECK(ep.out == slurp(kRoot / "tests" / "golden" / "replay_hard_seed1_ep21.txt"));

  auto last = copic(dir, "replay --run run --last", false);
  REQUIRE(last.code == 0);
  CHECK(last.out.rfind("episode 40 (round 2, episode 20):", 0) == 0);

  auto ev = copic(dir, "eval --run run --episodes 2");
  CHECK(ev.code == 0);
  CHECK(ev.out.find("llm_input=0 llm_output=0") != std::string::npos);

  CHECK(copic(dir, "replay --run run --episode 41").code == 1);
  CHECK(copic(dir, "replay --run run --episode 0").code == 1);
  CHECK(copic(dir, "replay --run nowhere --episode 1").code == 1);
}
