// copic: train, evaluate and inspect program-mixture agents.
#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "copic/critic/critic.hpp"
#include "copic/errors.hpp"
#include "copic/orchestrator/orchestrator.hpp"
#include "copic/planlang/parser.hpp"

using namespace copic;
using nlohmann::json;

namespace {

constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kConfigError = 2;
constexpr int kGatewayError = 3;

std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + p.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

json read_json(const std::filesystem::path& p) {
  try {
    return json::parse(read_text(p));
  } catch (const json::exception& e) {
    throw ConfigError(p.string() + ": " + e.what());
  }
}

struct ConfigArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string fixtures;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "Run config file (flat key = value)");
    app->add_option("--set", overrides, "Override, e.g. --set ppo.lr=1e-4 (repeatable)");
    app->add_option("--seed", seed, "Master seed");
    app->add_option("--fixtures", fixtures, "Offline gateway responses and critic");
  }

  orch::RunConfig load() const {
    orch::RunConfig cfg = config.empty() ? orch::RunConfig{} : orch::load_config(config);
    for (const auto& o : overrides) orch::apply_override(cfg, o);
    if (seed) cfg.seed = *seed;
    if (!fixtures.empty()) cfg.fixtures = fixtures;
    cfg.validate();
    return cfg;
  }
};

void print_metrics(const orch::Metrics& m) {
  std::printf("sr=%.4f avg_step=%.2f cost=%lld episodes=%zu\n", m.sr, m.avg_step,
              static_cast<long long>(m.cost), m.episodes.size());
}

int cmd_train(const ConfigArgs& args, const std::filesystem::path& out) {
  const auto cfg = args.load();
  if (std::filesystem::exists(out / "state.json")) {
    std::printf("resuming %s\n", out.string().c_str());
  }
  std::filesystem::create_directories(out);
  llm::TokenLedger ledger;
  llm::GatewayConfig gcfg;
  gcfg.repair_retries = cfg.repair_retries;
  gcfg.log_path = out / "gateway.jsonl";
  auto gateway = std::make_shared<llm::LlmGateway>(orch::make_chat_client(cfg), ledger, gcfg);
  orch::Hooks hooks;
  hooks.round_start = [](int round) { std::printf("round %d\n", round); };
  orch::Orchestrator o(cfg, gateway, orch::make_run_backend(cfg), ledger, out, hooks);
  const auto res = o.training_loop();
  for (std::size_t r = 0; r < res.rounds.size(); ++r) {
    std::printf("round %zu: ", r + 1);
    print_metrics(res.rounds[r]);
  }
  std::printf("status: %s after %zu round(s), %d evolution(s), %d fine-tune(s)\n",
              std::string(orch::status_name(res.status)).c_str(), res.rounds.size(), res.evolutions,
              res.fine_tunes);
  return res.status == orch::RunStatus::kSolved ? kOk : kFailure;
}

int cmd_eval(const ConfigArgs& args, const std::string& run, const std::string& programs_dir,
             const std::string& checkpoint, int episodes, const std::string& out) {
  const auto cfg = args.load();
  std::vector<planlang::PlanningProgram> programs;
  critic::CriticState theta;
  if (!run.empty()) {
    const json state = read_json(std::filesystem::path(run) / "state.json");
    programs = orch::load_programs(std::filesystem::path(run) / state.at("programs").get<std::string>());
    theta = critic::load_checkpoint(std::filesystem::path(run) / state.at("checkpoint").get<std::string>());
  } else {
    if (programs_dir.empty()) throw ConfigError("eval needs --run or --programs");
    programs = orch::load_plan_dir(programs_dir);
    theta = checkpoint.empty() ? critic::CriticState::initial(cfg.seed) : critic::load_checkpoint(checkpoint);
  }
  if (!out.empty()) std::filesystem::create_directories(out);
  llm::TokenLedger ledger;
  orch::Orchestrator o(cfg, nullptr, orch::make_run_backend(cfg), ledger, out);
  const auto m = o.evaluate(programs, theta, {cfg.task}, episodes > 0 ? episodes : cfg.eval_episodes);
  print_metrics(m);
  const auto t = ledger.snapshot();
  std::printf("tokens: llm_input=%lld llm_output=%lld critic_input=%lld critic_output=%lld\n",
              static_cast<long long>(t.llm_input), static_cast<long long>(t.llm_output),
              static_cast<long long>(t.critic_input), static_cast<long long>(t.critic_output));
  if (!out.empty()) {
    std::ofstream csv(std::filesystem::path(out) / "eval_metrics.csv");
    csv << "episode,success,steps,cost\n";
    for (const auto& e : m.episodes) csv << e.episode << ',' << (e.success ? 1 : 0) << ',' << e.steps << ',' << e.cost << '\n';
  }
  return kOk;
}

std::vector<planlang::Plan> read_plans(const std::filesystem::path& p) {
  const json j = read_json(p);
  std::vector<planlang::Plan> plans;
  try {
    for (const auto& entry : j) {
      planlang::Plan plan;
      plan.actions = entry.get<std::vector<std::string>>();
      plan.source_program = static_cast<int>(plans.size()) + 1;
      plans.push_back(std::move(plan));
    }
  } catch (const json::exception& e) {
    throw ConfigError(p.string() + ": expected an array of action arrays");
  }
  if (plans.empty()) throw ConfigError(p.string() + ": no plans");
  return plans;
}

int cmd_score(const ConfigArgs& args, const std::string& obs_file, const std::string& plans_file,
              const std::string& checkpoint, const std::string& backend, const std::string& table, bool as_json) {
  auto cfg = args.load();
  if (!backend.empty()) cfg.critic.kind = backend;
  if (!table.empty()) cfg.critic.table_path = table;
  if (cfg.critic.kind != "hash" && cfg.critic.kind != "table" && cfg.critic.kind != "http") {
    throw ConfigError("unknown critic backend '" + cfg.critic.kind + "'");
  }
  const auto obs = env::observation_from_json(read_json(obs_file));
  const auto plans = read_plans(plans_file);
  const auto scorer = orch::make_run_backend(cfg);
  const auto prompt = critic::build_critic_prompt(obs, cfg.task, plans);
  const auto scoring = critic::base_scores(*scorer, prompt, plans);
  std::vector<double> policy;
  if (!checkpoint.empty()) {
    policy = critic::policy_distribution(critic::load_checkpoint(checkpoint), obs, cfg.task, plans, scoring);
  }
  if (as_json) {
    json out = json::array();
    for (std::size_t i = 0; i < scoring.items.size(); ++i) {
      const auto& c = scoring.items[i];
      json row = {{"plan", c.description}, {"tokens", c.tokens},    {"words", c.words},
                  {"sum_logprob", c.sum_logprob}, {"logit", c.logit}, {"score", c.score}};
      if (!policy.empty()) row["policy"] = policy[i];
      out.push_back(row);
    }
    std::cout << out.dump(2) << "\n";
    return kOk;
  }
  std::printf("%-3s %6s %6s %12s %10s %8s%s  %s\n", "#", "tokens", "words", "sum_logprob", "logit", "score",
              policy.empty() ? "" : "   policy", "plan");
  for (std::size_t i = 0; i < scoring.items.size(); ++i) {
    const auto& c = scoring.items[i];
    std::printf("%-3zu %6d %6d %12.6f %10.6f %8.4f", i + 1, c.tokens, c.words, c.sum_logprob, c.logit, c.score);
    if (!policy.empty()) std::printf(" %8.4f", policy[i]);
    std::printf("  %s\n", c.description.c_str());
  }
  return kOk;
}

int cmd_parse(const std::string& file) {
  const std::string src = planlang::normalize_source(read_text(file));
  try {
    planlang::parse_program(src);
  } catch (const ParseError& e) {
    std::fprintf(stderr, "%s:%d:%d: %s\n", file.c_str(), e.line(), e.column(), e.message().c_str());
    return kFailure;
  }
  std::printf("%s: ok\n", file.c_str());
  return kOk;
}

std::vector<json> read_transcript(const std::filesystem::path& run) {
  std::ifstream in(run / "transcript.jsonl");
  if (!in) throw LoadError("no transcript in " + run.string());
  std::vector<json> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(json::parse(line));
  }
  return out;
}

int cmd_replay(const std::string& run, int episode, bool last) {
  const auto lines = read_transcript(run);
  if (lines.empty()) {
    std::fprintf(stderr, "transcript is empty\n");
    return kFailure;
  }
  const int index = last ? static_cast<int>(lines.size()) : episode;
  if (index < 1 || index > static_cast<int>(lines.size())) {
    std::fprintf(stderr, "episode %d out of range (1..%zu)\n", index, lines.size());
    return kFailure;
  }
  const auto rec = orch::episode_from_json(lines[index - 1]);
  std::printf("episode %d (round %d, episode %d): %s in %d steps, total reward %.6g\n", index, rec.round,
              rec.episode, rec.success ? "success" : "failure", rec.steps, rec.total_reward);
  for (std::size_t s = 0; s < rec.trace.size(); ++s) {
    const auto& st = rec.trace[s];
    std::printf("step %zu | %s\n", s + 1, env::render_text(st.obs).c_str());
    for (std::size_t c = 0; c < st.candidates.size(); ++c) {
      const auto& cand = st.candidates[c];
      std::printf("  %c program %d  base %.6f  policy %.6f  %s%s\n", static_cast<int>(c) == st.chosen ? '*' : ' ',
                  cand.plan.source_program, cand.base_score, cand.prob,
                  critic::plan_description(cand.plan).c_str(), cand.fault.empty() ? "" : "  [fault]");
    }
    for (const auto& r : st.rejected) std::printf("  rejected %s: %s\n", r.action.c_str(), r.reason.c_str());
    std::printf("  reward %.6g\n", st.reward);
  }
  return kOk;
}

int cmd_export(const std::string& run, const std::string& out) {
  std::ifstream in(std::filesystem::path(run) / "metrics.csv");
  if (!in) throw LoadError("no metrics.csv in " + run);
  std::ostringstream csv;
  csv << "round,episode,sr,avg_step,cost\n";
  std::string line;
  std::getline(in, line);  // header: round,episode,success,steps,sr,avg_step,cost
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::stringstream row(line);
    std::string cell;
    while (std::getline(row, cell, ',')) f.push_back(cell);
    if (f.size() != 7) throw LoadError("malformed metrics row: " + line);
    csv << f[0] << ',' << f[1] << ',' << f[4] << ',' << f[5] << ',' << f[6] << '\n';
  }
  if (out.empty()) {
    std::cout << csv.str();
  } else {
    std::ofstream file(out);
    if (!file) throw LoadError("cannot write " + out);
    file << csv.str();
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"copic: program-mixture planning with a trainable critic"};
  app.require_subcommand(1);

  ConfigArgs train_args, eval_args, score_args;
  std::string out;
  auto* train = app.add_subcommand("train", "Run the generate/plan/fine-tune/evolve loop");
  train_args.attach(train);
  train->add_option("--out", out, "Run directory (all outputs go here)")->required();

  std::string run, programs_dir, checkpoint, eval_out;
  int episodes = 0;
  auto* eval = app.add_subcommand("eval", "Evaluate trained programs and critic without LLM calls");
  eval_args.attach(eval);
  eval->add_option("--run", run, "Training run directory");
  eval->add_option("--programs", programs_dir, "Directory of numbered .plan files");
  eval->add_option("--checkpoint", checkpoint, "Critic checkpoint");
  eval->add_option("--episodes", episodes, "Episodes (default: eval_episodes)");
  eval->add_option("--out", eval_out, "Directory for eval_metrics.csv and the transcript");

  std::string obs_file, plans_file, score_ckpt, backend, table;
  bool as_json = false;
  auto* score = app.add_subcommand("score", "Score candidate plans for one observation");
  score_args.attach(score);
  score->add_option("--obs", obs_file, "Observation JSON")->required();
  score->add_option("--plans", plans_file, "JSON array of action arrays")->required();
  score->add_option("--checkpoint", score_ckpt, "Also print the trained policy");
  score->add_option("--backend", backend, "hash, table or http");
  score->add_option("--table", table, "Table backend JSON");
  score->add_flag("--json", as_json, "Machine-readable output");

  std::string program_file;
  auto* parse = app.add_subcommand("parse", "Check that a planning program is valid PlanLang");
  parse->add_option("file", program_file, "Program source")->required();

  std::string replay_run;
  int replay_episode = 1;
  bool replay_last = false;
  auto* replay = app.add_subcommand("replay", "Print a recorded training episode");
  replay->add_option("--run", replay_run, "Run directory")->required();
  replay->add_option("--episode", replay_episode, "1-based episode index across the run");
  replay->add_flag("--last", replay_last, "Replay the final episode");

  std::string export_run, export_out;
  auto* exp = app.add_subcommand("export-metrics", "CSV of round, episode, sr, avg_step, cost");
  exp->add_option("--run", export_run, "Run directory")->required();
  exp->add_option("--out", export_out, "Output CSV (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*train) return cmd_train(train_args, out);
    if (*eval) return cmd_eval(eval_args, run, programs_dir, checkpoint, episodes, eval_out);
    if (*score) return cmd_score(score_args, obs_file, plans_file, score_ckpt, backend, table, as_json);
    if (*parse) return cmd_parse(program_file);
    if (*replay) return cmd_replay(replay_run, replay_episode, replay_last);
    if (*exp) return cmd_export(export_run, export_out);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfigError;
  } catch (const GatewayError& e) {
    std::fprintf(stderr, "gateway error: %s\n", e.what());
    return kGatewayError;
  } catch (const TransportError& e) {
    std::fprintf(stderr, "gateway error: %s\n", e.what());
    return kGatewayError;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kFailure;
  } catch (const json::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kFailure;
  }
  return kFailure;
}
