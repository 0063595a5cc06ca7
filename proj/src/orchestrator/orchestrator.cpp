#include "copic/orchestrator/orchestrator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "copic/errors.hpp"

namespace copic::orch {

using nlohmann::json;
using planlang::Plan;
using planlang::PlanningProgram;

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw LoadError("cannot write " + tmp);
    out << text;
  }
  std::filesystem::rename(tmp, path);
}

void append_line(const std::filesystem::path& path, const std::string& line) {
  std::ofstream out(path, std::ios::app | std::ios::binary);
  if (!out) throw LoadError("cannot append to " + path.string());
  out << line << '\n';
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

json metrics_json(const Metrics& m) { return {{"sr", m.sr}, {"avg_step", m.avg_step}, {"cost", m.cost}}; }

}  // namespace

std::mt19937_64 episode_rng(std::uint64_t seed, int round, int episode) {
  return std::mt19937_64(splitmix(splitmix(seed) ^ (static_cast<std::uint64_t>(round) << 32) ^
                                  static_cast<std::uint64_t>(episode)));
}

std::string_view status_name(RunStatus s) {
  return s == RunStatus::kSolved ? "solved" : "rounds exhausted";
}

Metrics summarize(const std::vector<EpisodeMetric>& episodes, std::int64_t cost) {
  Metrics m;
  m.episodes = episodes;
  m.cost = cost;
  if (episodes.empty()) return m;
  int wins = 0;
  double steps = 0.0;
  for (const auto& e : episodes) {
    wins += e.success ? 1 : 0;
    steps += e.success ? e.steps : env::kEpisodeTickCap;
  }
  m.sr = static_cast<double>(wins) / static_cast<double>(episodes.size());
  m.avg_step = steps / static_cast<double>(episodes.size());
  return m;
}

json to_json(const EpisodeRecord& e) {
  json trace = json::array();
  for (const auto& s : e.trace) {
    json cands = json::array();
    for (const auto& c : s.candidates) {
      cands.push_back({{"program", c.plan.source_program},
                       {"actions", c.plan.actions},
                       {"fault", c.fault},
                       {"base_logit", c.base_logit},
                       {"base_score", c.base_score},
                       {"prob", c.prob}});
    }
    json rejected = json::array();
    for (const auto& r : s.rejected) rejected.push_back({{"action", r.action}, {"reason", r.reason}});
    trace.push_back({{"obs", env::to_json(s.obs)},
                     {"candidates", cands},
                     {"chosen", s.chosen},
                     {"reward", s.reward},
                     {"rejected", rejected}});
  }
  return {{"round", e.round},         {"episode", e.episode},
          {"success", e.success},     {"steps", e.steps},
          {"total_reward", e.total_reward}, {"tokens", llm::to_json(e.tokens)},
          {"trace", trace}};
}

EpisodeRecord episode_from_json(const json& j) {
  try {
    EpisodeRecord e;
    e.round = j.at("round");
    e.episode = j.at("episode");
    e.success = j.at("success");
    e.steps = j.at("steps");
    e.total_reward = j.at("total_reward");
    e.tokens = llm::token_counts_from_json(j.at("tokens"));
    for (const auto& s : j.at("trace")) {
      StepRecord r;
      r.obs = env::observation_from_json(s.at("obs"));
      for (const auto& c : s.at("candidates")) {
        CandidateRecord cr;
        cr.plan.source_program = c.at("program");
        cr.plan.actions = c.at("actions").get<std::vector<std::string>>();
        cr.fault = c.at("fault");
        cr.base_logit = c.at("base_logit");
        cr.base_score = c.at("base_score");
        cr.prob = c.at("prob");
        r.candidates.push_back(std::move(cr));
      }
      r.chosen = s.at("chosen");
      r.reward = s.at("reward");
      for (const auto& x : s.at("rejected")) r.rejected.push_back({x.at("action"), x.at("reason")});
      e.trace.push_back(std::move(r));
    }
    return e;
  } catch (const json::exception& ex) {
    throw LoadError(std::string("malformed episode record: ") + ex.what());
  }
}

void save_programs(const std::filesystem::path& dir, const std::vector<PlanningProgram>& programs) {
  for (const auto& p : programs) {
    write_file(dir / ("program_" + std::to_string(p.id) + ".plan"), p.source);
    if (!p.ok()) write_file(dir / ("program_" + std::to_string(p.id) + ".fault"), p.fault + "\n");
  }
}

std::vector<PlanningProgram> load_programs(const std::filesystem::path& dir) {
  std::vector<PlanningProgram> out;
  const auto gen_name = dir.filename().string();
  const int generation = gen_name.rfind("gen_", 0) == 0 ? std::stoi(gen_name.substr(4)) : 0;
  for (int id = 1;; ++id) {
    const auto path = dir / ("program_" + std::to_string(id) + ".plan");
    if (!std::filesystem::exists(path)) break;
    const auto fault = dir / ("program_" + std::to_string(id) + ".fault");
    if (std::filesystem::exists(fault)) {
      out.push_back(PlanningProgram::faulted(id, read_file(path), read_file(fault), generation));
    } else {
      try {
        out.push_back(PlanningProgram::from_source(id, read_file(path), generation));
      } catch (const ParseError& e) {
        throw LoadError("saved program " + path.string() + " no longer parses: " + e.what());
      }
    }
  }
  if (out.empty()) throw LoadError("no programs in " + dir.string());
  return out;
}

std::vector<PlanningProgram> load_plan_dir(const std::filesystem::path& dir) {
  std::map<int, std::filesystem::path> files;
  if (std::filesystem::is_directory(dir)) {
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
      if (entry.path().extension() != ".plan") continue;
      try {
        files[std::stoi(entry.path().stem().string())] = entry.path();
      } catch (const std::exception&) {
        // Not a numbered program; ignore.
      }
    }
  }
  if (files.empty()) throw ConfigError("no numbered .plan files in " + dir.string());
  std::vector<PlanningProgram> out;
  for (const auto& [id, path] : files) {
    out.push_back(PlanningProgram::from_source(id, planlang::normalize_source(read_file(path))));
  }
  return out;
}

std::shared_ptr<const critic::ScorerBackend> make_run_backend(const RunConfig& cfg) {
  critic::BackendSpec spec = cfg.critic;
  if (!cfg.fixtures.empty()) {
    const auto table = cfg.fixtures / "critic_table.json";
    if (std::filesystem::exists(table)) {
      spec.kind = "table";
      spec.table_path = table.string();
    } else if (spec.kind == "http") {
      spec.kind = "hash";
    }
  }
  if (spec.kind == "http" && spec.http.api_key.empty()) {
    if (const char* key = std::getenv(llm::kApiKeyEnv)) spec.http.api_key = key;
  }
  return critic::make_backend(spec);
}

std::shared_ptr<llm::ChatClient> make_chat_client(const RunConfig& cfg) {
  if (!cfg.fixtures.empty()) return std::make_shared<llm::FixtureChatClient>(cfg.fixtures);
  llm::HttpChatConfig http = cfg.llm;
  http.seed = cfg.seed;
  return llm::HttpChatClient::from_env(http);
}

Orchestrator::Orchestrator(RunConfig cfg, std::shared_ptr<llm::LlmGateway> gateway,
                           std::shared_ptr<const critic::ScorerBackend> backend, llm::TokenLedger& ledger,
                           std::filesystem::path run_dir, Hooks hooks)
    : cfg_(std::move(cfg)),
      gateway_(std::move(gateway)),
      backend_(std::move(backend)),
      ledger_(ledger),
      run_dir_(std::move(run_dir)),
      hooks_(std::move(hooks)),
      trainer_(cfg_.ppo, splitmix(cfg_.seed ^ 0x7070ULL)),
      buffer_(static_cast<std::size_t>(cfg_.K)) {
  cfg_.validate();
  if (!backend_) throw PreconditionError("orchestrator needs a critic backend");
}

EpisodeRecord Orchestrator::run_episode(std::vector<PlanningProgram>& programs, critic::CriticState& theta,
                                        env::UnitBuildEnv& env, Mode mode, std::mt19937_64& rng, int round,
                                        int episode) {
  if (programs.empty()) throw PreconditionError("run_episode needs programs");
  EpisodeRecord rec;
  rec.round = round;
  rec.episode = episode;
  env::Observation obs = env.observation();
  const env::TaskSpec& task = env.task();
  const auto select_mode = mode == Mode::kTrain ? critic::SelectMode::kSample : critic::SelectMode::kArgmax;
  for (auto& p : programs) ++p.stats.episodes_used;

  while (!env.done()) {
    const auto space = env.available_actions();
    StepRecord step;
    step.obs = obs;
    std::vector<Plan> plans;
    for (const auto& p : programs) {
      CandidateRecord c;
      c.plan.source_program = p.id;
      try {
        c.plan = planlang::evaluate(p, obs, space, task);
        if (static_cast<int>(c.plan.actions.size()) > cfg_.T_max) c.plan.actions.resize(cfg_.T_max);
      } catch (const ProgramFault& e) {
        c.fault = e.what();
      } catch (const SandboxBudgetExceeded& e) {
        c.fault = e.what();
      }
      plans.push_back(c.plan);
      step.candidates.push_back(std::move(c));
    }

    const std::string prompt = critic::build_critic_prompt(obs, task, plans);
    const auto base = critic::base_scores(*backend_, prompt, plans, &ledger_);
    const auto probs = critic::policy_distribution(theta, obs, task, plans, base);
    const int chosen = critic::select_plan(probs, rng, select_mode);
    for (std::size_t i = 0; i < plans.size(); ++i) {
      step.candidates[i].base_logit = base.items[i].logit;
      step.candidates[i].base_score = base.items[i].score;
      step.candidates[i].prob = probs[i];
    }
    step.chosen = chosen;
    if (mode == Mode::kTrain && hooks_.selection) hooks_.selection(global_step_ + 1);
    ++programs[chosen].stats.times_chosen;

    const auto result = env.step(plans[chosen].actions);
    step.reward = result.reward;
    step.rejected = result.rejected;
    rec.total_reward += result.reward;
    ++rec.steps;

    if (mode == Mode::kTrain) {
      buffer_.push(ppo::make_transition(task, obs, plans, base.logits(), chosen,
                                        std::min(0.0, std::log(probs[chosen])), result.reward, result.obs,
                                        result.done));
      ++global_step_;
      if (global_step_ % cfg_.K == 0) {
        if (hooks_.fine_tune) hooks_.fine_tune(global_step_, buffer_.size());
        try {
          const auto stats = trainer_.update(theta, buffer_);
          if (!run_dir_.empty()) ppo::append_stats_csv(run_dir_ / "ppo_stats.csv", trainer_.updates(), stats);
          ++fine_tunes_;
        } catch (const NumericError&) {
          // theta is untouched; the batch is dropped.
        }
        buffer_.clear();
      }
    }
    rec.trace.push_back(std::move(step));
    obs = result.obs;
    rec.success = result.success;
  }
  rec.tokens = ledger_.snapshot();
  if (hooks_.episode_end) hooks_.episode_end(rec);
  return rec;
}

Metrics Orchestrator::run_round(std::vector<PlanningProgram>& programs, critic::CriticState& theta, int round,
                                std::vector<llm::EpisodeHistory>* history) {
  if (hooks_.round_start) hooks_.round_start(round);
  std::vector<EpisodeMetric> rows;
  env::UnitBuildEnv env;
  for (int ep = 1; ep <= cfg_.N; ++ep) {
    auto rng = episode_rng(cfg_.seed, round, ep);
    env.reset(cfg_.task, rng());
    const auto rec = run_episode(programs, theta, env, Mode::kTrain, rng, round, ep);
    rows.push_back({round, ep, rec.success, rec.steps, rec.tokens.cost()});
    if (history != nullptr) {
      llm::EpisodeHistory h;
      h.episode = ep;
      h.success = rec.success;
      for (const auto& s : rec.trace) {
        h.steps.push_back({env::render_text(s.obs), critic::plan_description(s.candidates[s.chosen].plan),
                           s.candidates[s.chosen].plan.source_program});
      }
      history->push_back(std::move(h));
    }
    if (!run_dir_.empty()) {
      append_line(run_dir_ / "transcript.jsonl", to_json(rec).dump());
      const auto partial = summarize(rows, rec.tokens.cost());
      std::ostringstream row;
      row.precision(17);
      row << round << ',' << ep << ',' << (rec.success ? 1 : 0) << ',' << rec.steps << ',' << partial.sr << ','
          << partial.avg_step << ',' << rec.tokens.cost();
      const auto csv = run_dir_ / "metrics.csv";
      if (!std::filesystem::exists(csv)) append_line(csv, "round,episode,success,steps,sr,avg_step,cost");
      append_line(csv, row.str());
    }
  }
  return summarize(rows, ledger_.cost());
}

void Orchestrator::save_round(int round, const std::vector<PlanningProgram>& programs,
                              const critic::CriticState& theta, const Metrics& m, RunStatus* final_status) {
  if (run_dir_.empty()) return;
  const auto state_path = run_dir_ / "state.json";
  json state = std::filesystem::exists(state_path) ? json::parse(read_file(state_path)) : json::object();
  const int generation = programs.front().generation;
  save_programs(run_dir_ / "programs" / ("gen_" + std::to_string(generation)), programs);
  const std::string ckpt = "checkpoints/critic_round_" + std::to_string(round) + ".json";
  std::filesystem::create_directories(run_dir_ / "checkpoints");
  critic::save_checkpoint(theta, run_dir_ / ckpt);
  if (!state.contains("rounds")) state["rounds"] = json::array();
  state["rounds"].push_back(metrics_json(m));
  state["completed_round"] = round;
  state["checkpoint"] = ckpt;
  state["programs"] = "programs/gen_" + std::to_string(generation);
  state["global_step"] = global_step_;
  state["fine_tunes"] = fine_tunes_;
  state["ledger"] = llm::to_json(ledger_.snapshot());
  state["status"] = final_status == nullptr ? "running" : std::string(status_name(*final_status));
  write_file(state_path, state.dump(2) + "\n");
}

TrainResult Orchestrator::training_loop() {
  if (!gateway_) throw PreconditionError("training_loop needs a gateway");
  TrainResult res;
  // A run with no usable expert stops here; the bundle says where and why.
  auto ask_gateway = [&](auto&& call, int after_round) {
    try {
      return call();
    } catch (const NoViableExperts& e) {
      if (!run_dir_.empty()) {
        json diag = {{"error", e.what()},
                     {"after_round", after_round},
                     {"ledger", llm::to_json(ledger_.snapshot())},
                     {"gateway_log", "gateway.jsonl"},
                     {"requests", gateway_->requests()}};
        write_file(run_dir_ / "diagnostics.json", diag.dump(2) + "\n");
      }
      throw;
    }
  };
  int start_round = 1;
  const auto state_path = run_dir_.empty() ? std::filesystem::path() : run_dir_ / "state.json";
  if (!state_path.empty() && std::filesystem::exists(state_path)) {
    json state;
    try {
      state = json::parse(read_file(state_path));
    } catch (const json::exception& e) {
      throw LoadError("corrupt run state " + state_path.string() + ": " + e.what());
    }
    res.theta = critic::load_checkpoint(run_dir_ / state.at("checkpoint").get<std::string>());
    res.programs = load_programs(run_dir_ / state.at("programs").get<std::string>());
    global_step_ = state.at("global_step");
    fine_tunes_ = state.at("fine_tunes");
    ledger_.restore(llm::token_counts_from_json(state.at("ledger")));
    for (const auto& r : state.at("rounds")) {
      Metrics m;
      m.sr = r.at("sr");
      m.avg_step = r.at("avg_step");
      m.cost = r.at("cost");
      res.rounds.push_back(m);
    }
    start_round = state.at("completed_round").get<int>() + 1;
    const std::string status = state.at("status");
    if (status != "running") {
      res.status = status == "solved" ? RunStatus::kSolved : RunStatus::kRoundsExhausted;
      res.metrics = res.rounds.back();
      res.global_steps = global_step_;
      res.fine_tunes = fine_tunes_;
      res.evolutions = start_round - 2;
      return res;
    }
    if (state.contains("next_programs")) {
      res.programs = load_programs(run_dir_ / state.at("next_programs").get<std::string>());
    }
  } else {
    if (!run_dir_.empty()) {
      std::filesystem::create_directories(run_dir_);
      write_file(run_dir_ / "config.toml", to_text(cfg_));
    }
    res.theta = critic::CriticState::initial(cfg_.seed);
    res.programs = ask_gateway([&] { return gateway_->generate_programs(cfg_.task, cfg_.n); }, 0);
  }
  res.evolutions = start_round - 1;

  for (int round = start_round; round <= cfg_.max_rounds; ++round) {
    std::vector<llm::EpisodeHistory> history;
    const Metrics m = run_round(res.programs, res.theta, round, &history);
    res.rounds.push_back(m);
    res.metrics = m;
    if (m.sr >= cfg_.threshold || round == cfg_.max_rounds) {
      res.status = m.sr >= cfg_.threshold ? RunStatus::kSolved : RunStatus::kRoundsExhausted;
      save_round(round, res.programs, res.theta, m, &res.status);
      break;
    }
    save_round(round, res.programs, res.theta, m, nullptr);
    const auto summary = llm::summarize_history(history, cfg_.M, cfg_.history_chars);
    if (hooks_.evolve) hooks_.evolve(round, summary);
    res.programs =
        ask_gateway([&] { return gateway_->evolve_programs(res.programs, summary, cfg_.task); }, round);
    ++res.evolutions;
    if (!run_dir_.empty()) {
      const std::string next = "programs/gen_" + std::to_string(res.programs.front().generation);
      save_programs(run_dir_ / next, res.programs);
      json state = json::parse(read_file(state_path));
      state["next_programs"] = next;
      state["ledger"] = llm::to_json(ledger_.snapshot());
      write_file(state_path, state.dump(2) + "\n");
    }
  }
  res.global_steps = global_step_;
  res.fine_tunes = fine_tunes_;
  return res;
}

TrainResult Orchestrator::train_frozen(std::vector<PlanningProgram> programs, critic::CriticState theta,
                                       int rounds) {
  TrainResult res;
  res.programs = std::move(programs);
  res.theta = std::move(theta);
  for (int round = 1; round <= rounds; ++round) {
    res.metrics = run_round(res.programs, res.theta, round, nullptr);
    res.rounds.push_back(res.metrics);
    if (res.metrics.sr >= cfg_.threshold) {
      res.status = RunStatus::kSolved;
      break;
    }
  }
  res.global_steps = global_step_;
  res.fine_tunes = fine_tunes_;
  return res;
}

Metrics Orchestrator::evaluate(std::vector<PlanningProgram> programs, const critic::CriticState& theta,
                               const std::vector<env::TaskSpec>& tasks, int episodes_per_task) {
  if (tasks.empty() || episodes_per_task < 1) throw PreconditionError("evaluate needs tasks and episodes");
  critic::CriticState frozen = theta;
  std::vector<EpisodeMetric> rows;
  env::UnitBuildEnv env;
  int index = 0;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    for (int ep = 1; ep <= episodes_per_task; ++ep) {
      ++index;
      auto rng = episode_rng(cfg_.seed, 0, index);
      env.reset(tasks[t], rng());
      const auto rec = run_episode(programs, frozen, env, Mode::kEval, rng, 0, index);
      rows.push_back({0, index, rec.success, rec.steps, rec.tokens.cost()});
      if (!run_dir_.empty()) append_line(run_dir_ / "eval_transcript.jsonl", to_json(rec).dump());
    }
  }
  return summarize(rows, ledger_.cost());
}

}  // namespace copic::orch
