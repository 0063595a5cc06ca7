#include "copic/llm/gateway.hpp"

#include <algorithm>
#include <fstream>
#include <future>
#include <sstream>

#include "copic/assets_data.hpp"
#include "copic/errors.hpp"
#include "copic/llm/template.hpp"
#include "copic/planlang/printer.hpp"

namespace copic::llm {

using nlohmann::json;
using planlang::PlanningProgram;

std::string extract_code(std::string_view text) {
  const auto open = text.find("```");
  if (open == std::string_view::npos) throw NoCodeBlock();
  // The info string ("python") runs to the end of the opening line.
  const auto body = text.find('\n', open);
  if (body == std::string_view::npos) throw NoCodeBlock();
  std::size_t close = body;
  while (true) {
    close = text.find("```", close + 1);
    if (close == std::string_view::npos) throw NoCodeBlock();
    if (text[close - 1] == '\n') break;
  }
  return std::string(text.substr(body + 1, close - body - 1));
}

namespace {

std::string render_step(const HistoryStep& s, std::size_t n) {
  return "  step " + std::to_string(n) + ": obs: " + s.obs_text + "\n    plan (program " +
         std::to_string(s.program_id) + "): " + s.plan_text + "\n";
}

std::size_t rendered_size(const EpisodeHistory& e, std::size_t from) {
  std::size_t total = 0;
  for (std::size_t i = from; i < e.steps.size(); ++i) total += render_step(e.steps[i], i + 1).size();
  return total;
}

}  // namespace

HistorySummary summarize_history(std::span<const EpisodeHistory> episodes, int M, std::size_t char_budget) {
  if (episodes.empty()) throw PreconditionError("summarize_history needs at least one episode");
  if (M < 1) throw PreconditionError("history window M must be >= 1");
  HistorySummary s;
  const std::size_t first = episodes.size() > static_cast<std::size_t>(M) ? episodes.size() - M : 0;
  for (std::size_t i = first; i < episodes.size(); ++i) {
    const auto& e = episodes[i];
    std::size_t drop = 0;
    const std::size_t max_drop = e.steps.size() > kKeptFinalSteps ? e.steps.size() - kKeptFinalSteps : 0;
    while (drop < max_drop && rendered_size(e, drop) > char_budget) ++drop;
    s.entries.push_back(e);
    s.elided.push_back(drop);
  }
  return s;
}

std::string HistorySummary::render() const {
  std::ostringstream out;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    out << "<trajectory " << e.episode << ">\n";
    const std::size_t drop = i < elided.size() ? elided[i] : 0;
    if (drop > 0) out << "  ... " << drop << " earlier steps elided\n";
    for (std::size_t k = drop; k < e.steps.size(); ++k) out << render_step(e.steps[k], k + 1);
    out << "</trajectory " << e.episode << ">, signal: " << (e.success ? "true" : "false") << "\n";
  }
  return out.str();
}

std::string task_json(const env::TaskSpec& task) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [name, count] : task.targets) j[name] = count;
  return j.dump(4);
}

std::string render_init_prompt(const env::TaskSpec& task) {
  return render_template(assets::kInitPromptTxt,
                         {{"example_task", task_json(env::reference_task(env::Difficulty::kEasy))},
                          {"example_program", std::string(assets::kExampleProgramPlan)},
                          {"task", task_json(task)}});
}

std::string render_evolve_prompt(std::span<const PlanningProgram> current, const HistorySummary& summary,
                                 const env::TaskSpec& task) {
  // The evolve prompt opens with the init prompt's context but asks its own
  // question, so the init prompt's closing instruction is cut.
  std::string intro = render_init_prompt(task);
  if (const auto cut = intro.rfind("\nNow generate a program"); cut != std::string::npos) intro.resize(cut);
  std::ostringstream programs;
  for (const auto& p : current) {
    programs << "Program " << p.id << ":\n```python\n"
             << (p.ok() ? planlang::pretty_print(p.ast) : p.source) << "```\n";
  }
  return render_template(assets::kEvolvePromptTxt,
                         {{"init_prompt", intro},
                          {"num_programs", std::to_string(current.size())},
                          {"programs", programs.str()},
                          {"the_interaction_results", summary.render()}});
}

LlmGateway::LlmGateway(std::shared_ptr<ChatClient> client, TokenLedger& ledger, GatewayConfig config)
    : client_(std::move(client)), ledger_(ledger), config_(std::move(config)) {
  if (!client_) throw PreconditionError("gateway needs a chat client");
  if (config_.repair_retries < 0) throw ConfigError("repair_retries must be >= 0");
}

int LlmGateway::requests() const {
  std::lock_guard lock(mu_);
  return requests_;
}

LlmGateway::Outcome LlmGateway::obtain(const std::string& prompt, int round, int program_id, int generation) {
  Outcome out;
  ChatRequest req;
  req.round = round;
  req.program = program_id;
  req.messages.push_back({"user", prompt});
  for (int attempt = 0; attempt <= config_.repair_retries; ++attempt) {
    req.attempt = attempt;
    ChatResponse resp;
    {
      std::lock_guard lock(mu_);
      ++requests_;
    }
    try {
      resp = client_->complete(req);
    } catch (const TransportError& e) {
      throw GatewayError(std::string("gateway transport failure: ") + e.what());
    }
    ledger_.add_llm(resp.prompt_tokens, resp.completion_tokens);
    json entry = {{"round", round},
                  {"program", program_id},
                  {"attempt", attempt},
                  {"request", req.messages.back().content},
                  {"response", resp.content},
                  {"prompt_tokens", resp.prompt_tokens},
                  {"completion_tokens", resp.completion_tokens}};
    std::string error;
    try {
      const std::string code = planlang::normalize_source(extract_code(resp.content));
      out.program = PlanningProgram::from_source(program_id, code, generation);
      out.ok = true;
    } catch (const NoCodeBlock& e) {
      error = e.what();
    } catch (const ParseError& e) {
      error = e.what();
    }
    entry["error"] = error.empty() ? json(nullptr) : json(error);
    out.log.push_back(std::move(entry));
    if (out.ok) return out;
    out.error = error;
    req.messages.push_back({"assistant", resp.content});
    req.messages.push_back(
        {"user", "Your program could not be used: " + error +
                     "\nReply with the complete corrected program, starting with \"```python\" and "
                     "ending with \"```\"."});
  }
  return out;
}

std::vector<LlmGateway::Outcome> LlmGateway::obtain_all(const std::string& prompt, int round, int n,
                                                        int generation) {
  std::vector<std::future<Outcome>> futures;
  for (int i = 1; i <= n; ++i) {
    futures.push_back(std::async(std::launch::async, [this, &prompt, round, i, generation] {
      return obtain(prompt, round, i, generation);
    }));
  }
  // Collect every future before rethrowing so no request outlives the call.
  std::vector<Outcome> outcomes;
  std::exception_ptr first_error;
  for (auto& f : futures) {
    try {
      outcomes.push_back(f.get());
    } catch (...) {
      if (!first_error) first_error = std::current_exception();
    }
  }
  if (first_error) std::rethrow_exception(first_error);
  write_log(outcomes);
  return outcomes;
}

void LlmGateway::write_log(const std::vector<Outcome>& outcomes) {
  if (config_.log_path.empty()) return;
  std::ofstream out(config_.log_path, std::ios::app);
  if (!out) throw LoadError("cannot append to " + config_.log_path.string());
  for (const auto& o : outcomes) {
    for (const auto& e : o.log) out << e.dump() << '\n';
  }
}

std::vector<PlanningProgram> LlmGateway::generate_programs(const env::TaskSpec& task, int n) {
  if (n < 1) throw PreconditionError("generate_programs needs n >= 1");
  const std::string prompt = render_init_prompt(task);
  auto outcomes = obtain_all(prompt, 1, n, 0);
  std::vector<PlanningProgram> programs;
  for (int i = 0; i < n; ++i) {
    auto& o = outcomes[i];
    programs.push_back(o.ok ? std::move(o.program) : PlanningProgram::faulted(i + 1, "", o.error, 0));
  }
  if (std::none_of(programs.begin(), programs.end(), [](const auto& p) { return p.ok(); })) {
    throw NoViableExperts();
  }
  return programs;
}

std::vector<PlanningProgram> LlmGateway::evolve_programs(std::span<const PlanningProgram> current,
                                                         const HistorySummary& summary,
                                                         const env::TaskSpec& task) {
  if (current.empty()) throw PreconditionError("evolve_programs needs programs");
  if (summary.empty()) throw PreconditionError("evolve_programs needs a non-empty history");
  int generation = 0;
  for (const auto& p : current) generation = std::max(generation, p.generation);
  ++generation;
  const std::string prompt = render_evolve_prompt(current, summary, task);
  {
    std::lock_guard lock(mu_);
    evolve_prompts_.push_back(prompt);
  }
  const int n = static_cast<int>(current.size());
  auto outcomes = obtain_all(prompt, generation + 1, n, generation);
  std::vector<PlanningProgram> next;
  for (int i = 0; i < n; ++i) {
    auto& o = outcomes[i];
    if (o.ok) {
      o.program.id = current[i].id;
      next.push_back(std::move(o.program));
    } else {
      PlanningProgram kept = current[i];
      kept.generation = generation;
      next.push_back(std::move(kept));
    }
  }
  if (std::none_of(next.begin(), next.end(), [](const auto& p) { return p.ok(); })) {
    throw NoViableExperts();
  }
  return next;
}

}  // namespace copic::llm
