#include <doctest.h>
#include <httplib.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <thread>

#include "copic/critic/critic.hpp"
#include "copic/env/unitbuild_env.hpp"
#include "copic/errors.hpp"
#include "copic/llm/token_ledger.hpp"
#include "scoring_oracle.hpp"
#include "test_util.hpp"

using namespace copic;
using namespace copic::critic;

namespace {

Plan plan_of(std::vector<std::string> actions, int source = 0) { return Plan{std::move(actions), source}; }

env::Observation initial_obs() {
  env::UnitBuildEnv e;
  return e.reset(env::reference_task(env::Difficulty::kHard));
}

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("copic_critic_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("plan descriptions and word counts") {
  CHECK(plan_description(plan_of({})) == "do nothing");
  CHECK(plan_description(plan_of({"TRAIN SCV", "BUILD REFINERY"})) == "TRAIN SCV; BUILD REFINERY");
  CHECK(word_count("TRAIN SCV; BUILD REFINERY") == 4);
  CHECK(word_count("  a \t b\n") == 2);
  CHECK(word_count("") == 0);
}

TEST_CASE("critic prompt lists candidates in order") {
  const auto obs = initial_obs();
  const auto task = env::reference_task(env::Difficulty::kHard);
  std::vector<Plan> c{plan_of({"TRAIN SCV"}), plan_of({}), plan_of({"BUILD REFINERY", "TRAIN SCV"})};
  const std::string p = build_critic_prompt(obs, task, c);
  const auto i1 = p.find("1. TRAIN SCV");
  const auto i2 = p.find("2. do nothing");
  const auto i3 = p.find("3. BUILD REFINERY; TRAIN SCV");
  REQUIRE(i1 != std::string::npos);
  REQUIRE(i2 != std::string::npos);
  REQUIRE(i3 != std::string::npos);
  CHECK(i1 < i2);
  CHECK(i2 < i3);
  CHECK(p.find(env::render_text(obs)) != std::string::npos);
  CHECK(p.find("SCV=16 SIEGETANK=2") != std::string::npos);
  CHECK(p.find("{$") == std::string::npos);
  CHECK(p.ends_with("Chosen plan:"));
  CHECK(build_critic_prompt(obs, task, c) == p);
  CHECK_THROWS_AS(build_critic_prompt(obs, task, {}), PreconditionError);
}

TEST_CASE("whitespace tokens concatenate back to the text") {
  for (std::string s : {"", " TRAIN SCV; BUILD X", "a", "  lead and trail  ", "x\ny\tz"}) {
    auto toks = whitespace_tokens(s);
    std::string joined;
    for (const auto& t : toks) joined += t;
    CHECK(joined == s);
  }
  CHECK(whitespace_tokens(" TRAIN SCV;") == std::vector<std::string>{" TRAIN", " SCV;"});
}

TEST_CASE("base scores: documented examples") {
  TableBackend t(-10.0);
  t.set_any_context("TRAIN", -1.0);
  t.set_any_context("SCV", -1.0);
  t.set_any_context("WAIT", -3.0);

  auto single = base_scores(t, "ctx", {plan_of({"TRAIN SCV"})});
  CHECK(single.items[0].score == 1.0);

  auto twins = base_scores(t, "ctx", {plan_of({"TRAIN SCV"}), plan_of({"TRAIN SCV"})});
  CHECK(twins.items[0].score == 0.5);
  CHECK(twins.items[1].score == 0.5);

  auto ab = base_scores(t, "ctx", {plan_of({"TRAIN SCV"}), plan_of({"WAIT"})});
  CHECK(ab.items[0].tokens == 2);
  CHECK(ab.items[0].words == 2);
  CHECK(ab.items[0].sum_logprob == -2.0);
  CHECK(ab.items[0].logit == -1.0);
  CHECK(ab.items[1].logit == -3.0);
  // e^-1 / (e^-1 + e^-3), computed separately.
  CHECK(std::fabs(ab.items[0].score - 0.8807970779778824) < 1e-12);
  CHECK(std::fabs(ab.items[1].score - 0.11920292202211755) < 1e-12);
}

TEST_CASE("base scores agree with the direct oracle on random tables") {
  std::mt19937_64 rng(2024);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    auto problem = test::random_scoring_problem(rng);
    auto got = base_scores(problem.table, problem.prompt, problem.candidates);
    auto want = test::oracle_scores(problem);
    REQUIRE(got.items.size() == want.size());
    for (std::size_t i = 0; i < want.size(); ++i) {
      worst = std::max(worst, std::fabs(got.items[i].logit - want[i].first));
      worst = std::max(worst, std::fabs(got.items[i].score - want[i].second));
      CHECK(got.items[i].score > 0.0);
    }
    CHECK(std::fabs(sum(got.scores()) - 1.0) <= 1e-9);
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("property: length regularization and permutation equivariance") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> lp(-5.0, -0.1);
  for (int trial = 0; trial < 100; ++trial) {
    TableBackend t(-10.0);
    std::vector<std::string> actions;
    const int n = 1 + static_cast<int>(rng() % 4);
    for (int i = 0; i < n; ++i) {
      const std::string name = "U" + std::to_string(trial) + "_" + std::to_string(i);
      const double v = lp(rng);
      // The same word with and without the separator scores identically.
      t.set_any_context(name, v);
      t.set_any_context(name + ";", v);
      t.set_any_context("TRAIN", -0.5);
      actions.push_back("TRAIN " + name);
    }
    std::vector<std::string> doubled = actions;
    doubled.insert(doubled.end(), actions.begin(), actions.end());
    auto s = base_scores(t, "ctx", {plan_of(actions), plan_of(doubled), plan_of({"TRAIN X"})});
    CHECK(s.items[1].words == 2 * s.items[0].words);
    CHECK(std::fabs(s.items[1].sum_logprob - 2 * s.items[0].sum_logprob) < 1e-12);
    CHECK(std::fabs(s.items[0].logit - s.items[1].logit) < 1e-12);
    CHECK(std::fabs(s.items[0].score - s.items[1].score) < 1e-12);
  }

  HashBackend h(3);
  std::vector<Plan> c{plan_of({"TRAIN SCV"}), plan_of({"BUILD REFINERY"}), plan_of({}),
                      plan_of({"BUILD SUPPLYDEPOT", "TRAIN SCV"})};
  const auto obs = initial_obs();
  const auto task = env::reference_task(env::Difficulty::kHard);
  const CriticState theta = [] {
    CriticState s = CriticState::initial(4);
    // Non-zero output layer so the head matters.
    std::mt19937_64 r(5);
    for (int i = 0; i < kHidden; ++i) s.params[CriticState::layout().w2 + i] = uniform01(r) - 0.5;
    return s;
  }();
  auto base = base_scores(h, "ctx", c);
  auto pol = policy_distribution(theta, obs, task, c, base);
  std::vector<int> perm{2, 0, 3, 1};
  std::vector<Plan> pc;
  for (int i : perm) pc.push_back(c[i]);
  auto pbase = base_scores(h, "ctx", pc);
  auto ppol = policy_distribution(theta, obs, task, pc, pbase);
  for (std::size_t k = 0; k < perm.size(); ++k) {
    CHECK(pbase.items[k].score == doctest::Approx(base.items[perm[k]].score).epsilon(1e-12));
    CHECK(ppol[k] == doctest::Approx(pol[perm[k]]).epsilon(1e-12));
  }
}

TEST_CASE("scoring charges the critic side of the ledger") {
  TableBackend t(-1.0);
  llm::TokenLedger ledger;
  base_scores(t, "one two three", {plan_of({"TRAIN SCV"}), plan_of({})}, &ledger);
  // Each candidate bills 3 context tokens plus its own 2.
  CHECK(ledger.snapshot() == llm::TokenCounts{0, 0, 10, 0});
}

TEST_CASE("hash backend is deterministic and in range") {
  HashBackend h(1);
  auto a = h.score("context", " TRAIN SCV; BUILD X");
  auto b = h.score("context", " TRAIN SCV; BUILD X");
  REQUIRE(a.tokens.size() == 4);
  for (std::size_t i = 0; i < a.tokens.size(); ++i) {
    CHECK(a.tokens[i].logprob == b.tokens[i].logprob);
    CHECK(a.tokens[i].logprob <= -0.1);
    CHECK(a.tokens[i].logprob >= -4.0);
  }
  CHECK(h.score("other", " TRAIN SCV; BUILD X").tokens[0].logprob != a.tokens[0].logprob);
  CHECK(HashBackend(2).score("context", " TRAIN").tokens[0].logprob != a.tokens[0].logprob);
}

TEST_CASE("table backend rejects positive logprobs and reads JSON") {
  TableBackend t;
  CHECK_THROWS_AS(t.set_any_context("x", 0.5), ConfigError);
  auto j = nlohmann::json::parse(
      R"({"default": -7, "entries": [{"context": "*", "token": "A", "logprob": -1},
          {"context": "ctx", "token": "A", "logprob": -2}]})");
  auto tb = TableBackend::from_json(j);
  CHECK(tb.lookup("ctx", " A") == -2.0);
  CHECK(tb.lookup("other", "A") == -1.0);
  CHECK(tb.lookup("other", "B") == -7.0);
  BackendSpec spec;
  spec.kind = "gpt-banana";
  CHECK_THROWS_AS(make_backend(spec), ConfigError);
}

TEST_CASE("http backend request shape and response parsing") {
  HttpBackendConfig cfg;
  cfg.url = "http://127.0.0.1:1/v1/completions";
  cfg.model = "tiny";
  nlohmann::json seen;
  HttpLogprobBackend backend(cfg, [&](const net::HttpRequest& r) {
    seen = nlohmann::json::parse(r.body);
    nlohmann::json resp = {
        {"choices",
         {{{"logprobs",
            {{"tokens", {"Chosen", " plan", ":", " TRAIN", " SCV"}},
             {"token_logprobs", {nullptr, -0.5, -0.25, -1.0, -2.0}},
             {"text_offset", {0, 6, 11, 12, 18}}}}}}},
        {"usage", {{"prompt_tokens", 5}, {"completion_tokens", 0}}}};
    return net::HttpResponse{200, resp.dump()};
  });
  auto r = backend.score("Chosen plan:", " TRAIN SCV");
  CHECK(seen["prompt"] == "Chosen plan: TRAIN SCV");
  CHECK(seen["echo"] == true);
  CHECK(seen["max_tokens"] == 0);
  CHECK(seen["logprobs"] == 0);
  REQUIRE(r.tokens.size() == 2);
  CHECK(r.tokens[0].token == " TRAIN");
  CHECK(r.tokens[1].logprob == -2.0);
  CHECK(r.input_tokens == 5);

  HttpLogprobBackend broken(cfg, [](const net::HttpRequest&) { return net::HttpResponse{200, "{}"}; });
  CHECK_THROWS_AS(broken.score("a", " b"), ScoringError);
  HttpLogprobBackend denied(cfg, [](const net::HttpRequest&) { return net::HttpResponse{401, "no"}; });
  CHECK_THROWS_AS(denied.score("a", " b"), TransportError);
}

TEST_CASE("http client talks to a real local server") {
  httplib::Server server;
  std::string auth;
  server.Post("/v1/completions", [&](const httplib::Request& req, httplib::Response& res) {
    auth = req.get_header_value("Authorization");
    auto body = nlohmann::json::parse(req.body);
    const std::string prompt = body["prompt"];
    nlohmann::json resp = {{"choices",
                            {{{"logprobs",
                               {{"tokens", {prompt.substr(0, 3), prompt.substr(3)}},
                                {"token_logprobs", {nullptr, -1.5}},
                                {"text_offset", {0, 3}}}}}}},
                           {"usage", {{"prompt_tokens", 2}}}};
    res.set_content(resp.dump(), "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  HttpBackendConfig cfg;
  cfg.url = "http://127.0.0.1:" + std::to_string(port) + "/v1/completions";
  cfg.api_key = "secret";
  HttpLogprobBackend backend(cfg);
  auto r = backend.score("abc", " def");
  server.stop();
  th.join();
  REQUIRE(r.tokens.size() == 1);
  CHECK(r.tokens[0].logprob == -1.5);
  CHECK(auth == "Bearer secret");
}

TEST_CASE("retry policy backs off exponentially and gives up") {
  int calls = 0;
  std::vector<double> sleeps;
  net::RetryPolicy policy;
  policy.jitter = 0.0;
  auto flaky = [&](const net::HttpRequest&) {
    ++calls;
    if (calls < 3) return net::HttpResponse{503, "busy"};
    return net::HttpResponse{200, "ok"};
  };
  auto r = net::post_with_retries({}, policy, 1, flaky, [&](double s) { sleeps.push_back(s); });
  CHECK(r.body == "ok");
  CHECK(sleeps == std::vector<double>{0.5, 1.0});

  calls = 0;
  sleeps.clear();
  auto dead = [&](const net::HttpRequest&) -> net::HttpResponse {
    ++calls;
    throw TransportError("connection refused");
  };
  CHECK_THROWS_AS(net::post_with_retries({}, policy, 1, dead, [&](double s) { sleeps.push_back(s); }),
                  TransportError);
  CHECK(calls == 4);
  CHECK(sleeps == std::vector<double>{0.5, 1.0, 2.0});

  // Client errors are not retried.
  calls = 0;
  auto bad = [&](const net::HttpRequest&) {
    ++calls;
    return net::HttpResponse{400, "bad"};
  };
  CHECK(net::post_with_retries({}, policy, 1, bad, [](double) {}).status == 400);
  CHECK(calls == 1);
  CHECK_THROWS_AS(net::split_url("ftp://x/y"), ConfigError);
  CHECK(net::split_url("http://h:8/a/b") == std::pair<std::string, std::string>{"http://h:8", "/a/b"});
}

TEST_CASE("policy head: initial transparency, shift invariance, softmax oracle") {
  const auto obs = initial_obs();
  const auto task = env::reference_task(env::Difficulty::kHard);
  HashBackend h;
  std::vector<Plan> c{plan_of({"TRAIN SCV"}), plan_of({"BUILD REFINERY"}), plan_of({})};
  auto base = base_scores(h, build_critic_prompt(obs, task, c), c);
  CriticState fresh = CriticState::initial(1);
  CHECK(policy_distribution(fresh, obs, task, c, base) == base.scores());

  std::vector<double> l{0.3, -1.2, 2.5};
  std::vector<double> shifted{100.3, 98.8, 102.5};
  auto p1 = softmax(l);
  auto p2 = softmax(shifted);
  for (int i = 0; i < 3; ++i) CHECK(p1[i] == doctest::Approx(p2[i]).epsilon(1e-12));

  std::vector<double> forced{10.0, 0.0, 0.0};
  auto pf = softmax(forced);
  CHECK(std::fabs(pf[0] - 0.9999092083843409) < 1e-12);
  CHECK(std::fabs(sum(pf) - 1.0) < 1e-15);

  auto extreme = softmax(std::vector<double>{0.0, -5000.0});
  CHECK(extreme[1] > 0.0);
  CHECK_THROWS_AS(softmax(std::vector<double>{0.0, NAN}), NumericError);
  CHECK_THROWS_AS(plan_features(obs, task, c[0], NAN), NumericError);
}

TEST_CASE("select_plan") {
  std::mt19937_64 rng(42);
  CHECK(select_plan(std::vector<double>{1.0}, rng, SelectMode::kSample) == 0);
  for (int i = 0; i < 100; ++i) {
    CHECK(select_plan(std::vector<double>{0.0, 1.0, 0.0}, rng, SelectMode::kSample) == 1);
  }
  CHECK(select_plan(std::vector<double>{0.3, 0.35, 0.35}, rng, SelectMode::kArgmax) == 1);

  // The first output of mt19937_64(42) is 13930160852258120406 (fixed by the
  // standard), so the draw is 0.7551555329... and lands in the second half.
  std::mt19937_64 seeded(42);
  CHECK(uniform01(seeded) == 0.755155532954539);
  std::mt19937_64 again(42);
  CHECK(select_plan(std::vector<double>{0.5, 0.5}, again, SelectMode::kSample) == 1);

  // Empirical frequencies follow the distribution.
  std::mt19937_64 r(7);
  int hits = 0;
  for (int i = 0; i < 20000; ++i) hits += select_plan(std::vector<double>{0.2, 0.8}, r, SelectMode::kSample);
  CHECK(hits / 20000.0 == doctest::Approx(0.8).epsilon(0.02));
}

TEST_CASE("value head") {
  const auto obs = initial_obs();
  const auto task = env::reference_task(env::Difficulty::kHard);
  CriticState s = CriticState::initial(2);
  CHECK(value_estimate(s, obs, task) == 0.0);
  std::mt19937_64 r(3);
  for (double& p : s.params) p += 0.1 * (uniform01(r) - 0.5);
  const double v = value_estimate(s, obs, task);
  CHECK(v != 0.0);
  CHECK(value_estimate(s, obs, task) == v);
  s.params[CriticState::layout().c2] = INFINITY;
  CHECK_THROWS_AS(value_estimate(s, obs, task), NumericError);
}

TEST_CASE("backend output is unaffected by critic updates") {
  HashBackend h;
  auto before = h.score("ctx", " TRAIN SCV");
  CriticState s = CriticState::initial(0);
  for (double& p : s.params) p *= 2.0;
  auto after = h.score("ctx", " TRAIN SCV");
  CHECK(before.tokens[0].logprob == after.tokens[0].logprob);
}

TEST_CASE("checkpoints round-trip exactly and reject foreign shapes") {
  auto dir = temp_dir("ckpt");
  CriticState s = CriticState::initial(11);
  std::mt19937_64 r(1);
  for (double& p : s.params) p += uniform01(r) * 1e-3;
  save_checkpoint(s, dir / "theta.json");
  CHECK(load_checkpoint(dir / "theta.json") == s);

  auto j = nlohmann::json::parse(test::read_file(dir / "theta.json"));
  j["dims"]["rank"] = 8;
  std::ofstream(dir / "bad.json") << j.dump();
  CHECK_THROWS_AS(load_checkpoint(dir / "bad.json"), LoadError);
  std::ofstream(dir / "junk.json") << "{";
  CHECK_THROWS_AS(load_checkpoint(dir / "junk.json"), LoadError);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.json"), LoadError);
  std::filesystem::remove_all(dir);
}
