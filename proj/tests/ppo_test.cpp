#include <doctest.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "copic/errors.hpp"
#include "copic/ppo/ppo.hpp"
#include "ppo_oracle.hpp"

using namespace copic;
using namespace copic::ppo;

namespace {

using test::brute_force_gae;
using test::random_obs;
using test::random_theta;
using test::random_transition;

double loss_at(const CriticState& theta, const std::vector<Transition>& buf, const std::vector<std::size_t>& idx,
               const std::vector<double>& adv, const std::vector<double>& ret, const PpoConfig& cfg) {
  return ppo_loss(theta, buf, idx, adv, ret, cfg, nullptr).total;
}

}  // namespace

TEST_CASE("GAE matches the brute-force definition") {
  std::mt19937_64 rng(11);
  PpoConfig cfg;
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const CriticState theta = random_theta(rng);
    std::uniform_int_distribution<int> len(1, 40);
    std::vector<Transition> buf;
    const int n = len(rng);
    for (int i = 0; i < n; ++i) buf.push_back(random_transition(rng));
    const auto expect = brute_force_gae(buf, theta, cfg.gamma, cfg.gae_lambda);
    const auto got = compute_gae(buf, theta, cfg);
    REQUIRE(got.raw_advantages.size() == expect.size());
    for (int i = 0; i < n; ++i) {
      worst = std::max(worst, std::abs(got.raw_advantages[i] - expect[i]));
      CHECK(got.returns[i] == doctest::Approx(expect[i] + critic::value_forward(theta, buf[i].env_x)).epsilon(1e-12));
    }
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("single terminal transition has advantage equal to its reward") {
  std::mt19937_64 rng(3);
  Transition t = random_transition(rng);
  t.reward = 1.0;
  t.done = true;
  const auto r = compute_gae(std::vector<Transition>{t}, CriticState::initial(1), PpoConfig{});
  CHECK(r.raw_advantages[0] == 1.0);
  CHECK(r.returns[0] == 1.0);
  CHECK(r.advantages[0] == 0.0);  // centered only, std is zero
}

TEST_CASE("normalized advantages have zero mean and unit std") {
  std::mt19937_64 rng(5);
  const CriticState theta = random_theta(rng);
  std::vector<Transition> buf;
  for (int i = 0; i < 64; ++i) buf.push_back(random_transition(rng));
  const auto r = compute_gae(buf, theta, PpoConfig{});
  double mean = 0.0, sq = 0.0;
  for (double a : r.advantages) mean += a / 64.0;
  for (double a : r.advantages) sq += (a - mean) * (a - mean) / 64.0;
  CHECK(std::abs(mean) < 1e-12);
  CHECK(std::sqrt(sq) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("analytic loss gradient agrees with central differences") {
  std::mt19937_64 rng(2024);
  PpoConfig cfg;
  const double h = 1e-5;
  double worst = 0.0;
  int draws = 0;
  while (draws < 100) {
    const CriticState theta = random_theta(rng);
    std::vector<Transition> buf;
    for (int i = 0; i < 6; ++i) buf.push_back(random_transition(rng, &theta));
    // Central differences are meaningless across the clip kinks; redraw when
    // any ratio sits within 1e-3 of one.
    bool near_kink = false;
    for (const auto& t : buf) {
      const double r = std::exp(log_prob(theta, t) - t.logprob_old);
      near_kink |= std::abs(r - (1.0 - cfg.clip_eps)) < 1e-3 || std::abs(r - (1.0 + cfg.clip_eps)) < 1e-3;
    }
    if (near_kink) continue;
    ++draws;
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> adv(buf.size()), ret(buf.size());
    for (std::size_t i = 0; i < buf.size(); ++i) {
      adv[i] = n(rng);
      ret[i] = n(rng);
    }
    std::vector<std::size_t> idx = {0, 1, 2, 3, 4, 5};
    std::vector<double> grad;
    ppo_loss(theta, buf, idx, adv, ret, cfg, &grad);
    // A random subset of coordinates keeps the test fast while every block
    // of the layout is hit across draws.
    std::uniform_int_distribution<std::size_t> coord(0, theta.params.size() - 1);
    for (int c = 0; c < 40; ++c) {
      const std::size_t k = c == 0 ? CriticState::layout().alpha : coord(rng);
      CriticState plus = theta, minus = theta;
      plus.params[k] += h;
      minus.params[k] -= h;
      const double fd = (loss_at(plus, buf, idx, adv, ret, cfg) - loss_at(minus, buf, idx, adv, ret, cfg)) / (2 * h);
      const double rel = std::abs(fd - grad[k]) / std::max({std::abs(fd), std::abs(grad[k]), 1e-5});
      worst = std::max(worst, rel);
    }
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("clipped branch contributes no policy gradient") {
  std::mt19937_64 rng(8);
  PpoConfig cfg;
  cfg.entropy_coef = 0.0;
  cfg.value_coef = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const CriticState theta = random_theta(rng);
    Transition t = random_transition(rng);
    const double lp = log_prob(theta, t);
    std::vector<std::size_t> idx = {0};
    std::vector<double> ret = {0.0};
    std::vector<double> grad;
    // Ratio far above 1 + eps with positive advantage.
    t.logprob_old = lp - 1.0;
    std::vector<Transition> buf = {t};
    auto loss = ppo_loss(theta, buf, idx, std::vector<double>{1.5}, ret, cfg, &grad);
    CHECK(loss.clip_fraction == 1.0);
    CHECK(loss.policy == doctest::Approx(-(1.0 + cfg.clip_eps) * 1.5));
    for (double g : grad) CHECK(g == 0.0);
    // Ratio far below 1 - eps with negative advantage.
    if (lp < -0.05) {
      buf[0].logprob_old = std::min(0.0, lp + 1.0);
      if (std::exp(lp - buf[0].logprob_old) < 1.0 - cfg.clip_eps) {
        ppo_loss(theta, buf, idx, std::vector<double>{-0.7}, ret, cfg, &grad);
        for (double g : grad) CHECK(g == 0.0);
      }
    }
  }
}

TEST_CASE("surrogate is pessimistic: never above the unclipped objective") {
  std::mt19937_64 rng(17);
  PpoConfig cfg;
  cfg.entropy_coef = 0.0;
  cfg.value_coef = 0.0;
  for (int trial = 0; trial < 300; ++trial) {
    const CriticState theta = random_theta(rng, 0.6);
    std::vector<Transition> buf = {random_transition(rng, &theta)};
    std::normal_distribution<double> n(0.0, 1.0);
    const double a = n(rng);
    const double ratio = std::exp(log_prob(theta, buf[0]) - buf[0].logprob_old);
    std::vector<std::size_t> idx = {0};
    const auto loss = ppo_loss(theta, buf, idx, std::vector<double>{a}, std::vector<double>{0.0}, cfg, nullptr);
    CHECK(-loss.policy <= ratio * a + 1e-12);
    CHECK(-loss.policy <= std::max(1.0 - cfg.clip_eps, std::min(ratio, 1.0 + cfg.clip_eps)) * a + 1e-12);
  }
}

TEST_CASE("Adam first step moves each coordinate by lr against the gradient sign") {
  Adam adam(0.01);
  std::vector<double> p = {1.0, -2.0, 0.5};
  const std::vector<double> g = {3.0, -0.001, 0.0};
  adam.step(p, g);
  CHECK(p[0] == doctest::Approx(0.99).epsilon(1e-9));
  CHECK(p[1] == doctest::Approx(-1.99).epsilon(1e-6));
  CHECK(p[2] == 0.5);
  CHECK(adam.steps() == 1);
}

TEST_CASE("gradient norm clipping") {
  std::vector<double> g = {3.0, 4.0};
  CHECK(clip_grad_norm(g, 0.5) == doctest::Approx(5.0));
  CHECK(g[0] == doctest::Approx(0.3));
  CHECK(g[1] == doctest::Approx(0.4));
  std::vector<double> small = {0.1, 0.1};
  clip_grad_norm(small, 0.5);
  CHECK(small[0] == 0.1);
}

TEST_CASE("buffer and config preconditions") {
  std::mt19937_64 rng(1);
  RolloutBuffer buf(2);
  buf.push(random_transition(rng));
  buf.push(random_transition(rng));
  CHECK(buf.full());
  CHECK_THROWS_AS(buf.push(random_transition(rng)), PreconditionError);
  CHECK_THROWS_AS(RolloutBuffer(0), PreconditionError);

  Transition bad = random_transition(rng);
  bad.chosen = 99;
  RolloutBuffer other(4);
  CHECK_THROWS_AS(other.push(bad), PreconditionError);

  PpoConfig cfg;
  cfg.clip_eps = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = PpoConfig{};
  cfg.gamma = 1.5;
  CHECK_THROWS_AS(PpoTrainer(cfg, 1), ConfigError);
  PpoTrainer trainer(PpoConfig{}, 1);
  CriticState theta = CriticState::initial(1);
  CHECK_THROWS_AS(trainer.update(theta, RolloutBuffer(3)), PreconditionError);
}

TEST_CASE("non-finite loss aborts the update and leaves theta untouched") {
  std::mt19937_64 rng(4);
  RolloutBuffer buf(4);
  for (int i = 0; i < 4; ++i) {
    Transition t = random_transition(rng);
    t.reward = i == 2 ? 1e308 : 0.0;
    t.done = true;
    buf.push(t);
  }
  CriticState theta = random_theta(rng);
  const CriticState before = theta;
  PpoTrainer trainer(PpoConfig{}, 9);
  CHECK_THROWS_AS(trainer.update(theta, buf), NumericError);
  CHECK(theta == before);
  CHECK(trainer.updates() == 0);
}

TEST_CASE("updates are deterministic for a fixed seed") {
  std::mt19937_64 rng(21);
  CriticState base_theta = random_theta(rng);
  RolloutBuffer buf(40);
  while (!buf.full()) buf.push(random_transition(rng, &base_theta));
  CriticState a = base_theta, b = base_theta;
  PpoTrainer ta(PpoConfig{}, 77), tb(PpoConfig{}, 77);
  const auto sa = ta.update(a, buf);
  const auto sb = tb.update(b, buf);
  CHECK(a == b);
  CHECK(sa.kl == sb.kl);
  CHECK(!(a == base_theta));
}

TEST_CASE("stats csv appends rows under one header") {
  const auto path = std::filesystem::temp_directory_path() / "copic_ppo_stats_test.csv";
  std::filesystem::remove(path);
  UpdateStats s;
  s.policy_loss = 0.5;
  append_stats_csv(path, 0, s);
  append_stats_csv(path, 1, s);
  std::ifstream in(path);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  REQUIRE(lines.size() == 3);
  CHECK(lines[0] == "update_idx,policy_loss,value_loss,entropy,kl,mean_reward");
  CHECK(lines[2].rfind("1,0.5,", 0) == 0);
  std::filesystem::remove(path);
}

TEST_CASE("bandit: trainer learns the paying arm") {
  const auto start = std::chrono::steady_clock::now();
  for (int arm : {0, 2}) {
    CriticState theta = CriticState::initial(5);
    const auto curve = bandit_sanity_train(BanditFixture::standard(arm), theta, PpoConfig{}, 2000, 13);
    INFO("arm " << arm << " stopped after " << curve.best_arm_prob.size());
    CHECK(curve.updates_to_threshold > 0);
    CHECK(curve.updates_to_threshold <= 2000);
    for (const auto& d : curve.final_distributions) CHECK(d[arm] > 0.9);
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  CHECK(secs < 60.0);
}

TEST_CASE("bandit: zero reward leaves the policy near uniform") {
  CriticState theta = CriticState::initial(5);
  const auto curve = bandit_sanity_train(BanditFixture::standard(1, 0.0), theta, PpoConfig{}, 200, 13, 2.0);
  CHECK(curve.best_arm_prob.size() == 200);
  for (const auto& d : curve.final_distributions) {
    double tv = 0.0;
    for (double p : d) tv += 0.5 * std::abs(p - 1.0 / 3.0);
    CHECK(tv <= 0.1);
  }
}
