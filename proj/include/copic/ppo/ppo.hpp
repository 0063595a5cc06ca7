#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <vector>

#include "copic/critic/critic.hpp"

namespace copic::ppo {

using critic::CriticState;
using planlang::Plan;

/// One plan selection. Base logits and features are frozen when the
/// decision is made so replaying the buffer depends only on theta.
struct Transition {
  env::TaskSpec task;
  env::Observation obs;
  std::vector<Plan> candidates;
  std::vector<double> base_logits;
  std::vector<std::vector<double>> features;  // plan_features per candidate
  std::vector<double> env_x;                  // env_features(obs)
  int chosen = 0;
  double logprob_old = 0.0;
  double reward = 0.0;
  env::Observation next_obs;
  std::vector<double> next_env_x;
  bool done = false;

  /// Throws PreconditionError when shapes or ranges are off.
  void validate() const;
};

/// Fills the derived feature fields from the decision inputs.
Transition make_transition(const env::TaskSpec& task, const env::Observation& obs,
                           std::vector<Plan> candidates, std::vector<double> base_logits, int chosen,
                           double logprob_old, double reward, const env::Observation& next_obs,
                           bool done);

class RolloutBuffer {
 public:
  explicit RolloutBuffer(std::size_t capacity);

  /// Throws PreconditionError when full or when the transition is invalid.
  void push(Transition t);
  void clear() { items_.clear(); }
  bool full() const { return items_.size() >= capacity_; }
  bool empty() const { return items_.empty(); }
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Transition& operator[](std::size_t i) const { return items_[i]; }
  std::span<const Transition> items() const { return items_; }

 private:
  std::size_t capacity_;
  std::vector<Transition> items_;
};

struct PpoConfig {
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip_eps = 0.2;
  int epochs = 4;
  int minibatch = 32;
  double lr = 3e-4;
  double value_coef = 0.5;
  double entropy_coef = 0.01;
  double max_grad_norm = 0.5;

  /// Throws ConfigError for out-of-range values.
  void validate() const;
};

struct GaeResult {
  std::vector<double> raw_advantages;
  std::vector<double> advantages;  // normalized
  std::vector<double> returns;     // raw_advantages + V
};

/// Generalized advantage estimation over the buffer in order; `done` cuts
/// the bootstrap. Advantages are normalized to mean 0 and std 1 unless the
/// std is below 1e-8, in which case they are only centered.
GaeResult compute_gae(std::span<const Transition> buffer, const CriticState& theta, const PpoConfig& cfg);

struct LossParts {
  double total = 0.0;
  double policy = 0.0;
  double value = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
};

/// Clipped-surrogate loss over the transitions at `idx`:
///   -mean(min(r A, clip(r, 1-eps, 1+eps) A)) + c_v mean((V - R)^2) - c_e mean(H).
/// When `grad` is non-null the exact gradient with respect to theta.params is
/// written to it.
LossParts ppo_loss(const CriticState& theta, std::span<const Transition> buffer,
                   std::span<const std::size_t> idx, std::span<const double> advantages,
                   std::span<const double> returns, const PpoConfig& cfg, std::vector<double>* grad);

/// log pi_theta(chosen) for a stored transition.
double log_prob(const CriticState& theta, const Transition& t);

class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(std::vector<double>& params, std::span<const double> grad);
  long steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<double> m_, v_;
};

/// Scales `grad` so its L2 norm is at most max_norm; returns the norm before.
double clip_grad_norm(std::span<double> grad, double max_norm);

struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double kl = 0.0;  // mean(logprob_old - logprob_new) after the update
  double mean_reward = 0.0;
  double clip_fraction = 0.0;
};

/// Owns the optimizer state and shuffling RNG across fine-tunes.
class PpoTrainer {
 public:
  PpoTrainer(PpoConfig cfg, std::uint64_t seed);

  /// Runs cfg.epochs passes of shuffled minibatches. On a non-finite loss or
  /// gradient, theta is restored and NumericError is thrown. The buffer is
  /// not cleared.
  UpdateStats update(CriticState& theta, const RolloutBuffer& buffer);

  int updates() const { return updates_; }
  const PpoConfig& config() const { return cfg_; }

 private:
  PpoConfig cfg_;
  Adam adam_;
  std::mt19937_64 rng_;
  int updates_ = 0;
};

/// Appends one row (update_idx, policy_loss, value_loss, entropy, kl,
/// mean_reward), writing the header when the file is new.
void append_stats_csv(const std::filesystem::path& path, int update_idx, const UpdateStats& s);

/// Environment-free check of the trainer: three fixed decision points with
/// three candidates each and equal base logits. Choosing `best_arm` pays
/// `reward`, anything else pays 0.
struct BanditFixture {
  std::vector<env::Observation> observations;
  env::TaskSpec task;
  std::vector<Plan> arms;
  int best_arm = 0;
  double reward = 1.0;

  static BanditFixture standard(int best_arm, double reward = 1.0);
};

struct BanditCurve {
  std::vector<double> best_arm_prob;  // mean over decision points, after each update
  std::vector<std::vector<double>> final_distributions;
  int updates_to_threshold = -1;      // first update with prob > threshold, or -1
};

/// One-step bandit over fixed decision points: candidate `best` pays
/// `reward`, every other candidate pays 0. Each update samples
/// cfg.minibatch decisions from the current policy, then runs PPO.
/// Stops early once the mean probability of `best` exceeds `stop_above`.
BanditCurve preference_train(std::span<const Transition> decisions, int best, double reward,
                             CriticState& theta, const PpoConfig& cfg, int max_updates, std::uint64_t seed,
                             double stop_above = 0.95);

/// preference_train on the fixture's decision points. Stops early once the best arm's
/// probability exceeds `stop_above` (pass > 1 to always run max_updates).
BanditCurve bandit_sanity_train(const BanditFixture& fixture, CriticState& theta, const PpoConfig& cfg,
                                int max_updates, std::uint64_t seed, double stop_above = 0.95);

}  // namespace copic::ppo
