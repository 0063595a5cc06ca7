#include "copic/ppo/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "copic/errors.hpp"
#include "copic/kernels/kernels.hpp"

namespace copic::ppo {

namespace {

std::vector<double> logits_of(const CriticState& theta, const Transition& t,
                              std::vector<critic::HeadCache>* caches) {
  std::vector<double> l(t.candidates.size());
  if (caches != nullptr) caches->resize(l.size());
  for (std::size_t j = 0; j < l.size(); ++j) {
    l[j] = theta.alpha() * t.base_logits[j] +
           critic::head_output(theta, t.features[j], caches != nullptr ? &(*caches)[j] : nullptr);
  }
  return l;
}

// log-softmax via the max shift.
std::vector<double> log_softmax(const std::vector<double>& l) {
  const double m = *std::max_element(l.begin(), l.end());
  double z = 0.0;
  for (double x : l) z += std::exp(x - m);
  const double lse = m + std::log(z);
  std::vector<double> out(l.size());
  for (std::size_t i = 0; i < l.size(); ++i) out[i] = l[i] - lse;
  return out;
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

void Transition::validate() const {
  const std::size_t n = candidates.size();
  if (n == 0) throw PreconditionError("transition without candidates");
  if (base_logits.size() != n || features.size() != n) {
    throw PreconditionError("transition candidate arrays disagree in length");
  }
  for (const auto& f : features) {
    if (f.size() != static_cast<std::size_t>(critic::kFeatureDim)) {
      throw PreconditionError("transition feature vector has wrong size");
    }
  }
  if (env_x.size() != static_cast<std::size_t>(critic::kEnvFeatures) ||
      next_env_x.size() != static_cast<std::size_t>(critic::kEnvFeatures)) {
    throw PreconditionError("transition value input has wrong size");
  }
  if (chosen < 0 || static_cast<std::size_t>(chosen) >= n) {
    throw PreconditionError("chosen index " + std::to_string(chosen) + " out of range");
  }
  if (!std::isfinite(logprob_old) || logprob_old > 0.0) {
    throw PreconditionError("logprob_old must be finite and <= 0");
  }
  if (!std::isfinite(reward)) throw PreconditionError("non-finite reward");
}

Transition make_transition(const env::TaskSpec& task, const env::Observation& obs,
                           std::vector<Plan> candidates, std::vector<double> base_logits, int chosen,
                           double logprob_old, double reward, const env::Observation& next_obs,
                           bool done) {
  Transition t;
  t.task = task;
  t.obs = obs;
  t.candidates = std::move(candidates);
  t.base_logits = std::move(base_logits);
  if (t.base_logits.size() != t.candidates.size()) {
    throw PreconditionError("one base logit per candidate required");
  }
  for (std::size_t i = 0; i < t.candidates.size(); ++i) {
    t.features.push_back(critic::plan_features(obs, task, t.candidates[i], t.base_logits[i]));
  }
  t.env_x = critic::env_features(obs, task);
  t.chosen = chosen;
  t.logprob_old = logprob_old;
  t.reward = reward;
  t.next_obs = next_obs;
  t.next_env_x = critic::env_features(next_obs, task);
  t.done = done;
  t.validate();
  return t;
}

RolloutBuffer::RolloutBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw PreconditionError("buffer capacity must be positive");
  items_.reserve(capacity);
}

void RolloutBuffer::push(Transition t) {
  if (full()) throw PreconditionError("rollout buffer is full");
  t.validate();
  items_.push_back(std::move(t));
}

void PpoConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("ppo: " + m); };
  if (!(gamma > 0.0 && gamma <= 1.0)) fail("gamma must be in (0, 1]");
  if (!(gae_lambda > 0.0 && gae_lambda <= 1.0)) fail("gae_lambda must be in (0, 1]");
  if (!(clip_eps > 0.0)) fail("clip_eps must be positive");
  if (epochs < 1) fail("epochs must be >= 1");
  if (minibatch < 1) fail("minibatch must be >= 1");
  if (!(lr > 0.0)) fail("lr must be positive");
  if (!(value_coef >= 0.0) || !(entropy_coef >= 0.0)) fail("loss coefficients must be >= 0");
  if (!(max_grad_norm > 0.0)) fail("max_grad_norm must be positive");
}

GaeResult compute_gae(std::span<const Transition> buffer, const CriticState& theta, const PpoConfig& cfg) {
  if (buffer.empty()) throw PreconditionError("compute_gae on an empty buffer");
  const std::size_t n = buffer.size();
  GaeResult r;
  r.raw_advantages.assign(n, 0.0);
  r.returns.assign(n, 0.0);
  double next_adv = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    const Transition& t = buffer[k];
    const double v = critic::value_forward(theta, t.env_x);
    const double not_done = t.done ? 0.0 : 1.0;
    const double v_next = t.done ? 0.0 : critic::value_forward(theta, t.next_env_x);
    const double delta = t.reward + cfg.gamma * v_next * not_done - v;
    next_adv = delta + cfg.gamma * cfg.gae_lambda * next_adv * not_done;
    r.raw_advantages[k] = next_adv;
    r.returns[k] = next_adv + v;
  }
  const double mean = std::accumulate(r.raw_advantages.begin(), r.raw_advantages.end(), 0.0) / n;
  double var = 0.0;
  for (double a : r.raw_advantages) var += (a - mean) * (a - mean);
  const double sd = std::sqrt(var / n);
  r.advantages.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    r.advantages[i] = sd < 1e-8 ? r.raw_advantages[i] - mean : (r.raw_advantages[i] - mean) / sd;
  }
  if (!all_finite(r.returns) || !all_finite(r.advantages)) throw NumericError("non-finite advantage");
  return r;
}

double log_prob(const CriticState& theta, const Transition& t) {
  return log_softmax(logits_of(theta, t, nullptr))[t.chosen];
}

LossParts ppo_loss(const CriticState& theta, std::span<const Transition> buffer,
                   std::span<const std::size_t> idx, std::span<const double> advantages,
                   std::span<const double> returns, const PpoConfig& cfg, std::vector<double>* grad) {
  if (idx.empty()) throw PreconditionError("empty minibatch");
  const double inv_b = 1.0 / static_cast<double>(idx.size());
  if (grad != nullptr) grad->assign(theta.params.size(), 0.0);
  const auto& layout = CriticState::layout();
  LossParts out;
  std::vector<critic::HeadCache> caches;
  for (std::size_t i : idx) {
    const Transition& t = buffer[i];
    const double adv = advantages[i];
    const auto logits = logits_of(theta, t, grad != nullptr ? &caches : nullptr);
    const auto logp = log_softmax(logits);
    const std::size_t n = logits.size();
    std::vector<double> p(n);
    double entropy = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      p[j] = std::exp(logp[j]);
      entropy -= p[j] * logp[j];
    }
    const double ratio = std::exp(logp[t.chosen] - t.logprob_old);
    const double clipped = std::clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
    const bool use_unclipped = ratio * adv <= clipped * adv;
    const double surrogate = use_unclipped ? ratio * adv : clipped * adv;
    if (!use_unclipped) out.clip_fraction += inv_b;

    critic::ValueCache vcache;
    const double v = critic::value_forward(theta, t.env_x, grad != nullptr ? &vcache : nullptr);
    const double verr = v - returns[i];

    out.policy -= surrogate * inv_b;
    out.value += verr * verr * inv_b;
    out.entropy += entropy * inv_b;

    if (grad == nullptr) continue;
    // d(surrogate)/d(ratio) is adv on the unclipped branch and 0 otherwise.
    const double ds_dr = use_unclipped ? adv : 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double indicator = j == static_cast<std::size_t>(t.chosen) ? 1.0 : 0.0;
      const double d_policy = -ds_dr * ratio * (indicator - p[j]);
      const double d_entropy = -p[j] * (logp[j] + entropy);
      const double g = inv_b * (d_policy - cfg.entropy_coef * d_entropy);
      (*grad)[layout.alpha] += g * t.base_logits[j];
      critic::head_backward(theta, t.features[j], caches[j], g, *grad);
    }
    critic::value_backward(theta, t.env_x, vcache, inv_b * cfg.value_coef * 2.0 * verr, *grad);
  }
  out.total = out.policy + cfg.value_coef * out.value - cfg.entropy_coef * out.entropy;
  return out;
}

Adam::Adam(double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(std::vector<double>& params, std::span<const double> grad) {
  if (grad.size() != params.size()) throw PreconditionError("gradient size mismatch");
  if (m_.empty()) {
    m_.assign(params.size(), 0.0);
    v_.assign(params.size(), 0.0);
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
    params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
  }
}

double clip_grad_norm(std::span<double> grad, double max_norm) {
  const double norm = std::sqrt(kernels::dot(grad, grad));
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (double& g : grad) g *= s;
  }
  return norm;
}

PpoTrainer::PpoTrainer(PpoConfig cfg, std::uint64_t seed) : cfg_(cfg), adam_(cfg.lr), rng_(seed) {
  cfg_.validate();
}

UpdateStats PpoTrainer::update(CriticState& theta, const RolloutBuffer& buffer) {
  if (buffer.empty()) throw PreconditionError("ppo update on an empty buffer");
  const CriticState backup = theta;
  const Adam adam_backup = adam_;
  try {
    const auto items = buffer.items();
    const GaeResult gae = compute_gae(items, theta, cfg_);
    std::vector<std::size_t> order(items.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> grad;
    UpdateStats stats;
    int batches = 0;
    for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
      // Fisher-Yates with the raw engine output keeps the order identical
      // across standard libraries.
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng_() % i]);
      for (std::size_t start = 0; start < order.size(); start += cfg_.minibatch) {
        const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg_.minibatch));
        std::span<const std::size_t> idx(order.data() + start, end - start);
        const LossParts loss = ppo_loss(theta, items, idx, gae.advantages, gae.returns, cfg_, &grad);
        if (!std::isfinite(loss.total) || !all_finite(grad)) throw NumericError("non-finite PPO loss");
        clip_grad_norm(grad, cfg_.max_grad_norm);
        adam_.step(theta.params, grad);
        stats.policy_loss += loss.policy;
        stats.value_loss += loss.value;
        stats.entropy += loss.entropy;
        stats.clip_fraction += loss.clip_fraction;
        ++batches;
      }
    }
    theta.check_finite();
    stats.policy_loss /= batches;
    stats.value_loss /= batches;
    stats.entropy /= batches;
    stats.clip_fraction /= batches;
    for (const auto& t : items) {
      stats.kl += (t.logprob_old - log_prob(theta, t)) / static_cast<double>(items.size());
      stats.mean_reward += t.reward / static_cast<double>(items.size());
    }
    ++updates_;
    return stats;
  } catch (const NumericError&) {
    theta = backup;
    adam_ = adam_backup;
    throw;
  }
}

void append_stats_csv(const std::filesystem::path& path, int update_idx, const UpdateStats& s) {
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream out(path, std::ios::app);
  if (!out) throw LoadError("cannot append to " + path.string());
  out.precision(17);
  if (fresh) out << "update_idx,policy_loss,value_loss,entropy,kl,mean_reward\n";
  out << update_idx << ',' << s.policy_loss << ',' << s.value_loss << ',' << s.entropy << ','
      << s.kl << ',' << s.mean_reward << '\n';
}

BanditFixture BanditFixture::standard(int best_arm, double reward) {
  if (best_arm < 0 || best_arm > 2) throw PreconditionError("bandit has three arms");
  BanditFixture f;
  f.task = env::reference_task(env::Difficulty::kHard);
  f.arms = {Plan{{"TRAIN SCV"}, 1}, Plan{{"BUILD REFINERY"}, 2}, Plan{{"BUILD SUPPLYDEPOT", "TRAIN SCV"}, 3}};
  f.best_arm = best_arm;
  f.reward = reward;
  for (int k = 0; k < 3; ++k) {
    env::Observation o;
    o.resource = {15 + 8 * k, 3 + k, 50 + 200 * k, 40 * k};
    o.building["COMMANDCENTER"] = 1;
    o.unit["SCV"] = 12 + 2 * k;
    o.tick = 30 * k;
    f.observations.push_back(o);
  }
  return f;
}

BanditCurve preference_train(std::span<const Transition> decisions, int best, double reward,
                             CriticState& theta, const PpoConfig& cfg, int max_updates, std::uint64_t seed,
                             double stop_above) {
  if (decisions.empty()) throw PreconditionError("preference_train needs decision points");
  for (const auto& d : decisions) {
    if (best < 0 || static_cast<std::size_t>(best) >= d.candidates.size()) {
      throw PreconditionError("preferred candidate index out of range");
    }
  }
  PpoTrainer trainer(cfg, seed);
  std::mt19937_64 rng(seed ^ 0x5eedULL);
  auto best_prob = [&](std::vector<std::vector<double>>* dists) {
    double p = 0.0;
    for (const auto& t : decisions) {
      auto d = critic::softmax(logits_of(theta, t, nullptr));
      p += d[best] / static_cast<double>(decisions.size());
      if (dists != nullptr) dists->push_back(std::move(d));
    }
    return p;
  };
  BanditCurve curve;
  RolloutBuffer buffer(static_cast<std::size_t>(cfg.minibatch));
  for (int u = 0; u < max_updates; ++u) {
    buffer.clear();
    while (!buffer.full()) {
      Transition t = decisions[rng() % decisions.size()];
      const auto logp = log_softmax(logits_of(theta, t, nullptr));
      std::vector<double> p(logp.size());
      for (std::size_t j = 0; j < p.size(); ++j) p[j] = std::exp(logp[j]);
      t.chosen = critic::select_plan(p, rng, critic::SelectMode::kSample);
      t.logprob_old = std::min(0.0, logp[t.chosen]);
      t.reward = t.chosen == best ? reward : 0.0;
      t.done = true;
      buffer.push(std::move(t));
    }
    trainer.update(theta, buffer);
    const double p = best_prob(nullptr);
    curve.best_arm_prob.push_back(p);
    if (p > stop_above) {
      if (curve.updates_to_threshold < 0) curve.updates_to_threshold = u + 1;
      break;
    }
  }
  best_prob(&curve.final_distributions);
  return curve;
}

BanditCurve bandit_sanity_train(const BanditFixture& fixture, CriticState& theta, const PpoConfig& cfg,
                                int max_updates, std::uint64_t seed, double stop_above) {
  const std::vector<double> base(fixture.arms.size(), 0.0);
  std::vector<Transition> decisions;
  for (const auto& o : fixture.observations) {
    decisions.push_back(make_transition(fixture.task, o, fixture.arms, base, 0, 0.0, 0.0, o, true));
  }
  return preference_train(decisions, fixture.best_arm, fixture.reward, theta, cfg, max_updates, seed,
                          stop_above);
}

}  // namespace copic::ppo
