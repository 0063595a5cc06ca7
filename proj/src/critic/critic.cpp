#include "copic/critic/critic.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "copic/assets_data.hpp"
#include "copic/errors.hpp"
#include "copic/kernels/kernels.hpp"
#include "copic/llm/template.hpp"
#include "copic/llm/token_ledger.hpp"

namespace copic::critic {

namespace {

constexpr int kCheckpointVersion = 1;
constexpr double kProbFloor = 1e-300;

void require_finite(std::span<const double> v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw NumericError(std::string("non-finite ") + what);
  }
}

}  // namespace

std::string plan_description(const Plan& plan) {
  if (plan.actions.empty()) return "do nothing";
  std::string out;
  for (std::size_t i = 0; i < plan.actions.size(); ++i) {
    if (i) out += "; ";
    out += plan.actions[i];
  }
  return out;
}

int word_count(std::string_view text) {
  int n = 0;
  bool in_word = false;
  for (unsigned char c : text) {
    const bool space = std::isspace(c) != 0;
    if (!space && !in_word) ++n;
    in_word = !space;
  }
  return n;
}

std::string build_critic_prompt(const env::Observation& obs, const env::TaskSpec& task,
                                const std::vector<Plan>& candidates) {
  if (candidates.empty()) throw PreconditionError("critic prompt needs at least one candidate");
  std::string listing;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (i) listing += '\n';
    listing += std::to_string(i + 1) + ". " + plan_description(candidates[i]);
  }
  std::string prompt = llm::render_template(assets::kCriticPromptTxt,
                                            {{"task", env::render_targets(task)},
                                             {"observation", env::render_text(obs)},
                                             {"candidates", listing}});
  // Candidates are scored as the continuation of the final line.
  while (!prompt.empty() && std::isspace(static_cast<unsigned char>(prompt.back()))) prompt.pop_back();
  return prompt;
}

std::vector<double> CandidateScoring::logits() const {
  std::vector<double> out;
  for (const auto& c : items) out.push_back(c.logit);
  return out;
}

std::vector<double> CandidateScoring::scores() const {
  std::vector<double> out;
  for (const auto& c : items) out.push_back(c.score);
  return out;
}

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) throw PreconditionError("softmax of an empty vector");
  require_finite(logits, "logit");
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::max(std::exp(logits[i] - m), kProbFloor);
    z += p[i];
  }
  for (double& x : p) x /= z;
  return p;
}

CandidateScoring base_scores(const ScorerBackend& backend, const std::string& prompt,
                             const std::vector<Plan>& candidates, llm::TokenLedger* ledger) {
  if (candidates.empty()) throw PreconditionError("no candidates to score");
  CandidateScoring out;
  std::int64_t billed = 0;
  for (const auto& plan : candidates) {
    CandidateScore c;
    c.description = plan_description(plan);
    ScoreResult r = backend.score(prompt, " " + c.description);
    if (r.tokens.empty()) throw ScoringError("candidate '" + c.description + "' has no tokens");
    c.tokens = static_cast<int>(r.tokens.size());
    c.words = word_count(c.description);
    for (const auto& t : r.tokens) c.sum_logprob += t.logprob;
    c.logit = c.sum_logprob / c.words;
    billed += r.input_tokens;
    out.items.push_back(std::move(c));
  }
  const auto p = softmax(out.logits());
  for (std::size_t i = 0; i < p.size(); ++i) out.items[i].score = p[i];
  // Scoring reads the prompt and the candidate; nothing is generated.
  if (ledger != nullptr) ledger->add_critic(billed, 0);
  return out;
}

std::vector<double> env_features(const env::Observation& obs, const env::TaskSpec& task) {
  std::vector<double> x(kEnvFeatures, 0.0);
  x[0] = obs.resource.supply_cap / 200.0;
  x[1] = obs.resource.supply_left / 200.0;
  x[2] = obs.resource.minerals / 1000.0;
  x[3] = obs.resource.gas / 1000.0;
  x[4] = obs.tick / 200.0;
  for (std::size_t i = 0; i < task.targets.size() && i < static_cast<std::size_t>(kMaxTargets); ++i) {
    const auto& [name, target] = task.targets[i];
    const int have = std::min(env::unit_count(obs, name), target);
    x[5 + i] = target > 0 ? static_cast<double>(target - have) / target : 0.0;
  }
  return x;
}

std::vector<double> plan_features(const env::Observation& obs, const env::TaskSpec& task,
                                  const Plan& plan, double base_logit) {
  std::vector<double> phi(kFeatureDim, 0.0);
  for (const auto& a : plan.actions) phi[fnv1a(a) % kActionBins] += 0.2;
  phi[kActionBins] = static_cast<double>(plan.actions.size()) / 5.0;
  phi[kActionBins + 1] = base_logit;
  const auto x = env_features(obs, task);
  std::copy(x.begin(), x.end(), phi.begin() + kActionBins + 2);
  require_finite(phi, "feature");
  return phi;
}

const CriticState::Layout& CriticState::layout() {
  static const Layout l = [] {
    Layout o{};
    std::size_t at = 0;
    auto take = [&](std::size_t n) {
      std::size_t s = at;
      at += n;
      return s;
    };
    o.alpha = take(1);
    o.A = take(kFeatureDim * kRank);
    o.B = take(kRank * kProjDim);
    o.W1 = take(kHidden * kProjDim);
    o.b1 = take(kHidden);
    o.w2 = take(kHidden);
    o.U1 = take(kValueHidden * kEnvFeatures);
    o.c1 = take(kValueHidden);
    o.u2 = take(kValueHidden);
    o.c2 = take(1);
    o.size = at;
    return o;
  }();
  return l;
}

CriticState CriticState::initial(std::uint64_t seed) {
  const Layout& l = layout();
  CriticState s;
  s.params.assign(l.size, 0.0);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  auto fill = [&](std::size_t off, std::size_t n, double scale) {
    for (std::size_t i = 0; i < n; ++i) s.params[off + i] = scale * n01(rng);
  };
  s.params[l.alpha] = 1.0;
  fill(l.A, kFeatureDim * kRank, 1.0 / std::sqrt(static_cast<double>(kRank)));
  fill(l.B, kRank * kProjDim, 1.0 / std::sqrt(static_cast<double>(kRank)));
  fill(l.W1, kHidden * kProjDim, 1.0 / std::sqrt(static_cast<double>(kProjDim)));
  fill(l.U1, kValueHidden * kEnvFeatures, 1.0 / std::sqrt(static_cast<double>(kEnvFeatures)));
  return s;
}

void CriticState::check_finite() const { require_finite(params, "critic parameter"); }

double head_output(const CriticState& theta, std::span<const double> phi, HeadCache* cache) {
  if (phi.size() != static_cast<std::size_t>(kFeatureDim)) {
    throw PreconditionError("feature vector has " + std::to_string(phi.size()) + " entries");
  }
  HeadCache local;
  HeadCache& c = cache != nullptr ? *cache : local;
  c.u.assign(kRank, 0.0);
  c.z.assign(kProjDim, 0.0);
  c.h.assign(kHidden, 0.0);
  kernels::gemv_t(theta.A(), kFeatureDim, kRank, phi, c.u);
  kernels::gemv_t(theta.B(), kRank, kProjDim, c.u, c.z);
  kernels::gemv(theta.W1(), kHidden, kProjDim, c.z, c.h);
  const auto b1 = theta.b1();
  for (int i = 0; i < kHidden; ++i) c.h[i] = std::tanh(c.h[i] + b1[i]);
  return kernels::dot(theta.w2(), c.h);
}

void head_backward(const CriticState& theta, std::span<const double> phi, const HeadCache& cache,
                   double g, std::span<double> grad) {
  const auto& l = CriticState::layout();
  // d/dw2 = g h
  kernels::axpy(g, cache.h, grad.subspan(l.w2, kHidden));
  std::vector<double> da(kHidden);
  const auto w2 = theta.w2();
  for (int i = 0; i < kHidden; ++i) da[i] = g * w2[i] * (1.0 - cache.h[i] * cache.h[i]);
  kernels::axpy(1.0, da, grad.subspan(l.b1, kHidden));
  kernels::ger(grad.subspan(l.W1, kHidden * kProjDim), kHidden, kProjDim, 1.0, da, cache.z);
  std::vector<double> dz(kProjDim);
  kernels::gemv_t(theta.W1(), kHidden, kProjDim, da, dz);
  kernels::ger(grad.subspan(l.B, kRank * kProjDim), kRank, kProjDim, 1.0, cache.u, dz);
  std::vector<double> du(kRank);
  kernels::gemv(theta.B(), kRank, kProjDim, dz, du);
  kernels::ger(grad.subspan(l.A, kFeatureDim * kRank), kFeatureDim, kRank, 1.0, phi, du);
}

double value_forward(const CriticState& theta, std::span<const double> x, ValueCache* cache) {
  if (x.size() != static_cast<std::size_t>(kEnvFeatures)) {
    throw PreconditionError("value input has " + std::to_string(x.size()) + " entries");
  }
  ValueCache local;
  ValueCache& c = cache != nullptr ? *cache : local;
  c.h.assign(kValueHidden, 0.0);
  kernels::gemv(theta.U1(), kValueHidden, kEnvFeatures, x, c.h);
  const auto c1 = theta.c1();
  for (int i = 0; i < kValueHidden; ++i) c.h[i] = std::tanh(c.h[i] + c1[i]);
  return kernels::dot(theta.u2(), c.h) + theta.c2();
}

void value_backward(const CriticState& theta, std::span<const double> x, const ValueCache& cache,
                    double g, std::span<double> grad) {
  const auto& l = CriticState::layout();
  grad[l.c2] += g;
  kernels::axpy(g, cache.h, grad.subspan(l.u2, kValueHidden));
  std::vector<double> da(kValueHidden);
  const auto u2 = theta.u2();
  for (int i = 0; i < kValueHidden; ++i) da[i] = g * u2[i] * (1.0 - cache.h[i] * cache.h[i]);
  kernels::axpy(1.0, da, grad.subspan(l.c1, kValueHidden));
  kernels::ger(grad.subspan(l.U1, kValueHidden * kEnvFeatures), kValueHidden, kEnvFeatures, 1.0, da, x);
}

std::vector<double> adjusted_logits(const CriticState& theta,
                                    const std::vector<std::vector<double>>& features,
                                    std::span<const double> base_logits) {
  if (features.size() != base_logits.size() || features.empty()) {
    throw PreconditionError("features and base logits disagree in count");
  }
  std::vector<double> out(features.size());
  for (std::size_t i = 0; i < features.size(); ++i) {
    out[i] = theta.alpha() * base_logits[i] + head_output(theta, features[i]);
  }
  require_finite(out, "adjusted logit");
  return out;
}

std::vector<double> policy_distribution(const CriticState& theta, const env::Observation& obs,
                                        const env::TaskSpec& task, const std::vector<Plan>& candidates,
                                        const CandidateScoring& base) {
  if (candidates.empty() || candidates.size() != base.items.size()) {
    throw PreconditionError("candidate count does not match the base scoring");
  }
  std::vector<std::vector<double>> phi;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    phi.push_back(plan_features(obs, task, candidates[i], base.items[i].logit));
  }
  return softmax(adjusted_logits(theta, phi, base.logits()));
}

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

int select_plan(std::span<const double> distribution, std::mt19937_64& rng, SelectMode mode) {
  if (distribution.empty()) throw PreconditionError("empty distribution");
  if (mode == SelectMode::kArgmax) {
    return static_cast<int>(std::max_element(distribution.begin(), distribution.end()) -
                            distribution.begin());
  }
  const double u = uniform01(rng);
  double cum = 0.0;
  int last_positive = 0;
  for (std::size_t i = 0; i < distribution.size(); ++i) {
    if (distribution[i] <= 0.0) continue;
    last_positive = static_cast<int>(i);
    cum += distribution[i];
    if (u < cum) return static_cast<int>(i);
  }
  // Rounding left the cumulative sum just under u.
  return last_positive;
}

double value_estimate(const CriticState& theta, const env::Observation& obs, const env::TaskSpec& task) {
  const double v = value_forward(theta, env_features(obs, task));
  if (!std::isfinite(v)) throw NumericError("non-finite value estimate");
  return v;
}

void save_checkpoint(const CriticState& theta, const std::filesystem::path& path) {
  theta.check_finite();
  nlohmann::json j;
  j["format"] = "copic-critic";
  j["version"] = kCheckpointVersion;
  j["dims"] = {{"feature_dim", kFeatureDim}, {"rank", kRank},          {"proj_dim", kProjDim},
               {"hidden", kHidden},          {"value_hidden", kValueHidden},
               {"env_features", kEnvFeatures}, {"params", theta.params.size()}};
  j["params"] = theta.params;
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw LoadError("cannot write checkpoint " + path.string());
    out << j.dump() << '\n';
  }
  std::filesystem::rename(tmp, path);
}

CriticState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open checkpoint " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    const auto j = nlohmann::json::parse(ss.str());
    if (j.at("format") != "copic-critic") throw LoadError("not a critic checkpoint: " + path.string());
    if (j.at("version") != kCheckpointVersion) {
      throw LoadError("unsupported checkpoint version " + j.at("version").dump());
    }
    const auto& d = j.at("dims");
    const bool shapes_match = d.at("feature_dim") == kFeatureDim && d.at("rank") == kRank &&
                              d.at("proj_dim") == kProjDim && d.at("hidden") == kHidden &&
                              d.at("value_hidden") == kValueHidden &&
                              d.at("env_features") == kEnvFeatures &&
                              d.at("params") == CriticState::layout().size;
    if (!shapes_match) throw LoadError("checkpoint shape mismatch: " + d.dump());
    CriticState s;
    s.params = j.at("params").get<std::vector<double>>();
    if (s.params.size() != CriticState::layout().size) {
      throw LoadError("checkpoint holds " + std::to_string(s.params.size()) + " parameters");
    }
    s.check_finite();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("corrupt checkpoint " + path.string() + ": " + e.what());
  } catch (const NumericError& e) {
    throw LoadError(std::string("checkpoint: ") + e.what());
  }
}

}  // namespace copic::critic
