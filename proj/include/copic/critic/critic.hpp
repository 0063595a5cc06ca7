#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "copic/critic/scorer_backend.hpp"
#include "copic/env/observation.hpp"
#include "copic/planlang/program.hpp"

namespace copic::llm {
class TokenLedger;
}

namespace copic::critic {

using planlang::Plan;

// Feature layout: hashed action counts, plan length, base logit, then the
// environment block shared with the value head.
inline constexpr int kActionBins = 64;
inline constexpr int kEnvFeatures = 10;
inline constexpr int kFeatureDim = kActionBins + 2 + kEnvFeatures;  // 76
inline constexpr int kRank = 4;
inline constexpr int kProjDim = 16;
inline constexpr int kHidden = 32;
inline constexpr int kValueHidden = 32;
inline constexpr int kMaxTargets = 5;

/// Actions joined by "; ", or "do nothing" for an empty plan.
std::string plan_description(const Plan& plan);
/// Whitespace-separated words.
int word_count(std::string_view text);

/// Critic prompt from the embedded template. Throws PreconditionError for an
/// empty candidate list.
std::string build_critic_prompt(const env::Observation& obs, const env::TaskSpec& task,
                                const std::vector<Plan>& candidates);

struct CandidateScore {
  std::string description;
  int tokens = 0;
  int words = 0;
  double sum_logprob = 0.0;
  double logit = 0.0;  // sum_logprob / words
  double score = 0.0;  // softmax over logits
};

struct CandidateScoring {
  std::vector<CandidateScore> items;

  std::vector<double> logits() const;
  std::vector<double> scores() const;
};

/// Numerically stable softmax. Entries are floored at 1e-300 before the
/// final normalization so every probability stays strictly positive.
std::vector<double> softmax(std::span<const double> logits);

/// Length-regularized likelihood scores of each candidate's description as a
/// continuation of `prompt`. Charges the critic side of `ledger` if given.
CandidateScoring base_scores(const ScorerBackend& backend, const std::string& prompt,
                             const std::vector<Plan>& candidates, llm::TokenLedger* ledger = nullptr);

/// Resources, tick and per-target remaining fraction (first five targets).
std::vector<double> env_features(const env::Observation& obs, const env::TaskSpec& task);
/// kFeatureDim values for one candidate.
std::vector<double> plan_features(const env::Observation& obs, const env::TaskSpec& task,
                                  const Plan& plan, double base_logit);

/// Trainable parameters: mix weight alpha, low-rank projection A (d x r) and
/// B (r x q), the policy MLP (W1, b1, w2) and the value MLP (U1, c1, u2, c2).
/// Everything lives in one flat vector so optimizers can treat it uniformly.
class CriticState {
 public:
  struct Layout {
    std::size_t alpha, A, B, W1, b1, w2, U1, c1, u2, c2, size;
  };
  static const Layout& layout();

  /// Random projections and hidden layers; zero output layers and alpha = 1,
  /// so the head adds nothing until trained and the value is 0.
  static CriticState initial(std::uint64_t seed);

  std::vector<double> params;

  double alpha() const { return params[layout().alpha]; }
  std::span<const double> A() const { return view(layout().A, kFeatureDim * kRank); }
  std::span<const double> B() const { return view(layout().B, kRank * kProjDim); }
  std::span<const double> W1() const { return view(layout().W1, kHidden * kProjDim); }
  std::span<const double> b1() const { return view(layout().b1, kHidden); }
  std::span<const double> w2() const { return view(layout().w2, kHidden); }
  std::span<const double> U1() const { return view(layout().U1, kValueHidden * kEnvFeatures); }
  std::span<const double> c1() const { return view(layout().c1, kValueHidden); }
  std::span<const double> u2() const { return view(layout().u2, kValueHidden); }
  double c2() const { return params[layout().c2]; }

  /// Throws NumericError when any parameter is NaN or infinite.
  void check_finite() const;
  bool operator==(const CriticState&) const = default;

 private:
  std::span<const double> view(std::size_t off, std::size_t n) const {
    return std::span<const double>(params).subspan(off, n);
  }
};

struct HeadCache {
  std::vector<double> u;  // A^T phi
  std::vector<double> z;  // B^T u
  std::vector<double> h;  // tanh(W1 z + b1)
};

/// w2 . tanh(W1 B^T A^T phi + b1).
double head_output(const CriticState& theta, std::span<const double> phi, HeadCache* cache = nullptr);
/// Adds g * d(head_output)/d(params) into `grad`.
void head_backward(const CriticState& theta, std::span<const double> phi, const HeadCache& cache,
                   double g, std::span<double> grad);

struct ValueCache {
  std::vector<double> h;
};

double value_forward(const CriticState& theta, std::span<const double> x, ValueCache* cache = nullptr);
void value_backward(const CriticState& theta, std::span<const double> x, const ValueCache& cache,
                    double g, std::span<double> grad);

/// alpha * base_logit_i + head_output(phi_i).
std::vector<double> adjusted_logits(const CriticState& theta,
                                    const std::vector<std::vector<double>>& features,
                                    std::span<const double> base_logits);

std::vector<double> policy_distribution(const CriticState& theta, const env::Observation& obs,
                                        const env::TaskSpec& task, const std::vector<Plan>& candidates,
                                        const CandidateScoring& base);

enum class SelectMode { kSample, kArgmax };

/// Uniform double in [0, 1) from the top 53 bits; fixed across standard
/// libraries, unlike std::uniform_real_distribution.
double uniform01(std::mt19937_64& rng);

/// Categorical draw (sample) or lowest-index maximizer (argmax).
int select_plan(std::span<const double> distribution, std::mt19937_64& rng, SelectMode mode);

double value_estimate(const CriticState& theta, const env::Observation& obs, const env::TaskSpec& task);

/// Versioned JSON with shape metadata. Loading a file with other dimensions
/// or a different format version throws LoadError.
void save_checkpoint(const CriticState& theta, const std::filesystem::path& path);
CriticState load_checkpoint(const std::filesystem::path& path);

}  // namespace copic::critic
