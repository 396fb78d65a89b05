#pragma once

// Losses and optimizers: supervised NLL, DPO / UAPO and the
// perplexity-weighted variants PW-DPO / PW-UAPO, each with a closed-form
// gradient and a central-difference checker.

#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "stepprover/curation.hpp"
#include "stepprover/policy.hpp"
#include "stepprover/rng.hpp"

namespace stepprover::training {

enum class Method : std::uint8_t { DPO, UAPO, PWDPO, PWUAPO };

std::string_view to_string(Method method);  // "dpo", "uapo", "pw-dpo", "pw-uapo"
Method parse_method(std::string_view text);  // throws PreconditionError
bool is_perplexity_weighted(Method method);
// UAPO and PW-UAPO train on pairs whose losers include stagnant siblings.
bool uses_stagnant_losers(Method method);

struct DpoConfig {
  double beta = 0.01;
  Method method = Method::PWUAPO;
  double tauWeight = 1.08;
  double epsilonWeight = 1e-8;
  double alphaWeight = 1.0;
  double deltaMin = 0.0;
  double deltaMax = 1.0;

  void validate() const;
};

struct SftConfig {
  int epochs = 2;
  double learningRateStart = 0.5;
  double learningRateEnd = 0.05;
  int batchSize = 16;
  std::uint64_t rngSeed = 0;

  void validate() const;
};

struct LossReport {
  double lossValue = 0.0;
  double marginMean = 0.0;
  double gradNorm = 0.0;
  std::size_t pairCount = 0;
};

struct SftResult {
  policy::PolicyParams params;
  std::vector<double> epochLoss;  // [0] = before training, then one entry per epoch
  std::vector<double> stepLoss;   // minibatch loss at every step
};

// Cosine decay from start to end over totalSteps (inclusive endpoints).
double cosine_rate(double start, double end, std::size_t step, std::size_t totalSteps);

// Plain mini-batch gradient descent on the mean NLL. Throws
// TrainingDiagnostic if the final corpus NLL exceeds the initial one.
SftResult sft_train(const policy::PolicyParams& params, std::span<const curation::SftExample> corpus,
                    const SftConfig& config);

// beta * (log pi_theta - log pi_ref) for a whole tactic sequence.
double dpo_score(const policy::PolicyParams& params, const policy::PolicyParams& refParams, std::string_view state,
                 std::span<const policy::Token> tokens, double beta);
double dpo_score(const policy::PolicyParams& params, double refTotalLogProb, std::string_view state,
                 std::span<const policy::Token> tokens, double beta);

// -log sigmoid(margin), evaluated without overflow.
double neg_log_sigmoid(double margin);

struct LossAndGradient {
  double loss = 0.0;
  double margin = 0.0;  // the sigmoid argument
  policy::Gradient gradient;
};

// DPO / UAPO on summed sequence log-probs; reference log-probs come from the pair.
LossAndGradient dpo_loss(const policy::PolicyParams& params, const curation::PreferencePair& pair,
                         const DpoConfig& config);

std::vector<double> token_weights(std::span<const double> refPerTokenLogProb, const DpoConfig& config);

struct WeightedLogProb {
  double value = 0.0;
  bool usedFallback = false;  // weights summed to zero; plain mean used instead
};

WeightedLogProb weighted_seq_logprob(std::span<const double> perTokenLogProb, std::span<const double> weights);

// Process-wide count of zero-weight-sum fallbacks.
std::uint64_t weight_fallback_count();
void reset_weight_fallback_count();

// PW-DPO / PW-UAPO.
LossAndGradient pw_dpo_loss(const policy::PolicyParams& params, const curation::PreferencePair& pair,
                            const DpoConfig& config);

// Dispatches on config.method.
LossAndGradient preference_loss(const policy::PolicyParams& params, const curation::PreferencePair& pair,
                                const DpoConfig& config);

// Loss / margin over a whole pair set without updating anything.
LossReport evaluate_preferences(const policy::PolicyParams& params, std::span<const curation::PreferencePair> pairs,
                                const DpoConfig& config);

struct PreferenceTrainOptions {
  int steps = 100;
  double learningRate = 1.0;
  int batchSize = 16;
};

struct PreferenceResult {
  policy::PolicyParams params;
  std::vector<LossReport> curve;  // one report per step (minibatch)
};

// The pairs carry the frozen reference log-probs; no reference model is
// consulted or modified here.
PreferenceResult preference_train(const policy::PolicyParams& params, std::span<const curation::PreferencePair> pairs,
                                  const DpoConfig& config, const PreferenceTrainOptions& options, Rng& rng);

void apply_gradient_step(policy::PolicyParams& params, const policy::Gradient& gradient, double learningRate);

using LossFunction = std::function<std::pair<double, policy::Gradient>(const policy::PolicyParams&)>;

// Five-point central differences on `probes` coordinates sampled from the gradient's
// support; returns the max of |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
double finite_diff_check(const LossFunction& lossFn, const policy::PolicyParams& params, int probes, double step,
                         Rng& rng);

}  // namespace stepprover::training
