#include "stepprover/training.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <numeric>

#include "stepprover/errors.hpp"

namespace stepprover::training {

namespace {

std::atomic<std::uint64_t> gWeightFallbacks{0};

struct Accumulator {
  std::vector<double>& grad;
  std::vector<bool>& touched;
};

struct PairTerms {
  double loss = 0.0;
  double margin = 0.0;
};

// Normalized per-token coefficients w_t / sum(w). Falls back to 1/T (and
// bumps the counter) when the weights sum to zero.
std::vector<double> normalized_weights(std::span<const double> weights, bool& usedFallback) {
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<double> out(weights.size());
  usedFallback = !(total > 0.0);
  if (usedFallback) {
    gWeightFallbacks.fetch_add(1, std::memory_order_relaxed);
    std::fill(out.begin(), out.end(), 1.0 / static_cast<double>(weights.size()));
    return out;
  }
  for (std::size_t t = 0; t < weights.size(); ++t) out[t] = weights[t] / total;
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
  return sum;
}

void check_pair(const curation::PreferencePair& pair) {
  require(pair.winnerTokens.size() == pair.refWinnerPerTokenLogProb.size(),
          "preference pair: winner reference log-probs do not match its tokens");
  require(pair.loserTokens.size() == pair.refLoserPerTokenLogProb.size(),
          "preference pair: loser reference log-probs do not match its tokens");
  require(!pair.winnerTokens.empty() && !pair.loserTokens.empty(), "preference pair: empty tactic");
}

// Loss terms of one pair; when acc is set, adds scale * d loss / d theta.
PairTerms pair_terms(const policy::PolicyParams& params, const curation::PreferencePair& pair,
                     const DpoConfig& config, double scale, Accumulator* acc) {
  check_pair(pair);
  const policy::StateFeatures features(pair.state);
  const auto winner = policy::sequence_logprob(params, features, pair.winnerTokens);
  const auto loser = policy::sequence_logprob(params, features, pair.loserTokens);

  std::vector<double> winnerCoeff;
  std::vector<double> loserCoeff;
  double winnerDelta = 0.0;
  double loserDelta = 0.0;
  if (is_perplexity_weighted(config.method)) {
    bool fallback = false;
    winnerCoeff = normalized_weights(token_weights(pair.refWinnerPerTokenLogProb, config), fallback);
    loserCoeff = normalized_weights(token_weights(pair.refLoserPerTokenLogProb, config), fallback);
    winnerDelta = dot(winnerCoeff, winner.perTokenLogProb) - dot(winnerCoeff, pair.refWinnerPerTokenLogProb);
    loserDelta = dot(loserCoeff, loser.perTokenLogProb) - dot(loserCoeff, pair.refLoserPerTokenLogProb);
  } else {
    winnerCoeff.assign(pair.winnerTokens.size(), 1.0);
    loserCoeff.assign(pair.loserTokens.size(), 1.0);
    winnerDelta = winner.totalLogProb - policy::sum_logprobs(pair.refWinnerPerTokenLogProb);
    loserDelta = loser.totalLogProb - policy::sum_logprobs(pair.refLoserPerTokenLogProb);
  }

  PairTerms out;
  out.margin = config.beta * (winnerDelta - loserDelta);
  out.loss = neg_log_sigmoid(out.margin);
  if (acc != nullptr) {
    // d(-log sigmoid(m))/dm = -sigmoid(-m)
    const double dLossDMargin = -1.0 / (1.0 + std::exp(out.margin));
    const double c = scale * dLossDMargin * config.beta;
    for (double& w : winnerCoeff) w *= c;
    for (double& w : loserCoeff) w *= -c;
    policy::accumulate_logprob_gradient(params, features, pair.winnerTokens, winnerCoeff, acc->grad, acc->touched);
    policy::accumulate_logprob_gradient(params, features, pair.loserTokens, loserCoeff, acc->grad, acc->touched);
  }
  return out;
}

LossAndGradient single_pair(const policy::PolicyParams& params, const curation::PreferencePair& pair,
                            const DpoConfig& config) {
  LossAndGradient out;
  std::vector<bool> touched(policy::kFeatureDim, false);
  Accumulator acc{out.gradient.values, touched};
  const PairTerms terms = pair_terms(params, pair, config, 1.0, &acc);
  out.gradient.finalize_columns(touched);
  out.loss = terms.loss;
  out.margin = terms.margin;
  return out;
}

}  // namespace

std::string_view to_string(Method method) {
  switch (method) {
    case Method::DPO:
      return "dpo";
    case Method::UAPO:
      return "uapo";
    case Method::PWDPO:
      return "pw-dpo";
    case Method::PWUAPO:
      return "pw-uapo";
  }
  return "unknown";
}

Method parse_method(std::string_view text) {
  for (Method m : {Method::DPO, Method::UAPO, Method::PWDPO, Method::PWUAPO}) {
    if (text == to_string(m)) return m;
  }
  throw PreconditionError("unknown preference method '" + std::string(text) + "'");
}

bool is_perplexity_weighted(Method method) { return method == Method::PWDPO || method == Method::PWUAPO; }
bool uses_stagnant_losers(Method method) { return method == Method::UAPO || method == Method::PWUAPO; }

void DpoConfig::validate() const {
  require(beta > 0.0, "dpo: beta must be > 0");
  require(deltaMin >= 0.0 && deltaMin <= deltaMax, "dpo: need 0 <= deltaMin <= deltaMax");
  require(tauWeight > 0.0, "dpo: tauWeight must be > 0");
  require(epsilonWeight >= 0.0, "dpo: epsilonWeight must be >= 0");
  require(alphaWeight > 0.0, "dpo: alphaWeight must be > 0");
}

void SftConfig::validate() const {
  require(epochs >= 1, "sft: epochs must be >= 1");
  require(learningRateStart > 0.0 && learningRateEnd > 0.0, "sft: learning rates must be > 0");
  require(learningRateStart >= learningRateEnd, "sft: learning rate must decay (start >= end)");
  require(batchSize >= 1, "sft: batch size must be >= 1");
}

double cosine_rate(double start, double end, std::size_t step, std::size_t totalSteps) {
  if (totalSteps <= 1) return start;
  const double progress = static_cast<double>(step) / static_cast<double>(totalSteps - 1);
  return end + 0.5 * (start - end) * (1.0 + std::cos(std::numbers::pi * progress));
}

void apply_gradient_step(policy::PolicyParams& params, const policy::Gradient& gradient, double learningRate) {
  for (auto c : gradient.columns) {
    for (std::size_t v = 0; v < policy::kVocabSize; ++v) {
      params.weights[v * policy::kFeatureDim + c] -= learningRate * gradient.values[v * policy::kFeatureDim + c];
    }
  }
}

SftResult sft_train(const policy::PolicyParams& params, std::span<const curation::SftExample> corpus,
                    const SftConfig& config) {
  require(!corpus.empty(), "sft_train: corpus must be nonempty");
  config.validate();
  const auto examples = curation::as_supervised(corpus);
  SftResult out{params, {}, {}};
  out.epochLoss.push_back(policy::mean_nll(params, examples));

  const std::size_t batch = static_cast<std::size_t>(config.batchSize);
  const std::size_t stepsPerEpoch = (examples.size() + batch - 1) / batch;
  const std::size_t totalSteps = stepsPerEpoch * static_cast<std::size_t>(config.epochs);
  Rng rng(config.rngSeed);
  std::vector<std::size_t> order(examples.size());
  std::vector<policy::SupervisedExample> minibatch;
  std::size_t step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    for (std::size_t begin = 0; begin < order.size(); begin += batch) {
      minibatch.clear();
      for (std::size_t i = begin; i < std::min(begin + batch, order.size()); ++i) minibatch.push_back(examples[order[i]]);
      const auto result = policy::nll_gradient(out.params, minibatch);
      if (!std::isfinite(result.loss)) throw TrainingDiagnostic("sft_train: non-finite loss");
      out.stepLoss.push_back(result.loss);
      apply_gradient_step(out.params, result.gradient,
                          cosine_rate(config.learningRateStart, config.learningRateEnd, step++, totalSteps));
    }
    out.epochLoss.push_back(policy::mean_nll(out.params, examples));
  }
  if (out.epochLoss.back() > out.epochLoss.front()) {
    throw TrainingDiagnostic("sft_train: final mean NLL " + std::to_string(out.epochLoss.back()) +
                             " exceeds initial " + std::to_string(out.epochLoss.front()));
  }
  return out;
}

double dpo_score(const policy::PolicyParams& params, double refTotalLogProb, std::string_view state,
                 std::span<const policy::Token> tokens, double beta) {
  require(beta > 0.0, "dpo_score: beta must be > 0");
  return beta * (policy::sequence_logprob(params, state, tokens).totalLogProb - refTotalLogProb);
}

double dpo_score(const policy::PolicyParams& params, const policy::PolicyParams& refParams, std::string_view state,
                 std::span<const policy::Token> tokens, double beta) {
  return dpo_score(params, policy::sequence_logprob(refParams, state, tokens).totalLogProb, state, tokens, beta);
}

double neg_log_sigmoid(double margin) {
  if (margin >= 0.0) return std::log1p(std::exp(-margin));
  return -margin + std::log1p(std::exp(margin));
}

LossAndGradient dpo_loss(const policy::PolicyParams& params, const curation::PreferencePair& pair,
                         const DpoConfig& config) {
  config.validate();
  require(!is_perplexity_weighted(config.method), "dpo_loss: method must be dpo or uapo");
  return single_pair(params, pair, config);
}

std::vector<double> token_weights(std::span<const double> refPerTokenLogProb, const DpoConfig& config) {
  std::vector<double> out;
  out.reserve(refPerTokenLogProb.size());
  for (double lp : refPerTokenLogProb) {
    const double ppl = std::exp(-lp);
    const double raw = std::pow(config.tauWeight / (ppl + config.epsilonWeight), config.alphaWeight);
    out.push_back(std::clamp(raw, config.deltaMin, config.deltaMax));
  }
  return out;
}

WeightedLogProb weighted_seq_logprob(std::span<const double> perTokenLogProb, std::span<const double> weights) {
  require(perTokenLogProb.size() == weights.size() && !weights.empty(),
          "weighted_seq_logprob: need one weight per token");
  WeightedLogProb out;
  const auto coeff = normalized_weights(weights, out.usedFallback);
  out.value = dot(coeff, perTokenLogProb);
  return out;
}

std::uint64_t weight_fallback_count() { return gWeightFallbacks.load(std::memory_order_relaxed); }
void reset_weight_fallback_count() { gWeightFallbacks.store(0, std::memory_order_relaxed); }

LossAndGradient pw_dpo_loss(const policy::PolicyParams& params, const curation::PreferencePair& pair,
                            const DpoConfig& config) {
  config.validate();
  require(is_perplexity_weighted(config.method), "pw_dpo_loss: method must be pw-dpo or pw-uapo");
  return single_pair(params, pair, config);
}

LossAndGradient preference_loss(const policy::PolicyParams& params, const curation::PreferencePair& pair,
                                const DpoConfig& config) {
  return is_perplexity_weighted(config.method) ? pw_dpo_loss(params, pair, config) : dpo_loss(params, pair, config);
}

LossReport evaluate_preferences(const policy::PolicyParams& params, std::span<const curation::PreferencePair> pairs,
                                const DpoConfig& config) {
  config.validate();
  require(!pairs.empty(), "evaluate_preferences: no pairs");
  LossReport report;
  for (const auto& pair : pairs) {
    const PairTerms terms = pair_terms(params, pair, config, 0.0, nullptr);
    report.lossValue += terms.loss;
    report.marginMean += terms.margin;
  }
  report.pairCount = pairs.size();
  report.lossValue /= static_cast<double>(pairs.size());
  report.marginMean /= static_cast<double>(pairs.size());
  return report;
}

PreferenceResult preference_train(const policy::PolicyParams& params, std::span<const curation::PreferencePair> pairs,
                                  const DpoConfig& config, const PreferenceTrainOptions& options, Rng& rng) {
  require(!pairs.empty(), "preference_train: pairs must be nonempty");
  require(options.steps >= 0 && options.batchSize >= 1, "preference_train: need steps >= 0 and batch >= 1");
  require(options.learningRate > 0.0, "preference_train: learning rate must be > 0");
  config.validate();

  PreferenceResult out{params, {}};
  std::vector<std::size_t> order(pairs.size());
  std::size_t cursor = order.size();
  for (int step = 0; step < options.steps; ++step) {
    policy::Gradient gradient;
    std::vector<bool> touched(policy::kFeatureDim, false);
    Accumulator acc{gradient.values, touched};
    LossReport report;
    const std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(options.batchSize), pairs.size());
    const double scale = 1.0 / static_cast<double>(batch);
    for (std::size_t b = 0; b < batch; ++b) {
      if (cursor == order.size()) {
        std::iota(order.begin(), order.end(), 0);
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
        cursor = 0;
      }
      const PairTerms terms = pair_terms(out.params, pairs[order[cursor++]], config, scale, &acc);
      report.lossValue += scale * terms.loss;
      report.marginMean += scale * terms.margin;
    }
    gradient.finalize_columns(touched);
    report.gradNorm = gradient.norm();
    report.pairCount = batch;
    if (!std::isfinite(report.lossValue) || !std::isfinite(report.gradNorm)) {
      throw TrainingDiagnostic("preference_train: non-finite loss at step " + std::to_string(step));
    }
    out.curve.push_back(report);
    apply_gradient_step(out.params, gradient, options.learningRate);
  }
  return out;
}

double finite_diff_check(const LossFunction& lossFn, const policy::PolicyParams& params, int probes, double step,
                         Rng& rng) {
  require(step > 0.0, "finite_diff_check: step must be > 0");
  require(probes >= 1, "finite_diff_check: need at least one probe");
  const auto [loss, gradient] = lossFn(params);
  (void)loss;
  std::vector<std::size_t> support;
  for (auto c : gradient.columns) {
    for (std::size_t v = 0; v < policy::kVocabSize; ++v) support.push_back(v * policy::kFeatureDim + c);
  }
  require(!support.empty(), "finite_diff_check: gradient has empty support");

  policy::PolicyParams probe = params;
  double worst = 0.0;
  for (int p = 0; p < probes; ++p) {
    const std::size_t index = support[rng.below(support.size())];
    const double original = probe.weights[index];
    auto at = [&](double offset) {
      probe.weights[index] = original + offset;
      return lossFn(probe).first;
    };
    // Five-point central stencil: truncation error O(step^4).
    const double near = at(step) - at(-step);
    const double far = at(2.0 * step) - at(-2.0 * step);
    probe.weights[index] = original;
    const double numeric = (8.0 * near - far) / (12.0 * step);
    const double analytic = gradient.values[index];
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(analytic - numeric) / denom);
  }
  return worst;
}

}  // namespace stepprover::training
