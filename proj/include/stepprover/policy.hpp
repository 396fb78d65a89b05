#pragma once

// Autoregressive tactic policy: a linear softmax over hashed sparse features
// of (serialized proof state, previous tokens, position). Exact
// log-probabilities and closed-form gradients; no neural network.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stepprover/kernel.hpp"
#include "stepprover/rng.hpp"

namespace stepprover::policy {

enum class Token : std::uint8_t {
  RFL,
  SYM,
  RW,
  R1,
  R2,
  R3,
  R4,
  R5,
  R6,
  DIR_L,
  DIR_R,
  D0,
  D1,
  PATH_END,
  EOS,
  BOS,  // start-of-tactic context marker; never produced by tokenize()
};

inline constexpr std::size_t kVocabSize = 16;
inline constexpr std::size_t kFeatureDim = 4096;
inline constexpr std::size_t kBiasIndex = 0;
inline constexpr std::size_t kMaxTacticTokens = 12;
inline constexpr int kPositionBuckets = 8;
inline constexpr std::uint64_t kFeatureHashSeed = 0x5eedf00dcafe1234ULL;

using TokenSequence = std::vector<Token>;
using LogProbs = std::array<double, kVocabSize>;

std::string_view token_name(Token token);
std::string to_text(std::span<const Token> tokens);  // "RW R1 DIR_L D0 PATH_END EOS"
kernel::Result<TokenSequence> parse_tokens(std::string_view text);

TokenSequence tokenize(const kernel::Tactic& tactic);
// ParseError if the sequence is not exactly one well-formed tactic + EOS.
kernel::Result<kernel::Tactic> detokenize(std::span<const Token> tokens);

// Sorted, duplicate-free active feature indices; always contains kBiasIndex.
using FeatureVector = std::vector<std::uint32_t>;

// The state-dependent part of the feature map, hashed once per state and
// reused for every decoding position.
class StateFeatures {
 public:
  explicit StateFeatures(std::string_view state);

  FeatureVector at(std::span<const Token> prefix, int position) const;
  const std::string& state() const { return state_; }

 private:
  void append_structural(FeatureVector& out, std::span<const Token> prefix) const;

  std::string state_;
  std::vector<std::uint64_t> ngramHashes_;  // partial FNV states of distinct n-grams
  std::optional<kernel::ProofState> parsed_;  // absent when the text does not parse
};

FeatureVector featurize(std::string_view state, std::span<const Token> prefix, int position);

// FNV-1a 64 over bytes, starting from the seeded offset basis.
std::uint64_t feature_hash(std::span<const std::uint8_t> bytes, std::uint64_t state);
std::uint64_t feature_hash_seed_state();

struct PolicyParams {
  std::vector<double> weights = std::vector<double>(kVocabSize * kFeatureDim, 0.0);  // row v = token v
  std::uint64_t seed = 0;
  std::string versionTag = "zero";

  double& at(std::size_t token, std::size_t feature) { return weights[token * kFeatureDim + feature]; }
  double at(std::size_t token, std::size_t feature) const { return weights[token * kFeatureDim + feature]; }
  bool all_finite() const;
  bool operator==(const PolicyParams&) const = default;
};

PolicyParams zero_params();

struct ScoredSample {
  TokenSequence tokens;
  std::vector<double> perTokenLogProb;
  double totalLogProb = 0.0;
};

// Sum in index order; every component that sums per-token log-probs uses this.
double sum_logprobs(std::span<const double> perToken);

LogProbs logprobs_from_features(const PolicyParams& params, const FeatureVector& features, double temperature);

LogProbs token_logprobs(const PolicyParams& params, std::string_view state, std::span<const Token> prefix,
                        int position, double temperature);

// Untempered per-token log-probs of a complete tactic sequence.
ScoredSample sequence_logprob(const PolicyParams& params, std::string_view state, std::span<const Token> tokens);
ScoredSample sequence_logprob(const PolicyParams& params, const StateFeatures& state, std::span<const Token> tokens);

// Ancestral sampling at the given temperature with untempered scores; EOS is
// forced at kMaxTacticTokens.
ScoredSample sample_tactic(const PolicyParams& params, const StateFeatures& state, double temperature, Rng& rng);
ScoredSample sample_tactic(const PolicyParams& params, std::string_view state, double temperature, Rng& rng);

// Dense V x D gradient plus the list of feature columns it touches.
struct Gradient {
  std::vector<double> values = std::vector<double>(kVocabSize * kFeatureDim, 0.0);
  std::vector<std::uint32_t> columns;  // sorted, unique

  double at(std::size_t token, std::size_t feature) const { return values[token * kFeatureDim + feature]; }
  void add_scaled(const Gradient& other, double scale);
  void scale(double factor);
  double norm() const;
  void finalize_columns(const std::vector<bool>& touched);
};

// Accumulates scale * d/dtheta sum_t log p(y_t | ...) into grad.
void accumulate_logprob_gradient(const PolicyParams& params, const StateFeatures& state,
                                 std::span<const Token> tokens, std::span<const double> tokenScales,
                                 std::vector<double>& grad, std::vector<bool>& touched);

struct SupervisedExample {
  std::string state;
  TokenSequence tokens;
};

struct NllResult {
  double loss = 0.0;  // mean over examples of mean per-token NLL
  Gradient gradient;
};

NllResult nll_gradient(const PolicyParams& params, std::span<const SupervisedExample> batch);
double mean_nll(const PolicyParams& params, std::span<const SupervisedExample> batch);

struct Perplexity {
  double sequence = 1.0;
  std::vector<double> perToken;
};

Perplexity sequence_perplexity(const PolicyParams& params, std::string_view state, std::span<const Token> tokens);
double perplexity_from_logprobs(std::span<const double> perTokenLogProb);

}  // namespace stepprover::policy
