#include "stepprover/policy.hpp"

#include "stepprover/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_set>

namespace stepprover::policy {

namespace {

constexpr std::array<std::string_view, kVocabSize> kTokenNames = {
    "RFL", "SYM", "RW",    "R1", "R2", "R3",       "R4",  "R5",
    "R6",  "DIR_L", "DIR_R", "D0", "D1", "PATH_END", "EOS", "BOS",
};

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

constexpr std::uint64_t fnv_byte(std::uint64_t state, std::uint8_t byte) { return (state ^ byte) * kFnvPrime; }

std::uint64_t fnv_bytes(std::uint64_t state, std::string_view bytes) {
  for (char c : bytes) state = fnv_byte(state, static_cast<std::uint8_t>(c));
  return state;
}

std::uint32_t to_index(std::uint64_t h) {
  return static_cast<std::uint32_t>(1 + mix_seed(h) % (kFeatureDim - 1));
}

std::uint8_t tok(Token t) { return static_cast<std::uint8_t>(t); }

char head_char(const kernel::Term& t) {
  switch (t.tag) {
    case kernel::Tag::Zero:
      return '0';
    case kernel::Tag::Succ:
      return 'S';
    case kernel::Tag::Add:
      return 'A';
    case kernel::Tag::Mul:
      return 'M';
    case kernel::Tag::Var:
      return 'v';
  }
  return '?';
}

// Head symbol of a term followed by the heads of its children.
std::string shape(const kernel::Term& t) {
  std::string out(1, head_char(t));
  for (const auto& c : t.children) out.push_back(head_char(c));
  return out;
}

kernel::KernelError token_error(std::string message) {
  return {kernel::ErrorKind::ParseError, std::move(message)};
}

}  // namespace

std::string_view token_name(Token token) { return kTokenNames[static_cast<std::size_t>(token)]; }

std::string to_text(std::span<const Token> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += token_name(tokens[i]);
  }
  return out;
}

kernel::Result<TokenSequence> parse_tokens(std::string_view text) {
  TokenSequence out;
  while (!text.empty()) {
    const auto start = text.find_first_not_of(' ');
    if (start == std::string_view::npos) break;
    text.remove_prefix(start);
    const auto end = text.find(' ');
    const std::string_view word = text.substr(0, end);
    text.remove_prefix(end == std::string_view::npos ? text.size() : end);
    const auto it = std::find(kTokenNames.begin(), kTokenNames.end(), word);
    if (it == kTokenNames.end()) return token_error("unknown token '" + std::string(word) + "'");
    out.push_back(static_cast<Token>(it - kTokenNames.begin()));
  }
  return out;
}

TokenSequence tokenize(const kernel::Tactic& tactic) {
  switch (tactic.kind) {
    case kernel::TacticKind::Rfl:
      return {Token::RFL, Token::EOS};
    case kernel::TacticKind::Sym:
      return {Token::SYM, Token::EOS};
    case kernel::TacticKind::Rw:
      break;
  }
  TokenSequence out{Token::RW, static_cast<Token>(tok(Token::R1) + static_cast<int>(tactic.rule) - 1),
                    tactic.direction == kernel::Direction::L2R ? Token::DIR_L : Token::DIR_R};
  for (char c : tactic.path) out.push_back(c == '0' ? Token::D0 : Token::D1);
  out.push_back(Token::PATH_END);
  out.push_back(Token::EOS);
  return out;
}

kernel::Result<kernel::Tactic> detokenize(std::span<const Token> tokens) {
  if (tokens.empty()) return token_error("empty token sequence");
  if (tokens.back() != Token::EOS) return token_error("sequence does not end with EOS");
  const auto body = tokens.first(tokens.size() - 1);
  if (body.size() == 1 && body[0] == Token::RFL) return kernel::Tactic::rfl();
  if (body.size() == 1 && body[0] == Token::SYM) return kernel::Tactic::sym();
  if (body.empty() || body[0] != Token::RW) return token_error("tactic must start with RFL, SYM or RW");
  if (body.size() < 5) return token_error("rewrite is truncated");
  if (tok(body[1]) < tok(Token::R1) || tok(body[1]) > tok(Token::R6)) return token_error("expected a rule token");
  if (body[2] != Token::DIR_L && body[2] != Token::DIR_R) return token_error("expected a direction token");
  if (body.back() != Token::PATH_END) return token_error("rewrite path is not terminated");
  std::string path;
  for (std::size_t i = 3; i + 1 < body.size(); ++i) {
    if (body[i] == Token::D0) {
      path.push_back('0');
    } else if (body[i] == Token::D1) {
      path.push_back('1');
    } else {
      return token_error("unexpected token " + std::string(token_name(body[i])) + " inside path");
    }
  }
  if (path.empty()) return token_error("empty rewrite path");
  return kernel::Tactic::rw(static_cast<kernel::RuleId>(tok(body[1]) - tok(Token::R1) + 1),
                            body[2] == Token::DIR_L ? kernel::Direction::L2R : kernel::Direction::R2L,
                            std::move(path));
}

std::uint64_t feature_hash_seed_state() {
  std::uint64_t state = kFnvOffset;
  for (int i = 0; i < 8; ++i) state = fnv_byte(state, static_cast<std::uint8_t>(kFeatureHashSeed >> (8 * i)));
  return state;
}

std::uint64_t feature_hash(std::span<const std::uint8_t> bytes, std::uint64_t state) {
  for (std::uint8_t b : bytes) state = fnv_byte(state, b);
  return state;
}

StateFeatures::StateFeatures(std::string_view state) : state_(state) {
  std::unordered_set<std::string_view> seen;
  for (std::size_t n = 1; n <= 3; ++n) {
    for (std::size_t i = 0; i + n <= state_.size(); ++i) {
      seen.insert(std::string_view(state_).substr(i, n));
    }
  }
  // Order does not matter for the final set, but keep iteration deterministic.
  std::vector<std::string_view> grams(seen.begin(), seen.end());
  std::sort(grams.begin(), grams.end());
  ngramHashes_.reserve(grams.size());
  const std::uint64_t seeded = feature_hash_seed_state();
  for (std::string_view g : grams) {
    ngramHashes_.push_back(fnv_bytes(fnv_byte(seeded, 'g'), g));
  }
  if (auto parsed = kernel::parse_state(state_)) parsed_ = std::move(parsed).value();
}

// Structural cues the n-grams cannot express: whether the sides already
// agree, the head shapes of both sides while the tactic kind and rule are
// chosen, and inside a rewrite the shape of the subterm the partial path
// currently points at (or that the path has left the term).
void StateFeatures::append_structural(FeatureVector& out, std::span<const Token> prefix) const {
  const std::uint64_t seeded = feature_hash_seed_state();
  const std::uint8_t same = parsed_->lhs == parsed_->rhs ? 1 : 0;
  const std::uint8_t prev1 = tok(prefix.empty() ? Token::BOS : prefix.back());
  out.push_back(to_index(fnv_byte(fnv_byte(fnv_byte(seeded, 'e'), same), prev1)));
  if (prefix.size() < 2) {
    const std::string sides = shape(parsed_->lhs) + "|" + shape(parsed_->rhs);
    out.push_back(to_index(fnv_byte(fnv_bytes(fnv_byte(seeded, 'h'), sides), prev1)));
  }
  if (prefix.size() < 3 || prefix[0] != Token::RW) return;
  std::string path;
  for (std::size_t i = 3; i < prefix.size(); ++i) {
    if (prefix[i] != Token::D0 && prefix[i] != Token::D1) return;
    path.push_back(prefix[i] == Token::D0 ? '0' : '1');
  }
  std::string focus;
  if (path.empty()) {
    focus = "=" + shape(parsed_->lhs) + "|" + shape(parsed_->rhs);
  } else if (const kernel::Term* t = kernel::subterm_at(*parsed_, path)) {
    focus = shape(*t);
  } else {
    focus = "x";
  }
  const std::uint64_t f = fnv_bytes(fnv_byte(seeded, 'f'), focus);
  out.push_back(to_index(f));
  out.push_back(to_index(fnv_byte(fnv_byte(fnv_byte(f, 'k'), tok(prefix[1])), tok(prefix[2]))));
}

FeatureVector StateFeatures::at(std::span<const Token> prefix, int position) const {
  const std::uint64_t seeded = feature_hash_seed_state();
  const std::uint8_t prev1 = tok(prefix.size() >= 1 ? prefix[prefix.size() - 1] : Token::BOS);
  const std::uint8_t prev2 = tok(prefix.size() >= 2 ? prefix[prefix.size() - 2] : Token::BOS);
  const auto bucket = static_cast<std::uint8_t>(std::min(position, kPositionBuckets - 1));

  FeatureVector out;
  out.reserve(2 * ngramHashes_.size() + 5);
  out.push_back(static_cast<std::uint32_t>(kBiasIndex));
  for (std::uint64_t g : ngramHashes_) {
    out.push_back(to_index(g));
    // Conjunction: the same n-gram seen under the previous token ('g' -> 'c'
    // is folded in as a trailing tag byte so both share one pass).
    out.push_back(to_index(fnv_byte(fnv_byte(g, 'c'), prev1)));
  }
  out.push_back(to_index(fnv_byte(fnv_byte(seeded, 'p'), prev1)));
  out.push_back(to_index(fnv_byte(fnv_byte(fnv_byte(seeded, 'q'), prev1), prev2)));
  out.push_back(to_index(fnv_byte(fnv_byte(seeded, 'b'), bucket)));
  out.push_back(to_index(fnv_byte(fnv_byte(fnv_byte(seeded, 'r'), bucket), prev1)));
  if (parsed_) append_structural(out, prefix);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

FeatureVector featurize(std::string_view state, std::span<const Token> prefix, int position) {
  return StateFeatures(state).at(prefix, position);
}

bool PolicyParams::all_finite() const {
  return std::all_of(weights.begin(), weights.end(), [](double w) { return std::isfinite(w); });
}

PolicyParams zero_params() { return PolicyParams{}; }

double sum_logprobs(std::span<const double> perToken) {
  double total = 0.0;
  for (double lp : perToken) total += lp;
  return total;
}

LogProbs logprobs_from_features(const PolicyParams& params, const FeatureVector& features, double temperature) {
  LogProbs z{};
  for (std::size_t v = 0; v < kVocabSize; ++v) {
    const double* row = params.weights.data() + v * kFeatureDim;
    double sum = 0.0;
    for (std::uint32_t i : features) sum += row[i];
    z[v] = sum / temperature;
  }
  const double maxZ = *std::max_element(z.begin(), z.end());
  double norm = 0.0;
  for (double zv : z) norm += std::exp(zv - maxZ);
  const double logNorm = maxZ + std::log(norm);
  for (double& zv : z) zv -= logNorm;
  return z;
}

LogProbs token_logprobs(const PolicyParams& params, std::string_view state, std::span<const Token> prefix,
                        int position, double temperature) {
  require(temperature > 0.0, "temperature must be positive");
  return logprobs_from_features(params, featurize(state, prefix, position), temperature);
}

ScoredSample sequence_logprob(const PolicyParams& params, const StateFeatures& state, std::span<const Token> tokens) {
  ScoredSample out;
  out.tokens.assign(tokens.begin(), tokens.end());
  out.perTokenLogProb.reserve(tokens.size());
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const auto lp = logprobs_from_features(params, state.at(tokens.first(t), static_cast<int>(t)), 1.0);
    out.perTokenLogProb.push_back(lp[static_cast<std::size_t>(tokens[t])]);
  }
  out.totalLogProb = sum_logprobs(out.perTokenLogProb);
  return out;
}

ScoredSample sequence_logprob(const PolicyParams& params, std::string_view state, std::span<const Token> tokens) {
  return sequence_logprob(params, StateFeatures(state), tokens);
}

ScoredSample sample_tactic(const PolicyParams& params, const StateFeatures& state, double temperature, Rng& rng) {
  require(temperature > 0.0, "temperature must be positive");
  ScoredSample out;
  while (out.tokens.size() < kMaxTacticTokens) {
    const int position = static_cast<int>(out.tokens.size());
    const FeatureVector features = state.at(out.tokens, position);
    const LogProbs untempered = logprobs_from_features(params, features, 1.0);
    Token next = Token::EOS;
    if (out.tokens.size() + 1 < kMaxTacticTokens) {
      const LogProbs tempered = temperature == 1.0 ? untempered : logprobs_from_features(params, features, temperature);
      const double u = rng.uniform();
      double cumulative = 0.0;
      next = static_cast<Token>(kVocabSize - 1);
      for (std::size_t v = 0; v < kVocabSize; ++v) {
        cumulative += std::exp(tempered[v]);
        if (u < cumulative) {
          next = static_cast<Token>(v);
          break;
        }
      }
    }
    out.tokens.push_back(next);
    out.perTokenLogProb.push_back(untempered[static_cast<std::size_t>(next)]);
    if (next == Token::EOS) break;
  }
  out.totalLogProb = sum_logprobs(out.perTokenLogProb);
  return out;
}

ScoredSample sample_tactic(const PolicyParams& params, std::string_view state, double temperature, Rng& rng) {
  return sample_tactic(params, StateFeatures(state), temperature, rng);
}

void Gradient::add_scaled(const Gradient& other, double factor) {
  std::vector<bool> touched(kFeatureDim, false);
  for (auto c : columns) touched[c] = true;
  for (auto c : other.columns) {
    touched[c] = true;
    for (std::size_t v = 0; v < kVocabSize; ++v) values[v * kFeatureDim + c] += factor * other.values[v * kFeatureDim + c];
  }
  finalize_columns(touched);
}

void Gradient::scale(double factor) {
  for (auto c : columns) {
    for (std::size_t v = 0; v < kVocabSize; ++v) values[v * kFeatureDim + c] *= factor;
  }
}

double Gradient::norm() const {
  double sq = 0.0;
  for (auto c : columns) {
    for (std::size_t v = 0; v < kVocabSize; ++v) sq += values[v * kFeatureDim + c] * values[v * kFeatureDim + c];
  }
  return std::sqrt(sq);
}

void Gradient::finalize_columns(const std::vector<bool>& touched) {
  columns.clear();
  for (std::size_t c = 0; c < touched.size(); ++c) {
    if (touched[c]) columns.push_back(static_cast<std::uint32_t>(c));
  }
}

void accumulate_logprob_gradient(const PolicyParams& params, const StateFeatures& state,
                                 std::span<const Token> tokens, std::span<const double> tokenScales,
                                 std::vector<double>& grad, std::vector<bool>& touched) {
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const double s = tokenScales[t];
    if (s == 0.0) continue;
    const FeatureVector features = state.at(tokens.first(t), static_cast<int>(t));
    const LogProbs lp = logprobs_from_features(params, features, 1.0);
    const auto target = static_cast<std::size_t>(tokens[t]);
    for (std::size_t v = 0; v < kVocabSize; ++v) {
      const double coeff = s * ((v == target ? 1.0 : 0.0) - std::exp(lp[v]));
      double* row = grad.data() + v * kFeatureDim;
      for (std::uint32_t i : features) row[i] += coeff;
    }
    for (std::uint32_t i : features) touched[i] = true;
  }
}

NllResult nll_gradient(const PolicyParams& params, std::span<const SupervisedExample> batch) {
  require(!batch.empty(), "nll_gradient: batch must be nonempty");
  NllResult out;
  std::vector<bool> touched(kFeatureDim, false);
  const double perExample = 1.0 / static_cast<double>(batch.size());
  std::vector<double> scales;
  for (const auto& ex : batch) {
    const StateFeatures features(ex.state);
    const ScoredSample scored = sequence_logprob(params, features, ex.tokens);
    const double perToken = perExample / static_cast<double>(ex.tokens.size());
    out.loss -= perToken * scored.totalLogProb;
    scales.assign(ex.tokens.size(), -perToken);
    accumulate_logprob_gradient(params, features, ex.tokens, scales, out.gradient.values, touched);
  }
  out.gradient.finalize_columns(touched);
  return out;
}

double mean_nll(const PolicyParams& params, std::span<const SupervisedExample> batch) {
  require(!batch.empty(), "mean_nll: batch must be nonempty");
  double loss = 0.0;
  for (const auto& ex : batch) {
    const ScoredSample scored = sequence_logprob(params, ex.state, ex.tokens);
    loss -= scored.totalLogProb / static_cast<double>(ex.tokens.size());
  }
  return loss / static_cast<double>(batch.size());
}

double perplexity_from_logprobs(std::span<const double> perTokenLogProb) {
  // exp(-mean) evaluated as 2^(-mean / ln 2): fl(ln 16) / fl(ln 2) is exactly 4,
  // so the uniform policy yields PPL = 16 bit-exactly (exp(fl(ln 16)) does not).
  const double meanLogProb = sum_logprobs(perTokenLogProb) / static_cast<double>(perTokenLogProb.size());
  return std::exp2(-meanLogProb / std::numbers::ln2);
}

Perplexity sequence_perplexity(const PolicyParams& params, std::string_view state, std::span<const Token> tokens) {
  require(!tokens.empty(), "sequence_perplexity: tokens must be nonempty");
  const ScoredSample scored = sequence_logprob(params, state, tokens);
  Perplexity out;
  out.sequence = perplexity_from_logprobs(scored.perTokenLogProb);
  out.perToken.reserve(tokens.size());
  for (double lp : scored.perTokenLogProb) out.perToken.push_back(std::exp(-lp));
  return out;
}

}  // namespace stepprover::policy
