#pragma once

// Turns finished search trees into training data: utility labels, SFT
// examples from proof paths, utility-aware preference pairs with frozen
// reference log-probs, and corpus perplexity statistics / filtering.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stepprover/policy.hpp"
#include "stepprover/rng.hpp"
#include "stepprover/search.hpp"

namespace stepprover::curation {

// Lib | Book | Pro | EI-round-<n>; kept as free text so rounds can be tagged.
struct SftExample {
  std::string state;
  policy::TokenSequence tokens;
  std::string sourceTag;

  bool operator==(const SftExample&) const = default;
};

std::string ei_round_tag(int round);

struct PreferencePair {
  std::string state;
  policy::TokenSequence winnerTokens;
  policy::TokenSequence loserTokens;
  int loserUtility = 0;  // 0 or 1
  std::vector<double> refWinnerPerTokenLogProb;
  std::vector<double> refLoserPerTokenLogProb;

  bool operator==(const PreferencePair&) const = default;
};

struct CorpusStats {
  std::string sourceTag;
  std::size_t pairCount = 0;
  double avgSequencePpl = 1.0;
};

// u=0 for invalid, u=2 for edges on the proof path, u=1 for every other
// valid edge (all valid edges when the budget ran out).
search::SearchTree label_tree(search::SearchTree tree);

std::vector<SftExample> extract_sft(const search::SearchTree& labeled, const std::string& sourceTag);

struct PreferenceOptions {
  int losersPerWinner = 4;
  // false restricts losers to invalid siblings (plain DPO data).
  bool includeStagnant = true;
  // When set, each draw takes a stagnant sibling with this probability
  // (if any remain). Unset means uniform over all eligible siblings.
  std::optional<double> loserClassBias;
};

std::vector<PreferencePair> extract_preferences(const search::SearchTree& labeled,
                                                const policy::PolicyParams& refParams,
                                                const PreferenceOptions& options, Rng& rng);

// Grouped by sourceTag, rows sorted by tag.
std::vector<CorpusStats> corpus_ppl_stats(std::span<const SftExample> corpus, const policy::PolicyParams& params);

std::vector<SftExample> ppl_filter(std::span<const SftExample> corpus, const policy::PolicyParams& params,
                                   double threshold = 5.0);

// Median of the reference per-token perplexities over both sides of every pair.
double median_token_ppl(std::span<const PreferencePair> pairs);

std::vector<policy::SupervisedExample> as_supervised(std::span<const SftExample> corpus);

}  // namespace stepprover::curation
