#include "stepprover/curation.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "stepprover/errors.hpp"

namespace stepprover::curation {

using search::Utility;

std::string ei_round_tag(int round) { return "EI-round-" + std::to_string(round); }

search::SearchTree label_tree(search::SearchTree tree) {
  std::vector<bool> onPath(tree.edges.size(), false);
  for (std::size_t e : search::proof_edge_indices(tree)) onPath[e] = true;
  for (std::size_t e = 0; e < tree.edges.size(); ++e) {
    auto& edge = tree.edges[e];
    if (!edge.valid) {
      edge.utility = Utility::Invalid;
    } else {
      edge.utility = onPath[e] ? Utility::Proven : Utility::Stagnant;
    }
  }
  return tree;
}

std::vector<SftExample> extract_sft(const search::SearchTree& labeled, const std::string& sourceTag) {
  std::vector<SftExample> out;
  for (std::size_t e : search::proof_edge_indices(labeled)) {
    const auto& edge = labeled.edges[e];
    if (edge.utility != Utility::Proven) continue;
    out.push_back(SftExample{edge.fromState, edge.tacticTokens, sourceTag});
  }
  return out;
}

std::vector<PreferencePair> extract_preferences(const search::SearchTree& labeled,
                                                const policy::PolicyParams& refParams,
                                                const PreferenceOptions& options, Rng& rng) {
  require(options.losersPerWinner >= 1, "extract_preferences: losersPerWinner must be >= 1");
  if (options.loserClassBias) {
    require(*options.loserClassBias >= 0.0 && *options.loserClassBias <= 1.0,
            "extract_preferences: loserClassBias must lie in [0, 1]");
  }
  std::vector<PreferencePair> out;
  for (std::size_t w : search::proof_edge_indices(labeled)) {
    const auto& winner = labeled.edges[w];
    if (winner.utility != Utility::Proven) continue;

    std::vector<std::size_t> invalid;
    std::vector<std::size_t> stagnant;
    for (std::size_t e = 0; e < labeled.edges.size(); ++e) {
      const auto& edge = labeled.edges[e];
      if (e == w || edge.fromNodeId != winner.fromNodeId || edge.tacticTokens == winner.tacticTokens) continue;
      if (edge.utility == Utility::Invalid) invalid.push_back(e);
      if (edge.utility == Utility::Stagnant && options.includeStagnant) stagnant.push_back(e);
    }

    std::vector<std::size_t> chosen;
    auto take = [&rng, &chosen](std::vector<std::size_t>& pool) {
      const std::size_t pick = rng.below(pool.size());
      chosen.push_back(pool[pick]);
      pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
    };
    while (static_cast<int>(chosen.size()) < options.losersPerWinner && (!invalid.empty() || !stagnant.empty())) {
      if (options.loserClassBias) {
        const bool wantStagnant = rng.uniform() < *options.loserClassBias;
        if ((wantStagnant && !stagnant.empty()) || invalid.empty()) {
          take(stagnant);
        } else {
          take(invalid);
        }
        continue;
      }
      // Uniform without replacement over the union, invalid siblings first in index space.
      const std::size_t pick = rng.below(invalid.size() + stagnant.size());
      auto& pool = pick < invalid.size() ? invalid : stagnant;
      const std::size_t local = pick < invalid.size() ? pick : pick - invalid.size();
      chosen.push_back(pool[local]);
      pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(local));
    }

    if (chosen.empty()) continue;
    const policy::StateFeatures features(winner.fromState);
    const auto refWinner = policy::sequence_logprob(refParams, features, winner.tacticTokens);
    for (std::size_t l : chosen) {
      const auto& loser = labeled.edges[l];
      PreferencePair pair;
      pair.state = winner.fromState;
      pair.winnerTokens = winner.tacticTokens;
      pair.loserTokens = loser.tacticTokens;
      pair.loserUtility = static_cast<int>(loser.utility);
      pair.refWinnerPerTokenLogProb = refWinner.perTokenLogProb;
      pair.refLoserPerTokenLogProb = policy::sequence_logprob(refParams, features, loser.tacticTokens).perTokenLogProb;
      out.push_back(std::move(pair));
    }
  }
  return out;
}

std::vector<CorpusStats> corpus_ppl_stats(std::span<const SftExample> corpus, const policy::PolicyParams& params) {
  require(!corpus.empty(), "corpus_ppl_stats: corpus must be nonempty");
  std::map<std::string, std::pair<std::size_t, double>> groups;
  for (const auto& ex : corpus) {
    auto& [count, sum] = groups[ex.sourceTag];
    ++count;
    sum += policy::sequence_perplexity(params, ex.state, ex.tokens).sequence;
  }
  std::vector<CorpusStats> out;
  for (const auto& [tag, group] : groups) {
    out.push_back(CorpusStats{tag, group.first, group.second / static_cast<double>(group.first)});
  }
  return out;
}

std::vector<SftExample> ppl_filter(std::span<const SftExample> corpus, const policy::PolicyParams& params,
                                   double threshold) {
  require(threshold > 1.0, "ppl_filter: threshold must be > 1");
  std::vector<SftExample> out;
  for (const auto& ex : corpus) {
    if (policy::sequence_perplexity(params, ex.state, ex.tokens).sequence < threshold) out.push_back(ex);
  }
  return out;
}

double median_token_ppl(std::span<const PreferencePair> pairs) {
  std::vector<double> values;
  for (const auto& pair : pairs) {
    for (double lp : pair.refWinnerPerTokenLogProb) values.push_back(std::exp(-lp));
    for (double lp : pair.refLoserPerTokenLogProb) values.push_back(std::exp(-lp));
  }
  require(!values.empty(), "median_token_ppl: no tokens");
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

std::vector<policy::SupervisedExample> as_supervised(std::span<const SftExample> corpus) {
  std::vector<policy::SupervisedExample> out;
  out.reserve(corpus.size());
  for (const auto& ex : corpus) out.push_back(policy::SupervisedExample{ex.state, ex.tokens});
  return out;
}

}  // namespace stepprover::curation
