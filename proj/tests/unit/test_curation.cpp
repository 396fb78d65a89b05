#include <algorithm>
#include <map>
#include <set>

#include "support.hpp"

using namespace stepprover;
using namespace stepprover::curation;
using search::Utility;
using testing::TreeBuilder;
using testing::tokens;

namespace {

// Proved tree: root expands [rfl (valid, on path), sym (valid, off path), rw R1 at a bad path].
search::SearchTree three_edge_tree() {
  TreeBuilder b("S(0) = S(0)");
  const int closed = b.add(0, "rfl");
  b.add(0, "sym");
  b.add(0, "rw R1 l2r 000");
  b.prove(closed);
  return b.tree;
}

// Two-step proof of add(S(0),0)=S(0) with siblings at both levels.
search::SearchTree two_step_tree() {
  TreeBuilder b("add(S(0),0) = S(0)");
  const int mid = b.add(0, "rw R1 l2r 0");
  b.add(0, "sym");
  b.add(0, "rw R3 l2r 0");
  b.add(0, "rw R5 l2r 0");
  const int closed = b.add(mid, "rfl");
  b.add(mid, "sym");
  b.prove(closed);
  return b.tree;
}

std::vector<Utility> utilities(const search::SearchTree& tree) {
  std::vector<Utility> out;
  for (const auto& e : tree.edges) out.push_back(e.utility);
  return out;
}

}  // namespace

TEST_SUITE("curation") {
  TEST_CASE("label_tree on the three-edge tree") {
    const auto labeled = label_tree(three_edge_tree());
    CHECK(utilities(labeled) == std::vector<Utility>{Utility::Proven, Utility::Stagnant, Utility::Invalid});
  }

  TEST_CASE("an exhausted tree has no u=2 labels and labels partition the edges") {
    auto tree = three_edge_tree();
    tree.outcome = search::Outcome::BudgetExhausted;
    tree.proofNodeId.reset();
    const auto labeled = label_tree(tree);
    std::map<Utility, int> counts;
    for (auto u : utilities(labeled)) ++counts[u];
    CHECK(counts[Utility::Proven] == 0);
    CHECK(counts[Utility::Stagnant] == 2);
    CHECK(counts[Utility::Invalid] == 1);
    CHECK(counts[Utility::Invalid] + counts[Utility::Stagnant] + counts[Utility::Proven] ==
          static_cast<int>(labeled.edges.size()));
  }

  TEST_CASE("extract_sft returns the proof path in order and each step re-applies") {
    const auto labeled = label_tree(two_step_tree());
    const auto sft = extract_sft(labeled, "Pro");
    REQUIRE(sft.size() == 2);
    CHECK(sft[0].state == "add(S(0),0) = S(0)");
    CHECK(sft[0].tokens == tokens("rw R1 l2r 0"));
    CHECK(sft[1].state == "S(0) = S(0)");
    CHECK(sft[1].tokens == tokens("rfl"));
    for (const auto& ex : sft) {
      CHECK(ex.sourceTag == "Pro");
      const auto s = kernel::parse_state(ex.state);
      REQUIRE(s.ok());
      const auto t = policy::detokenize(ex.tokens);
      REQUIRE(t.ok());
      CHECK(kernel::apply_tactic(s.value(), t.value()).ok());
    }
    std::vector<kernel::Tactic> proof;
    for (const auto& ex : sft) proof.push_back(policy::detokenize(ex.tokens).value());
    CHECK(kernel::replay(labeled.goal, proof));
  }

  TEST_CASE("extract_sft is empty for an exhausted tree") {
    auto tree = two_step_tree();
    tree.outcome = search::Outcome::BudgetExhausted;
    tree.proofNodeId.reset();
    CHECK(extract_sft(label_tree(tree), "Pro").empty());
  }

  TEST_CASE("extract_preferences on the three-edge tree") {
    const auto labeled = label_tree(three_edge_tree());
    PreferenceOptions options;
    options.losersPerWinner = 2;
    Rng rng(1);
    const auto ref = testing::random_params(6, 0.2);
    const auto pairs = extract_preferences(labeled, ref, options, rng);
    REQUIRE(pairs.size() == 2);
    std::multiset<int> loserUtilities;
    std::set<policy::TokenSequence> losers;
    for (const auto& p : pairs) {
      CHECK(p.state == "S(0) = S(0)");
      CHECK(p.winnerTokens == tokens("rfl"));
      CHECK(p.winnerTokens != p.loserTokens);
      loserUtilities.insert(p.loserUtility);
      losers.insert(p.loserTokens);
      CHECK(p.refWinnerPerTokenLogProb == policy::sequence_logprob(ref, p.state, p.winnerTokens).perTokenLogProb);
      CHECK(p.refLoserPerTokenLogProb == policy::sequence_logprob(ref, p.state, p.loserTokens).perTokenLogProb);
    }
    CHECK(loserUtilities == std::multiset<int>{0, 1});
    CHECK(losers == std::set<policy::TokenSequence>{tokens("sym"), tokens("rw R1 l2r 000")});
  }

  TEST_CASE("a proof-path state without siblings yields no pairs") {
    TreeBuilder b("add(S(0),0) = S(0)");
    const int mid = b.add(0, "rw R1 l2r 0");
    const int closed = b.add(mid, "rfl");
    b.add(mid, "sym");
    b.prove(closed);
    const auto labeled = label_tree(b.tree);
    Rng rng(3);
    const auto pairs = extract_preferences(labeled, policy::zero_params(), PreferenceOptions{}, rng);
    REQUIRE(pairs.size() == 1);
    CHECK(pairs[0].state == "S(0) = S(0)");
  }

  TEST_CASE("loser options: invalid only, class bias and the per-winner cap") {
    const auto labeled = label_tree(two_step_tree());
    PreferenceOptions invalidOnly;
    invalidOnly.includeStagnant = false;
    Rng r1(4);
    for (const auto& p : extract_preferences(labeled, policy::zero_params(), invalidOnly, r1)) {
      CHECK(p.loserUtility == 0);
    }

    PreferenceOptions stagnantFirst;
    stagnantFirst.losersPerWinner = 1;
    stagnantFirst.loserClassBias = 1.0;
    Rng r2(4);
    const auto biased = extract_preferences(labeled, policy::zero_params(), stagnantFirst, r2);
    REQUIRE(biased.size() == 2);
    for (const auto& p : biased) CHECK(p.loserUtility == 1);

    PreferenceOptions all;
    all.losersPerWinner = 10;
    Rng r3(4);
    const auto every = extract_preferences(labeled, policy::zero_params(), all, r3);
    CHECK(every.size() == 4);  // three root siblings + one sibling of rfl

    PreferenceOptions zero;
    zero.losersPerWinner = 0;
    Rng r4(4);
    CHECK_THROWS_AS(extract_preferences(labeled, policy::zero_params(), zero, r4), PreconditionError);
  }

  TEST_CASE("extract_preferences is deterministic for a seed and samples without replacement") {
    const auto labeled = label_tree(two_step_tree());
    PreferenceOptions options;
    options.losersPerWinner = 2;
    std::set<std::vector<policy::TokenSequence>> distinct;
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
      Rng a(seed), b(seed);
      const auto pa = extract_preferences(labeled, policy::zero_params(), options, a);
      const auto pb = extract_preferences(labeled, policy::zero_params(), options, b);
      CHECK(pa == pb);
      std::vector<policy::TokenSequence> rootLosers;
      for (const auto& p : pa) {
        if (p.state == "add(S(0),0) = S(0)") rootLosers.push_back(p.loserTokens);
      }
      REQUIRE(rootLosers.size() == 2);
      CHECK(rootLosers[0] != rootLosers[1]);
      std::sort(rootLosers.begin(), rootLosers.end());
      distinct.insert(rootLosers);
    }
    CHECK(distinct.size() == 3);  // every 2-subset of the three root siblings occurs
  }

  TEST_CASE("pairs from searched trees are well formed") {
    const auto params = testing::trained_policy();
    const auto goals = harness::generate_goals(20, harness::TierMix{}, 8);
    int pairs = 0;
    for (std::size_t g = 0; g < goals.size(); ++g) {
      search::SearchConfig cfg;
      cfg.rngSeed = g;
      const auto labeled = label_tree(search::best_first_search(params, goals[g].goal, cfg));
      for (const auto& e : labeled.edges) {
        CHECK(e.utility != Utility::Unlabeled);
        if (!e.valid) CHECK(e.utility == Utility::Invalid);
      }
      const auto onPath = search::proof_edge_indices(labeled);
      for (std::size_t e = 0; e < labeled.edges.size(); ++e) {
        const bool isOnPath = std::find(onPath.begin(), onPath.end(), e) != onPath.end();
        CHECK((labeled.edges[e].utility == Utility::Proven) == isOnPath);
      }
      Rng rng(g);
      for (const auto& p : extract_preferences(labeled, params, PreferenceOptions{}, rng)) {
        ++pairs;
        CHECK(p.loserUtility < 2);
        CHECK(p.winnerTokens != p.loserTokens);
        CHECK(p.refWinnerPerTokenLogProb.size() == p.winnerTokens.size());
        CHECK(p.refLoserPerTokenLogProb.size() == p.loserTokens.size());
        bool winnerFound = false;
        for (std::size_t e : onPath) {
          winnerFound |= labeled.edges[e].fromState == p.state && labeled.edges[e].tacticTokens == p.winnerTokens;
        }
        CHECK(winnerFound);
      }
      for (const auto& ex : extract_sft(labeled, "EI-round-1")) {
        CHECK(kernel::apply_tactic(kernel::parse_state(ex.state).value(), policy::detokenize(ex.tokens).value()).ok());
      }
    }
    CHECK(pairs > 0);
  }

  TEST_CASE("corpus_ppl_stats examples") {
    const std::vector<SftExample> one{{"S(0) = S(0)", tokens("rfl"), "Lib"}};
    const auto stats = corpus_ppl_stats(one, policy::zero_params());
    REQUIRE(stats.size() == 1);
    CHECK(stats[0].sourceTag == "Lib");
    CHECK(stats[0].pairCount == 1);
    CHECK(stats[0].avgSequencePpl == 16.0);
    CHECK_THROWS_AS(corpus_ppl_stats(std::vector<SftExample>{}, policy::zero_params()), PreconditionError);
  }

  TEST_CASE("corpus_ppl_stats groups by source and matches brute force") {
    const auto params = testing::random_params(10, 0.4);
    const std::vector<SftExample> corpus{{"S(0) = S(0)", tokens("rfl"), "Lib"},
                                         {"add(a,0) = a", tokens("rw R1 l2r 0"), "Book"},
                                         {"a = add(a,0)", tokens("rw R1 r2l 0"), "Lib"},
                                         {"add(a,b) = add(b,a)", tokens("rw R5 l2r 0"), "Lib"},
                                         {"S(add(a,0)) = S(a)", tokens("rw R1 l2r 00"), "Book"}};
    const auto stats = corpus_ppl_stats(corpus, params);
    REQUIRE(stats.size() == 2);
    for (const auto& row : stats) {
      double sum = 0.0;
      std::size_t count = 0;
      for (const auto& ex : corpus) {
        if (ex.sourceTag != row.sourceTag) continue;
        const auto lp = policy::sequence_logprob(params, ex.state, ex.tokens);
        sum += std::exp(-lp.totalLogProb / static_cast<double>(ex.tokens.size()));
        ++count;
      }
      CHECK(row.pairCount == count);
      CHECK(std::abs(row.avgSequencePpl - sum / static_cast<double>(count)) < 1e-12);
      CHECK(row.avgSequencePpl >= 1.0);
    }
    CHECK(stats[0].sourceTag < stats[1].sourceTag);
  }

  TEST_CASE("ppl_filter examples and soundness") {
    const std::vector<SftExample> corpus{{"S(0) = S(0)", tokens("rfl"), "Lib"},
                                         {"add(a,0) = a", tokens("rw R1 l2r 0"), "Lib"},
                                         {"a = add(a,0)", tokens("rw R1 r2l 0"), "Book"}};
    CHECK(ppl_filter(corpus, policy::zero_params(), 5.0).empty());
    CHECK(ppl_filter(corpus, policy::zero_params(), 16.5) == corpus);
    CHECK_THROWS_AS(ppl_filter(corpus, policy::zero_params(), 1.0), PreconditionError);

    const auto params = testing::trained_policy();
    const auto goals = harness::generate_goals(30, harness::TierMix{}, 21);
    auto big = harness::witness_corpus(goals, "Pro");
    big.insert(big.end(), corpus.begin(), corpus.end());
    const double threshold = 1.5;
    const auto kept = ppl_filter(big, params, threshold);
    CHECK(!kept.empty());
    CHECK(kept.size() < big.size());
    std::size_t cursor = 0;
    for (const auto& ex : big) {
      const double ppl = policy::sequence_perplexity(params, ex.state, ex.tokens).sequence;
      const bool retained = cursor < kept.size() && kept[cursor] == ex;
      if (retained) ++cursor;
      CHECK(retained == (ppl < threshold));
    }
    CHECK(cursor == kept.size());
  }

  TEST_CASE("median_token_ppl matches sorting") {
    Rng rng(12);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<PreferencePair> pairs(1 + rng.below(6));
      std::vector<double> all;
      for (auto& p : pairs) {
        p.refWinnerPerTokenLogProb.resize(1 + rng.below(5));
        p.refLoserPerTokenLogProb.resize(1 + rng.below(5));
        for (double& v : p.refWinnerPerTokenLogProb) v = -3.0 * rng.uniform();
        for (double& v : p.refLoserPerTokenLogProb) v = -3.0 * rng.uniform();
        for (double v : p.refWinnerPerTokenLogProb) all.push_back(std::exp(-v));
        for (double v : p.refLoserPerTokenLogProb) all.push_back(std::exp(-v));
      }
      std::sort(all.begin(), all.end());
      const std::size_t n = all.size();
      const double expected = n % 2 == 1 ? all[n / 2] : 0.5 * (all[n / 2 - 1] + all[n / 2]);
      CHECK(median_token_ppl(pairs) == expected);
    }
    CHECK_THROWS_AS(median_token_ppl(std::vector<PreferencePair>{}), PreconditionError);
  }
}
