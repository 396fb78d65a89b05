#pragma once

// Best-first proof search driven by the policy. Every sampled tactic is
// recorded, valid or not, so the finished tree can be labeled afterwards.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "stepprover/kernel.hpp"
#include "stepprover/policy.hpp"
#include "stepprover/rng.hpp"

namespace stepprover::search {

struct SearchConfig {
  int expansionWidth = 4;
  double samplingTemperature = 1.3;
  double lengthNormAlpha = 2.0;
  int nodeBudget = 400;
  int maxDepth = 20;
  std::uint64_t rngSeed = 0;

  // Throws PreconditionError on any violated invariant.
  void validate() const;
};

using NodeId = std::int32_t;

struct SearchNode {
  NodeId nodeId = 0;
  std::optional<NodeId> parentId;
  kernel::ProofState state;
  std::optional<kernel::Tactic> incomingTactic;
  double incomingLogProb = 0.0;
  double pathLogProb = 0.0;  // sum of incomingLogProb from the root
  int depth = 0;
  double priority = 0.0;
};

enum class Utility : std::int8_t { Unlabeled = -1, Invalid = 0, Stagnant = 1, Proven = 2 };

struct TransitionRecord {
  NodeId fromNodeId = 0;
  std::string fromState;
  std::optional<kernel::Tactic> tactic;  // absent when the tokens do not parse
  policy::TokenSequence tacticTokens;
  std::vector<double> perTokenLogProb;
  bool valid = false;
  std::optional<kernel::ErrorKind> error;
  std::optional<NodeId> childNodeId;  // absent when invalid or cut by the cycle/depth guard
  Utility utility = Utility::Unlabeled;
};

enum class Outcome : std::uint8_t { Proved, BudgetExhausted };

struct SearchTree {
  kernel::ProofState goal;
  SearchConfig config;
  std::vector<SearchNode> nodes;  // indexed by nodeId
  std::vector<TransitionRecord> edges;
  Outcome outcome = Outcome::BudgetExhausted;
  std::optional<NodeId> proofNodeId;  // the closed node when Proved
  int expansionsUsed = 0;
};

// Called before each expansion with the popped node and the priorities of
// every node still waiting in the frontier.
using PopObserver = std::function<void(const SearchNode& popped, const std::vector<double>& remaining)>;

double node_priority(double pathLogProb, int depth, double alpha);

SearchTree best_first_search(const policy::PolicyParams& params, const kernel::ProofState& goal,
                             const SearchConfig& config, Rng& rng, const PopObserver& observer = {});
// Seeds the generator from config.rngSeed.
SearchTree best_first_search(const policy::PolicyParams& params, const kernel::ProofState& goal,
                             const SearchConfig& config);

using ProofStep = std::pair<kernel::ProofState, kernel::Tactic>;

std::optional<std::vector<ProofStep>> proof_path(const SearchTree& tree);
// Edge indices on the root-to-closure path, in order. Empty unless Proved.
std::vector<std::size_t> proof_edge_indices(const SearchTree& tree);

// Every tactic the kernel accepts in this state: Rfl, Sym, and each rule x
// direction x path that matches.
std::vector<std::pair<kernel::Tactic, kernel::ProofState>> applicable_tactics(const kernel::ProofState& state);

// Breadth-first enumeration of all tactic sequences of length <= maxDepth.
bool exhaustive_oracle(const kernel::ProofState& goal, int maxDepth);

}  // namespace stepprover::search
