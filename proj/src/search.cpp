#include "stepprover/search.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_set>

#include "stepprover/errors.hpp"

namespace stepprover::search {

namespace {

struct FrontierOrder {
  const std::vector<SearchNode>* nodes;
  bool operator()(NodeId a, NodeId b) const {
    const double pa = (*nodes)[a].priority;
    const double pb = (*nodes)[b].priority;
    if (pa != pb) return pa > pb;
    return a < b;
  }
};

bool on_root_path(const std::vector<SearchNode>& nodes, NodeId from, const std::string& childText) {
  std::optional<NodeId> cursor = from;
  while (cursor) {
    if (kernel::serialize_state(nodes[*cursor].state) == childText) return true;
    cursor = nodes[*cursor].parentId;
  }
  return false;
}

}  // namespace

void SearchConfig::validate() const {
  require(expansionWidth >= 1, "search: expansion width must be >= 1");
  require(samplingTemperature > 0.0, "search: sampling temperature must be > 0");
  require(lengthNormAlpha >= 0.0, "search: length normalization alpha must be >= 0");
  require(nodeBudget >= 1, "search: node budget must be >= 1");
  require(maxDepth >= 1, "search: max depth must be >= 1");
}

double node_priority(double pathLogProb, int depth, double alpha) {
  if (depth == 0) return 0.0;
  return pathLogProb / std::pow(static_cast<double>(depth), alpha);
}

SearchTree best_first_search(const policy::PolicyParams& params, const kernel::ProofState& goal,
                             const SearchConfig& config, Rng& rng, const PopObserver& observer) {
  config.validate();
  require(!goal.closed, "search: goal is already closed");

  SearchTree tree;
  tree.goal = goal;
  tree.config = config;
  tree.nodes.push_back(SearchNode{0, std::nullopt, goal, std::nullopt, 0.0, 0.0, 0, 0.0});

  std::set<NodeId, FrontierOrder> frontier(FrontierOrder{&tree.nodes});
  frontier.insert(0);

  while (!frontier.empty() && tree.expansionsUsed < config.nodeBudget) {
    const NodeId current = *frontier.begin();
    frontier.erase(frontier.begin());
    if (observer) {
      std::vector<double> remaining;
      remaining.reserve(frontier.size());
      for (NodeId id : frontier) remaining.push_back(tree.nodes[id].priority);
      observer(tree.nodes[current], remaining);
    }
    ++tree.expansionsUsed;

    const std::string fromText = kernel::serialize_state(tree.nodes[current].state);
    const policy::StateFeatures features(fromText);
    std::vector<policy::ScoredSample> candidates;
    candidates.reserve(static_cast<std::size_t>(config.expansionWidth));
    for (int i = 0; i < config.expansionWidth; ++i) {
      auto sample = policy::sample_tactic(params, features, config.samplingTemperature, rng);
      const bool duplicate = std::any_of(candidates.begin(), candidates.end(),
                                         [&](const policy::ScoredSample& c) { return c.tokens == sample.tokens; });
      if (!duplicate) candidates.push_back(std::move(sample));
    }

    for (auto& candidate : candidates) {
      TransitionRecord record;
      record.fromNodeId = current;
      record.fromState = fromText;
      record.tacticTokens = std::move(candidate.tokens);
      record.perTokenLogProb = std::move(candidate.perTokenLogProb);

      auto tactic = policy::detokenize(record.tacticTokens);
      if (!tactic) {
        record.error = tactic.error().kind;
        tree.edges.push_back(std::move(record));
        continue;
      }
      record.tactic = tactic.value();
      // Copy: push_back below may reallocate tree.nodes.
      const SearchNode parent = tree.nodes[current];
      auto next = kernel::apply_tactic(parent.state, tactic.value());
      if (!next) {
        record.error = next.error().kind;
        tree.edges.push_back(std::move(record));
        continue;
      }
      record.valid = true;
      const std::string childText = kernel::serialize_state(next.value());
      if (next.value().closed || !on_root_path(tree.nodes, current, childText)) {
        SearchNode child;
        child.nodeId = static_cast<NodeId>(tree.nodes.size());
        child.parentId = current;
        child.state = std::move(next).value();
        child.incomingTactic = record.tactic;
        child.incomingLogProb = candidate.totalLogProb;
        child.pathLogProb = parent.pathLogProb + candidate.totalLogProb;
        child.depth = parent.depth + 1;
        child.priority = node_priority(child.pathLogProb, child.depth, config.lengthNormAlpha);
        record.childNodeId = child.nodeId;
        const bool closed = child.state.closed;
        tree.nodes.push_back(std::move(child));
        if (closed) {
          if (!tree.proofNodeId) tree.proofNodeId = *record.childNodeId;
        } else if (tree.nodes.back().depth < config.maxDepth) {
          frontier.insert(*record.childNodeId);
        }
      }
      tree.edges.push_back(std::move(record));
    }
    if (tree.proofNodeId) {
      tree.outcome = Outcome::Proved;
      break;
    }
  }
  return tree;
}

SearchTree best_first_search(const policy::PolicyParams& params, const kernel::ProofState& goal,
                             const SearchConfig& config) {
  Rng rng(config.rngSeed);
  return best_first_search(params, goal, config, rng);
}

std::vector<std::size_t> proof_edge_indices(const SearchTree& tree) {
  if (tree.outcome != Outcome::Proved || !tree.proofNodeId) return {};
  std::vector<std::size_t> incoming(tree.nodes.size(), SIZE_MAX);
  for (std::size_t e = 0; e < tree.edges.size(); ++e) {
    if (tree.edges[e].childNodeId) incoming[*tree.edges[e].childNodeId] = e;
  }
  std::vector<std::size_t> path;
  NodeId cursor = *tree.proofNodeId;
  while (tree.nodes[cursor].parentId) {
    path.push_back(incoming[cursor]);
    cursor = *tree.nodes[cursor].parentId;
  }
  std::reverse(path.begin(), path.end());
  return path;
}

std::optional<std::vector<ProofStep>> proof_path(const SearchTree& tree) {
  if (tree.outcome != Outcome::Proved) return std::nullopt;
  std::vector<ProofStep> steps;
  for (std::size_t e : proof_edge_indices(tree)) {
    const TransitionRecord& edge = tree.edges[e];
    steps.emplace_back(tree.nodes[edge.fromNodeId].state, *edge.tactic);
  }
  return steps;
}

std::vector<std::pair<kernel::Tactic, kernel::ProofState>> applicable_tactics(const kernel::ProofState& state) {
  std::vector<std::pair<kernel::Tactic, kernel::ProofState>> out;
  auto attempt = [&](const kernel::Tactic& tactic) {
    auto next = kernel::apply_tactic(state, tactic);
    if (next) out.emplace_back(tactic, std::move(next).value());
  };
  attempt(kernel::Tactic::rfl());
  attempt(kernel::Tactic::sym());
  const auto paths = kernel::all_paths(state);
  for (const auto& rule : kernel::fixed_axioms()) {
    for (auto dir : {kernel::Direction::L2R, kernel::Direction::R2L}) {
      for (const auto& path : paths) attempt(kernel::Tactic::rw(rule.id, dir, path));
    }
  }
  return out;
}

bool exhaustive_oracle(const kernel::ProofState& goal, int maxDepth) {
  if (goal.closed) return false;
  std::vector<kernel::ProofState> level{goal};
  std::unordered_set<std::string> seen{kernel::serialize_state(goal)};
  for (int depth = 0; depth < maxDepth && !level.empty(); ++depth) {
    std::vector<kernel::ProofState> nextLevel;
    for (const auto& state : level) {
      if (state.lhs == state.rhs) return true;  // Rfl closes it at step depth + 1
      if (depth + 1 >= maxDepth) continue;
      for (auto& [tactic, next] : applicable_tactics(state)) {
        if (next.closed) continue;
        if (seen.insert(kernel::serialize_state(next)).second) nextLevel.push_back(std::move(next));
      }
    }
    level = std::move(nextLevel);
  }
  return false;
}

}  // namespace stepprover::search
