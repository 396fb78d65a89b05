#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include <doctest.h>

#include "stepprover/curation.hpp"
#include "stepprover/errors.hpp"
#include "stepprover/harness.hpp"
#include "stepprover/kernel.hpp"
#include "stepprover/policy.hpp"
#include "stepprover/rng.hpp"
#include "stepprover/search.hpp"
#include "stepprover/training.hpp"

namespace testing {

using namespace stepprover;

inline kernel::ProofState state(const std::string& text) {
  auto parsed = kernel::parse_state(text);
  REQUIRE_MESSAGE(parsed.ok(), text);
  return parsed.value();
}

inline kernel::Term term(const std::string& text) {
  auto parsed = kernel::parse_term(text);
  REQUIRE_MESSAGE(parsed.ok(), text);
  return parsed.value();
}

inline kernel::Tactic tactic(const std::string& text) {
  auto parsed = kernel::parse_tactic(text);
  REQUIRE_MESSAGE(parsed.ok(), text);
  return parsed.value();
}

inline policy::TokenSequence tokens(const std::string& text) { return policy::tokenize(tactic(text)); }

// Small random weights on every entry.
inline policy::PolicyParams random_params(std::uint64_t seed, double scale) {
  policy::PolicyParams p;
  Rng rng(seed);
  for (double& w : p.weights) w = scale * (2.0 * rng.uniform() - 1.0);
  p.seed = seed;
  p.versionTag = "random";
  return p;
}

// Random ground or variable term of bounded depth.
inline kernel::Term random_term(Rng& rng, int depth) {
  const auto pick = depth <= 0 ? rng.below(2) : rng.below(5);
  switch (pick) {
    case 0:
      return kernel::Term::zero();
    case 1:
      return kernel::Term::var(std::string(1, static_cast<char>('a' + rng.below(4))));
    case 2:
      return kernel::Term::succ(random_term(rng, depth - 1));
    case 3:
      return kernel::Term::add(random_term(rng, depth - 1), random_term(rng, depth - 1));
    default:
      return kernel::Term::mul(random_term(rng, depth - 1), random_term(rng, depth - 1));
  }
}

// A policy warm-started on witness proofs of generated Easy/Medium goals.
inline policy::PolicyParams trained_policy(std::uint64_t seed = 11, int goals = 24) {
  const auto book = harness::generate_goals(goals, harness::TierMix{}, seed);
  const auto corpus = harness::witness_corpus(book, "Book");
  training::SftConfig cfg;
  cfg.epochs = 16;
  cfg.rngSeed = seed;
  return training::sft_train(policy::zero_params(), corpus, cfg).params;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("stepprover-unit-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Hand-assembled search trees for labeling and extraction tests.
struct TreeBuilder {
  search::SearchTree tree;

  explicit TreeBuilder(const std::string& goal) {
    tree.goal = state(goal);
    tree.nodes.push_back(search::SearchNode{0, std::nullopt, tree.goal, std::nullopt, 0.0, 0.0, 0, 0.0});
  }

  // Records an attempt from `from`; returns the child node id, or -1 when the
  // kernel rejects it.
  int add(int from, const policy::TokenSequence& tokens) {
    search::TransitionRecord edge;
    edge.fromNodeId = from;
    const auto& parent = tree.nodes[static_cast<std::size_t>(from)];
    edge.fromState = kernel::serialize_state(parent.state);
    edge.tacticTokens = tokens;
    edge.perTokenLogProb = policy::sequence_logprob(policy::zero_params(), edge.fromState, tokens).perTokenLogProb;
    int child = -1;
    const auto parsed = policy::detokenize(tokens);
    if (!parsed) {
      edge.error = parsed.error().kind;
    } else {
      edge.tactic = parsed.value();
      const auto next = kernel::apply_tactic(parent.state, parsed.value());
      if (!next) {
        edge.error = next.error().kind;
      } else {
        edge.valid = true;
        child = static_cast<int>(tree.nodes.size());
        search::SearchNode node;
        node.nodeId = child;
        node.parentId = from;
        node.state = next.value();
        node.incomingTactic = parsed.value();
        node.depth = parent.depth + 1;
        edge.childNodeId = child;
        tree.nodes.push_back(node);
      }
    }
    tree.edges.push_back(edge);
    return child;
  }

  int add(int from, const std::string& tacticText) { return add(from, tokens(tacticText)); }

  void prove(int closedNode) {
    tree.outcome = search::Outcome::Proved;
    tree.proofNodeId = closedNode;
  }
};

}  // namespace testing
