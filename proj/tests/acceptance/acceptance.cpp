// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "stepprover/cli.hpp"
#include "stepprover/curation.hpp"
#include "stepprover/harness.hpp"
#include "stepprover/io.hpp"
#include "stepprover/kernel.hpp"
#include "stepprover/policy.hpp"
#include "stepprover/rng.hpp"
#include "stepprover/search.hpp"
#include "stepprover/training.hpp"

using namespace stepprover;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kPinnedSeeds[] = {1, 2, 3};

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void expect(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "[" << what << "] ";
    }
  }
};

kernel::ProofState parse(const std::string& text) { return kernel::parse_state(text).value(); }

policy::TokenSequence tokens_of(const std::string& tacticText) {
  return policy::tokenize(kernel::parse_tactic(tacticText).value());
}

policy::PolicyParams random_params(std::uint64_t seed, double scale) {
  policy::PolicyParams p;
  Rng rng(seed);
  for (double& w : p.weights) w = scale * (2.0 * rng.uniform() - 1.0);
  return p;
}

kernel::Term random_term(Rng& rng, int depth) {
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

policy::TokenSequence random_tokens(Rng& rng) {
  policy::TokenSequence seq;
  const auto length = 1 + rng.below(8);
  for (std::size_t i = 0; i < length; ++i) seq.push_back(static_cast<policy::Token>(rng.below(policy::kVocabSize)));
  return seq;
}

// Pairs over random states, scored under `ref`.
std::vector<curation::PreferencePair> random_pairs(const policy::PolicyParams& ref, std::uint64_t seed, int count) {
  Rng rng(seed);
  std::vector<curation::PreferencePair> out;
  while (static_cast<int>(out.size()) < count) {
    curation::PreferencePair p;
    p.state = kernel::serialize_state({random_term(rng, 3), random_term(rng, 3), false});
    p.winnerTokens = random_tokens(rng);
    p.loserTokens = random_tokens(rng);
    if (p.winnerTokens == p.loserTokens) continue;
    p.loserUtility = static_cast<int>(rng.below(2));
    p.refWinnerPerTokenLogProb = policy::sequence_logprob(ref, p.state, p.winnerTokens).perTokenLogProb;
    p.refLoserPerTokenLogProb = policy::sequence_logprob(ref, p.state, p.loserTokens).perTokenLogProb;
    out.push_back(std::move(p));
  }
  return out;
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double median(std::vector<int> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// 1. Gradient fidelity.
void gradient_fidelity(Outcome& o) {
  Rng rng(101);
  const auto params = random_params(1, 0.3);
  std::vector<policy::SupervisedExample> batch;
  for (const char* t : {"rw R1 l2r 0", "sym", "rfl", "rw R6 r2l 1101"}) {
    batch.push_back({kernel::serialize_state({random_term(rng, 3), random_term(rng, 2), false}), tokens_of(t)});
  }
  training::LossFunction nll = [&](const policy::PolicyParams& q) {
    auto r = policy::nll_gradient(q, batch);
    return std::make_pair(r.loss, std::move(r.gradient));
  };
  const double nllErr = training::finite_diff_check(nll, params, 64, 1e-2, rng);
  o.expect(nllErr < 1e-5, "NLL");

  const auto ref = random_params(2, 0.3);
  const auto pairs = random_pairs(ref, 3, 4);
  double worst = nllErr;
  for (auto m : {training::Method::DPO, training::Method::PWDPO}) {
    training::DpoConfig cfg;
    cfg.method = m;
    for (const auto& pair : pairs) {
      training::LossFunction fn = [&](const policy::PolicyParams& q) {
        auto r = training::preference_loss(q, pair, cfg);
        return std::make_pair(r.loss, std::move(r.gradient));
      };
      const double err = training::finite_diff_check(fn, params, 64, 1e-2, rng);
      worst = std::max(worst, err);
      o.expect(err < 1e-5, std::string(training::to_string(m)));
    }
  }
  o.detail << "max relative error " << worst;
}

// 2. Identity anchors.
void identity_anchors(Outcome& o) {
  const auto ref = random_params(4, 0.5);
  const auto pairs = random_pairs(ref, 5, 100);
  double worst = 0.0;
  training::DpoConfig dpo;
  dpo.method = training::Method::DPO;
  training::DpoConfig pw;
  pw.method = training::Method::PWDPO;
  for (const auto& pair : pairs) {
    worst = std::max(worst, std::abs(training::dpo_loss(ref, pair, dpo).loss - std::numbers::ln2));
    worst = std::max(worst, std::abs(training::pw_dpo_loss(ref, pair, pw).loss - std::numbers::ln2));
  }
  o.expect(worst <= 1e-12, "loss at reference");

  Rng rng(6);
  int exact = 0;
  const int sequences = 2000;
  for (int i = 0; i < sequences; ++i) {
    const auto state = kernel::serialize_state({random_term(rng, 3), random_term(rng, 3), false});
    const auto ppl = policy::sequence_perplexity(policy::zero_params(), state, random_tokens(rng));
    exact += ppl.sequence == 16.0;
  }
  o.expect(exact == sequences, "zero-weight perplexity");
  o.detail << "max |loss - log 2| " << worst << ", " << exact << "/" << sequences << " perplexities exactly 16";
}

// 3. Reduction identity.
void reduction_identity(Outcome& o) {
  const auto ref = random_params(7, 0.3);
  const auto params = random_params(8, 0.3);
  training::DpoConfig cfg;
  cfg.method = training::Method::PWDPO;
  cfg.deltaMin = 1.0;
  cfg.deltaMax = 1.0;
  double worst = 0.0;
  for (const auto& pair : random_pairs(ref, 9, 100)) {
    const auto w = policy::sequence_logprob(params, pair.state, pair.winnerTokens).perTokenLogProb;
    const auto l = policy::sequence_logprob(params, pair.state, pair.loserTokens).perTokenLogProb;
    const double margin =
        cfg.beta * ((mean(w) - mean(pair.refWinnerPerTokenLogProb)) - (mean(l) - mean(pair.refLoserPerTokenLogProb)));
    const double expected = training::neg_log_sigmoid(margin);
    worst = std::max(worst, std::abs(training::pw_dpo_loss(params, pair, cfg).loss - expected));
  }
  o.expect(worst <= 1e-12, "PW-DPO vs mean DPO");
  o.detail << "max difference " << worst;
}

// Hand-assembled trees for the labeling oracle.
struct HandTree {
  search::SearchTree tree;

  explicit HandTree(const kernel::ProofState& goal) {
    tree.goal = goal;
    search::SearchNode root;
    root.state = goal;
    tree.nodes.push_back(root);
  }

  // Returns the child node id, or -1 for an invalid or cut attempt.
  int add(int from, const policy::TokenSequence& seq, bool cut = false) {
    search::TransitionRecord edge;
    edge.fromNodeId = from;
    const auto parentState = tree.nodes[static_cast<std::size_t>(from)].state;
    edge.fromState = kernel::serialize_state(parentState);
    edge.tacticTokens = seq;
    edge.perTokenLogProb = std::vector<double>(seq.size(), -std::log(16.0));
    int child = -1;
    const auto parsed = policy::detokenize(seq);
    if (!parsed) {
      edge.error = parsed.error().kind;
    } else {
      edge.tactic = parsed.value();
      const auto next = kernel::apply_tactic(parentState, parsed.value());
      if (!next) {
        edge.error = next.error().kind;
      } else {
        edge.valid = true;
        if (!cut) {
          child = static_cast<int>(tree.nodes.size());
          search::SearchNode node;
          node.nodeId = child;
          node.parentId = from;
          node.state = next.value();
          node.incomingTactic = parsed.value();
          node.depth = tree.nodes[static_cast<std::size_t>(from)].depth + 1;
          edge.childNodeId = child;
          tree.nodes.push_back(node);
        }
      }
    }
    tree.edges.push_back(edge);
    return child;
  }
};

// Labels by walking parent links up from the closed node.
std::vector<search::Utility> brute_force_labels(const search::SearchTree& tree) {
  std::set<int> ancestors;
  if (tree.outcome == search::Outcome::Proved) {
    std::optional<search::NodeId> cursor = tree.proofNodeId;
    while (cursor) {
      ancestors.insert(static_cast<int>(*cursor));
      cursor = tree.nodes[static_cast<std::size_t>(*cursor)].parentId;
    }
  }
  std::vector<search::Utility> out;
  for (const auto& e : tree.edges) {
    if (!e.valid) {
      out.push_back(search::Utility::Invalid);
    } else if (e.childNodeId && ancestors.count(static_cast<int>(*e.childNodeId)) &&
               tree.nodes[static_cast<std::size_t>(*e.childNodeId)].parentId == e.fromNodeId) {
      out.push_back(search::Utility::Proven);
    } else {
      out.push_back(search::Utility::Stagnant);
    }
  }
  return out;
}

// 4. Labeling oracle.
void labeling_oracle(Outcome& o) {
  const auto goals = harness::generate_goals(25, harness::TierMix{1.0, 1.0, 1.0}, 31);
  Rng rng(32);
  std::map<std::string, int> cells;
  int trees = 0;
  int mismatches = 0;
  for (std::size_t g = 0; g < goals.size(); ++g) {
    const bool proved = g % 2 == 0;
    HandTree h(goals[g].goal);
    const auto& witness = goals[g].witness;
    const std::size_t steps = proved ? witness.size() : witness.size() - 1;
    int node = 0;
    for (std::size_t s = 0; s < steps; ++s) {
      // Noise before and after the path step: random token strings, legal
      // side moves, cut duplicates of the path step and re-expansions of
      // earlier nodes.
      auto noise = [&] {
        const auto kind = rng.below(4);
        const int from = static_cast<int>(rng.below(h.tree.nodes.size()));
        if (h.tree.nodes[static_cast<std::size_t>(from)].state.closed) return;
        if (kind == 0) {
          h.add(from, random_tokens(rng));
        } else if (kind == 1) {
          const auto options = search::applicable_tactics(h.tree.nodes[static_cast<std::size_t>(from)].state);
          if (!options.empty()) h.add(from, policy::tokenize(options[rng.below(options.size())].first));
        } else if (kind == 2) {
          h.add(node, policy::tokenize(witness[s]), true);
        } else {
          h.add(from, policy::tokenize(kernel::Tactic::rw(kernel::RuleId::R3, kernel::Direction::L2R, "0")));
        }
      };
      for (auto k = rng.below(3); k > 0; --k) noise();
      node = h.add(node, policy::tokenize(witness[s]));
      for (auto k = rng.below(3); k > 0; --k) noise();
    }
    if (proved) {
      h.tree.outcome = search::Outcome::Proved;
      h.tree.proofNodeId = node;
    }
    const auto labeled = curation::label_tree(h.tree);
    const auto expected = brute_force_labels(h.tree);
    ++trees;
    for (std::size_t e = 0; e < expected.size(); ++e) {
      if (labeled.edges[e].utility != expected[e]) ++mismatches;
      const auto& edge = h.tree.edges[e];
      std::string cell = proved ? "proved/" : "exhausted/";
      cell += edge.valid ? "valid/" : "invalid/";
      cell += expected[e] == search::Utility::Proven ? "on" : "off";
      ++cells[cell];
    }
  }
  // Invalid edges and exhausted trees cannot lie on a proof path.
  for (const char* cell : {"proved/valid/on", "proved/valid/off", "proved/invalid/off", "exhausted/valid/off",
                           "exhausted/invalid/off"}) {
    o.expect(cells[cell] > 0, std::string("cell ") + cell + " empty");
  }
  o.expect(cells.size() == 5, "unexpected cell");
  o.expect(mismatches == 0, "label mismatch");
  o.detail << trees << " trees, " << mismatches << " mismatches;";
  for (const auto& [cell, count] : cells) o.detail << " " << cell << "=" << count;
}

policy::PolicyParams warm_policy() {
  const auto book = harness::generate_goals(24, harness::TierMix{}, 11);
  training::SftConfig cfg;
  cfg.epochs = 16;
  cfg.rngSeed = 11;
  return training::sft_train(policy::zero_params(), harness::witness_corpus(book, "Book"), cfg).params;
}

// 5. Kernel/search soundness.
void soundness(Outcome& o) {
  const std::vector<std::string> tiny{"S(0) = S(0)",
                                      "add(S(0),0) = S(0)",
                                      "add(a,0) = a",
                                      "a = add(a,0)",
                                      "S(add(b,0)) = S(b)",
                                      "add(a,b) = add(b,a)",
                                      "add(0,S(0)) = S(0)",
                                      "add(S(0),S(0)) = S(S(0))",
                                      "mul(a,0) = 0",
                                      "add(c,0) = add(0,c)",
                                      "add(a,b) = mul(a,b)",
                                      "S(0) = 0",
                                      "a = b",
                                      "add(a,0) = b",
                                      "mul(a,S(0)) = a",
                                      "S(a) = a",
                                      "add(add(a,0),0) = a",
                                      "0 = mul(b,0)",
                                      "S(S(0)) = add(S(0),0)",
                                      "mul(0,a) = 0"};
  const int depth = 3;
  std::vector<policy::PolicyParams> policies{policy::zero_params(), warm_policy()};
  int proofs = 0;
  int searches = 0;
  for (const auto& text : tiny) {
    const auto goal = parse(text);
    const bool provable = search::exhaustive_oracle(goal, depth);
    for (const auto& params : policies) {
      for (std::uint64_t seed = 0; seed < 8; ++seed) {
        search::SearchConfig cfg;
        cfg.rngSeed = seed;
        cfg.maxDepth = depth;
        const auto tree = search::best_first_search(params, goal, cfg);
        ++searches;
        if (tree.outcome != search::Outcome::Proved) continue;
        ++proofs;
        const auto path = search::proof_path(tree);
        std::vector<kernel::Tactic> tactics;
        if (path) {
          for (const auto& step : *path) tactics.push_back(step.second);
        }
        o.expect(path.has_value() && kernel::replay(goal, tactics), "replay " + text);
        o.expect(provable, "oracle rejects proved " + text);
      }
    }
  }
  o.expect(proofs > 0, "no proofs found");
  o.detail << proofs << " proofs in " << searches << " searches, all replayed and oracle-consistent";
}

harness::RunConfig ei_config(std::uint64_t seed) {
  harness::RunConfig c;
  c.seed = seed;
  c.benchmarkCount = 200;
  c.tierMix = harness::TierMix{1.0, 1.0, 0.0};
  c.passN = 1;
  c.eiRounds = 2;
  return c;
}

// Checkpoints kept for the monotonicity check, with their Heldout goals.
struct Checkpoint {
  std::string name;
  policy::PolicyParams params;
  std::vector<kernel::ProofState> heldout;
  std::uint64_t seed = 0;
};

// 6. EI improvement.
void ei_improvement(Outcome& o, std::vector<Checkpoint>& keep) {
  for (std::uint64_t seed : kPinnedSeeds) {
    const auto result = harness::run_expert_iteration(ei_config(seed));
    const double base = result.baseEval.pass1;
    const double r1 = result.reports[0].pass1;
    const double r2 = result.reports[1].pass1;
    const bool ok = r1 > base && (r1 - base) > (r2 - r1);
    o.expect(ok, "seed " + std::to_string(seed));
    o.detail << "seed " << seed << ": " << base << " -> " << r1 << " -> " << r2 << "; ";
    const auto heldout = result.suite.states(harness::Split::Heldout);
    keep.push_back({"ei seed " + std::to_string(seed) + " base", result.base, heldout, seed});
    keep.push_back({"ei seed " + std::to_string(seed) + " round 1", result.rounds[0].final, heldout, seed});
    keep.push_back({"ei seed " + std::to_string(seed) + " round 2", result.rounds[1].final, heldout, seed});
  }
}

struct Efficiency {
  double medianExpansions = 0.0;
  double stagnantPerSolved = 0.0;
  int solved = 0;
};

// Eight seeded searches per Heldout goal, labeled; statistics over the solved ones.
Efficiency efficiency(const policy::PolicyParams& params, const std::vector<kernel::ProofState>& goals) {
  std::vector<std::vector<int>> expansions(goals.size());
  std::vector<long> stagnant(goals.size(), 0);
  harness::parallel_for(goals.size(), 4, [&](std::size_t g) {
    for (std::uint64_t j = 0; j < 8; ++j) {
      search::SearchConfig cfg;
      cfg.rngSeed = harness::goal_seed(777 + j, goals[g]);
      const auto tree = curation::label_tree(search::best_first_search(params, goals[g], cfg));
      if (tree.outcome != search::Outcome::Proved) continue;
      expansions[g].push_back(tree.expansionsUsed);
      for (const auto& e : tree.edges) stagnant[g] += e.utility == search::Utility::Stagnant;
    }
  });
  std::vector<int> all;
  long stagnantTotal = 0;
  for (std::size_t g = 0; g < goals.size(); ++g) {
    all.insert(all.end(), expansions[g].begin(), expansions[g].end());
    stagnantTotal += stagnant[g];
  }
  Efficiency e;
  e.solved = static_cast<int>(all.size());
  e.medianExpansions = median(all);
  e.stagnantPerSolved = all.empty() ? 0.0 : static_cast<double>(stagnantTotal) / static_cast<double>(all.size());
  return e;
}

// 7. Preference utility.
void preference_utility(Outcome& o, std::vector<Checkpoint>& keep) {
  for (std::uint64_t seed : kPinnedSeeds) {
    auto cfg = ei_config(seed);
    cfg.eiRounds = 1;
    cfg.dpo = training::DpoConfig{};
    cfg.dpo->method = training::Method::PWUAPO;
    const auto result = harness::run_expert_iteration(cfg);
    const auto heldout = result.suite.states(harness::Split::Heldout);
    const auto& round = result.rounds[0];
    const auto before = efficiency(round.postSft, heldout);
    const auto after = efficiency(round.final, heldout);
    const bool ok = before.solved > 0 && after.solved > 0 && after.medianExpansions <= before.medianExpansions &&
                    after.stagnantPerSolved < before.stagnantPerSolved;
    o.expect(ok, "seed " + std::to_string(seed));
    o.detail << "seed " << seed << ": median expansions " << before.medianExpansions << " -> "
             << after.medianExpansions << ", stagnant per solved " << before.stagnantPerSolved << " -> "
             << after.stagnantPerSolved << " (" << round.pairs.size() << " pairs); ";
    keep.push_back({"pw-uapo seed " + std::to_string(seed) + " post-sft", round.postSft, heldout, seed});
    keep.push_back({"pw-uapo seed " + std::to_string(seed) + " final", round.final, heldout, seed});
  }
}

// 8. Pass@n monotonicity.
void monotonicity(Outcome& o, const std::vector<Checkpoint>& checkpoints) {
  o.expect(!checkpoints.empty(), "no checkpoints");
  for (const auto& c : checkpoints) {
    harness::EvalOptions e;
    e.n = 32;
    e.baseSeed = derive_seed(c.seed, 999);
    e.workers = 4;
    const auto report = harness::evaluate_pass_at_n(c.params, c.heldout, e);
    double previous = -1.0;
    bool ok = true;
    o.detail << c.name << ":";
    for (int n : {1, 4, 8, 32}) {
      const double v = report.pass_at(n);
      ok = ok && v >= previous;
      previous = v;
      o.detail << " " << v;
    }
    o.detail << "; ";
    o.expect(ok, c.name);
  }
}

int dispatch(const std::vector<std::string>& args, std::string* out = nullptr) {
  std::vector<const char*> argv{"stepprover"};
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream sout, serr;
  const int code = cli::cli_dispatch(static_cast<int>(argv.size()), argv.data(), sout, serr);
  if (out) *out = sout.str();
  return code;
}

std::map<std::string, std::string> directory_bytes(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file()) out[fs::relative(entry.path(), dir).string()] = io::read_text(entry.path());
  }
  return out;
}

// 9. Determinism of full `ei` runs.
void determinism(Outcome& o) {
  const auto root = fs::temp_directory_path() / "stepprover-acceptance-determinism";
  fs::remove_all(root);
  const auto dir = root / "run";
  const std::vector<std::string> args{"ei",       "--out-dir", dir.string(), "--seed",   "4",  "--count",
                                      "80",       "--rounds",  "2",          "--n",      "4",  "--method",
                                      "pw-uapo",  "--workers", "3"};
  const int first = dispatch(args);
  o.expect(first == 0, "first run exit " + std::to_string(first));
  fs::rename(dir, root / "first");
  const int second = dispatch(args);
  o.expect(second == 0, "second run exit " + std::to_string(second));
  const auto a = directory_bytes(root / "first");
  const auto b = directory_bytes(dir);
  int checkpoints = 0;
  int reports = 0;
  for (const auto& [name, _] : a) {
    checkpoints += name.ends_with(".ckpt");
    reports += name.ends_with("report.json");
  }
  o.expect(checkpoints > 0 && reports == 2, "missing artifacts");
  o.expect(a == b, "files differ");
  o.detail << a.size() << " files compared (" << checkpoints << " checkpoints, " << reports << " round reports), "
           << (a == b ? "identical" : "different");
  fs::remove_all(root);
}

// 10. Ablation harness.
void ablation(Outcome& o) {
  const auto root = fs::temp_directory_path() / "stepprover-acceptance-ablation";
  fs::remove_all(root);
  std::string out;
  const int code = dispatch({"ablate-tau", "1.00", "1.08", "2.42", "--seed", "1", "--out", (root / "tau.csv").string()},
                            &out);
  o.expect(code == 0, "exit " + std::to_string(code));
  std::vector<std::string> lines;
  std::istringstream in(code == 0 ? io::read_text(root / "tau.csv") : "");
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  o.expect(lines.size() == 4 && lines[0] == "tau,pass1,passN", "CSV shape");
  for (std::size_t i = 1; i < lines.size(); ++i) {
    o.expect(std::count(lines[i].begin(), lines[i].end(), ',') == 2, "row " + std::to_string(i));
    o.detail << lines[i] << "; ";
  }
  fs::remove_all(root);
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<void(Outcome&)> run;
  };
  std::vector<Checkpoint> checkpoints;
  const std::vector<Criterion> criteria{
      {1, "gradient fidelity", gradient_fidelity},
      {2, "identity anchors", identity_anchors},
      {3, "reduction identity", reduction_identity},
      {4, "labeling oracle", labeling_oracle},
      {5, "kernel/search soundness", soundness},
      {6, "EI improvement", [&](Outcome& o) { ei_improvement(o, checkpoints); }},
      {7, "preference utility", [&](Outcome& o) { preference_utility(o, checkpoints); }},
      {8, "Pass@n monotonicity", [&](Outcome& o) { monotonicity(o, checkpoints); }},
      {9, "determinism", determinism},
      {10, "ablation harness", ablation},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      c.run(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << "exception: " << e.what();
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failures += !o.pass;
    std::printf("criterion %d (%s): %s  %.1fs  %s\n", c.id, c.name, o.pass ? "PASS" : "FAIL", seconds,
                o.detail.str().c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
