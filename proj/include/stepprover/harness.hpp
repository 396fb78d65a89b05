#pragma once

// Operational layer: toy benchmark generator, Pass@n evaluation with seeded
// restarts, the expert-iteration driver and the tau ablation runner.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stepprover/curation.hpp"
#include "stepprover/kernel.hpp"
#include "stepprover/policy.hpp"
#include "stepprover/search.hpp"
#include "stepprover/training.hpp"

namespace stepprover::harness {

enum class Tier : std::uint8_t { Easy, Medium, Hard };
enum class Split : std::uint8_t { Train, Heldout };

std::string_view to_string(Tier tier);
std::string_view to_string(Split split);
Tier parse_tier(std::string_view text);
Split parse_split(std::string_view text);

struct BenchmarkGoal {
  kernel::ProofState goal;
  Tier tier = Tier::Easy;
  Split split = Split::Train;
  std::vector<kernel::Tactic> witness;  // construction-time proof
};

struct BenchmarkSuite {
  std::vector<BenchmarkGoal> goals;
  std::uint64_t generatorSeed = 0;

  std::vector<kernel::ProofState> states(Split split) const;
};

struct TierMix {
  double easy = 1.0;
  double medium = 1.0;
  double hard = 0.0;
};

// Depth passed to the exhaustive oracle when validating a generated goal of
// this tier; 0 means the witness replay is the only check.
int oracle_depth_cap(Tier tier, std::size_t witnessLength);

// Distinct goals drawn from the tier families; `exclude` holds serialized
// goals that must not be produced. Every goal replays its witness and,
// where the cap allows, passes the exhaustive oracle.
std::vector<BenchmarkGoal> generate_goals(int count, const TierMix& mix, std::uint64_t seed,
                                          std::span<const std::string> exclude = {});

BenchmarkSuite generate_benchmark(int count, const TierMix& mix, std::uint64_t seed, double heldoutFraction = 0.3);

// Witness proofs of the goals as (state, tokens) examples.
std::vector<curation::SftExample> witness_corpus(std::span<const BenchmarkGoal> goals, const std::string& sourceTag);

struct AttemptDetail {
  bool proved = false;
  int expansionsUsed = 0;
  int stagnantTransitions = 0;  // u=1 edges in the labeled tree
  int transitions = 0;
};

struct GoalDetail {
  std::string goal;
  std::optional<int> firstSuccess;  // attempt index
  std::vector<AttemptDetail> attempts;
};

struct PassReport {
  int n = 1;
  double pass1 = 0.0;
  double passN = 0.0;
  std::vector<GoalDetail> goals;

  // Fraction proved within the first m attempts (m <= n).
  double pass_at(int m) const;
};

struct EvalOptions {
  int n = 1;
  int perSearchBudget = 400;
  std::uint64_t baseSeed = 0;
  // One search with n * perSearchBudget instead of n restarts.
  bool accumulateBudget = false;
  search::SearchConfig search;  // nodeBudget and rngSeed are overridden per attempt
  int workers = 1;
};

// Attempt j of a goal searches with seed derive_seed(baseSeed + j, hash(goal)),
// so results do not depend on goal order. Attempts stop at the first success.
PassReport evaluate_pass_at_n(const policy::PolicyParams& params, std::span<const kernel::ProofState> goals,
                              const EvalOptions& options);

std::uint64_t goal_seed(std::uint64_t attemptSeed, const kernel::ProofState& goal);

// Maps fn over [0, count) on a worker pool; results are stored by index so
// output is identical for any worker count.
void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& fn);

struct RunConfig {
  search::SearchConfig search;
  training::SftConfig sft{.epochs = 16};
  std::optional<training::DpoConfig> dpo;  // unset: SFT-only expert iteration
  training::PreferenceTrainOptions pref;
  int losersPerWinner = 4;
  std::optional<double> loserClassBias;  // see curation::PreferenceOptions
  int eiRounds = 2;
  int passN = 32;
  int perSearchBudget = 400;
  bool accumulateBudget = false;
  std::uint64_t seed = 0;
  int benchmarkCount = 200;
  TierMix tierMix{};
  double heldoutFraction = 0.3;
  int bookGoals = 24;  // warm-start corpus size; 0 disables
  int workers = 1;

  void validate() const;
};

struct EiRoundReport {
  int roundIndex = 0;
  int theoremsAttempted = 0;
  int theoremsProved = 0;
  int newSftExamples = 0;
  int newPreferencePairs = 0;
  int sftPoolSize = 0;
  double pass1 = 0.0;
  double passN = 0.0;
  std::vector<curation::CorpusStats> corpusPplBySource;
};

struct RoundArtifacts {
  policy::PolicyParams postSft;
  policy::PolicyParams final;  // after preference training (== postSft without it)
  std::vector<search::SearchTree> trees;  // labeled Train searches of the round
  std::vector<curation::PreferencePair> pairs;
  std::vector<curation::SftExample> sftPool;  // cumulative, deduplicated
  PassReport eval;
};

struct EiResult {
  BenchmarkSuite suite;
  std::vector<curation::SftExample> bookCorpus;
  policy::PolicyParams base;  // zero weights warm-started on the book corpus
  PassReport baseEval;
  std::vector<EiRoundReport> reports;
  std::vector<RoundArtifacts> rounds;
  policy::PolicyParams finalParams;
};

using RoundCallback = std::function<void(const EiRoundReport&, const RoundArtifacts&)>;

// Throws TrainingDiagnostic on cold-start failure.
EiResult run_expert_iteration(const RunConfig& config, const RoundCallback& onRound = {});

struct AblationRow {
  double tau = 0.0;
  double pass1 = 0.0;
  double passN = 0.0;
};

// Full pipeline per tau value with every seed held fixed.
std::vector<AblationRow> run_tau_ablation(const RunConfig& config, std::span<const double> tauValues);
std::string ablation_csv(std::span<const AblationRow> rows);

}  // namespace stepprover::harness
