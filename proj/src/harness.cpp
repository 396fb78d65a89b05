#include "stepprover/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_set>

#include "stepprover/errors.hpp"
#include "stepprover/rng.hpp"

namespace stepprover::harness {

namespace {

using kernel::Direction;
using kernel::ProofState;
using kernel::RuleId;
using kernel::Tactic;
using kernel::Term;

constexpr double kMirrorProbability = 0.3;
constexpr int kMaxSampleAttemptsPerGoal = 400;

std::uint64_t text_hash(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : text) h = (h ^ static_cast<std::uint8_t>(c)) * 0x100000001b3ULL;
  return h;
}

// Base terms t for the Easy/Medium families.
Term base_term(std::size_t index) {
  static const char* kVars[] = {"a", "b", "c", "d", "e"};
  if (index < 10) return Term::numeral(static_cast<int>(index));
  if (index < 15) return Term::var(kVars[index - 10]);
  return Term::succ(Term::var(kVars[index - 15]));
}
constexpr std::size_t kBaseTermCount = 20;

Term variable(std::size_t index) {
  static const char* kVars[] = {"a", "b", "c", "d", "e"};
  return Term::var(kVars[index % 5]);
}

std::string zeros(int n) { return std::string(static_cast<std::size_t>(n), '0'); }

struct Draft {
  Term main;   // side that gets rewritten
  Term other;  // already in normal form
  std::vector<Tactic> witness;  // paths relative to the main side, without the leading side digit
};

// Mirrored goals put the redex on the right; their witness swaps the sides
// first so every rewrite happens on the left.
BenchmarkGoal finish(Draft draft, Tier tier, bool mirror) {
  BenchmarkGoal goal;
  goal.tier = tier;
  goal.goal = mirror ? ProofState{std::move(draft.other), std::move(draft.main), false}
                     : ProofState{std::move(draft.main), std::move(draft.other), false};
  for (auto& tactic : draft.witness) {
    if (tactic.kind == kernel::TacticKind::Rw) tactic.path.insert(tactic.path.begin(), '0');
  }
  if (mirror) draft.witness.insert(draft.witness.begin(), Tactic::sym());
  draft.witness.push_back(Tactic::rfl());
  goal.witness = std::move(draft.witness);
  return goal;
}

Tactic rw(RuleId rule, std::string path) { return Tactic::rw(rule, Direction::L2R, std::move(path)); }

// Easy: add(t,0)=t, S^j(add(t,0))=S^j(t), add(t,S(0))=S(t).
Draft easy_draft(Rng& rng) {
  const Term t = base_term(rng.below(kBaseTermCount));
  switch (rng.below(3)) {
    case 0:
      return {Term::add(t, Term::zero()), t, {rw(RuleId::R1, "")}};
    case 1: {
      const int j = 1 + static_cast<int>(rng.below(3));
      return {Term::numeral(j, Term::add(t, Term::zero())), Term::numeral(j, t), {rw(RuleId::R1, zeros(j))}};
    }
    default:
      return {Term::add(t, Term::numeral(1)), Term::succ(t), {rw(RuleId::R2, ""), rw(RuleId::R1, "0")}};
  }
}

// Medium: add(t,S^n(0)) = S^n(t) by n applications of R2 and one of R1.
Draft medium_draft(Rng& rng) {
  const Term t = base_term(rng.below(kBaseTermCount));
  const int n = 2 + static_cast<int>(rng.below(5));
  Draft draft{Term::add(t, Term::numeral(n)), Term::numeral(n, t), {}};
  for (int i = 0; i < n; ++i) draft.witness.push_back(rw(RuleId::R2, zeros(i)));
  draft.witness.push_back(rw(RuleId::R1, zeros(n)));
  return draft;
}

// Hard: commute first (R5) or reassociate (R6), then evaluate a numeral sum.
Draft hard_draft(Rng& rng) {
  const Term v = variable(rng.below(5));
  if (rng.below(2) == 0) {
    const int m = 1 + static_cast<int>(rng.below(6));
    Draft draft{Term::add(Term::numeral(m), v), Term::numeral(m, v), {rw(RuleId::R5, "")}};
    for (int i = 0; i < m; ++i) draft.witness.push_back(rw(RuleId::R2, zeros(i)));
    draft.witness.push_back(rw(RuleId::R1, zeros(m)));
    return draft;
  }
  const int m = 1 + static_cast<int>(rng.below(4));
  const int n = 1 + static_cast<int>(rng.below(5));
  Draft draft{Term::add(Term::add(v, Term::numeral(m)), Term::numeral(n)), Term::add(v, Term::numeral(m + n)),
              {rw(RuleId::R6, "")}};
  for (int i = 0; i < n; ++i) draft.witness.push_back(rw(RuleId::R2, "1" + zeros(i)));
  draft.witness.push_back(rw(RuleId::R1, "1" + zeros(n)));
  return draft;
}

Tier pick_tier(const TierMix& mix, Rng& rng) {
  const double total = mix.easy + mix.medium + mix.hard;
  const double u = rng.uniform() * total;
  if (u < mix.easy) return Tier::Easy;
  if (u < mix.easy + mix.medium) return Tier::Medium;
  return Tier::Hard;
}

}  // namespace

std::string_view to_string(Tier tier) {
  switch (tier) {
    case Tier::Easy:
      return "easy";
    case Tier::Medium:
      return "medium";
    case Tier::Hard:
      return "hard";
  }
  return "unknown";
}

std::string_view to_string(Split split) { return split == Split::Train ? "train" : "heldout"; }

Tier parse_tier(std::string_view text) {
  for (Tier t : {Tier::Easy, Tier::Medium, Tier::Hard}) {
    if (text == to_string(t)) return t;
  }
  throw PreconditionError("unknown tier '" + std::string(text) + "'");
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::Train;
  if (text == "heldout") return Split::Heldout;
  throw PreconditionError("unknown split '" + std::string(text) + "'");
}

std::vector<ProofState> BenchmarkSuite::states(Split split) const {
  std::vector<ProofState> out;
  for (const auto& g : goals) {
    if (g.split == split) out.push_back(g.goal);
  }
  return out;
}

int oracle_depth_cap(Tier tier, std::size_t witnessLength) {
  switch (tier) {
    case Tier::Easy:
      return 3;
    case Tier::Medium:
      // Exhaustive enumeration explodes past depth 4 (R1 right-to-left
      // applies at every position), so longer sums rely on witness replay.
      return witnessLength <= 4 ? 4 : 0;
    case Tier::Hard:
      return 0;
  }
  return 0;
}

std::vector<BenchmarkGoal> generate_goals(int count, const TierMix& mix, std::uint64_t seed,
                                          std::span<const std::string> exclude) {
  require(count >= 0, "generate_goals: count must be >= 0");
  require(mix.easy >= 0 && mix.medium >= 0 && mix.hard >= 0 && mix.easy + mix.medium + mix.hard > 0,
          "generate_goals: tier mix weights must be nonnegative with a positive sum");
  Rng rng(seed);
  std::unordered_set<std::string> seen(exclude.begin(), exclude.end());
  std::vector<BenchmarkGoal> out;
  int attempts = 0;
  while (static_cast<int>(out.size()) < count) {
    if (++attempts > kMaxSampleAttemptsPerGoal * std::max(count, 1)) {
      throw PreconditionError("generate_goals: could not find " + std::to_string(count) +
                              " distinct goals for this tier mix");
    }
    const Tier tier = pick_tier(mix, rng);
    Draft draft = tier == Tier::Easy ? easy_draft(rng) : tier == Tier::Medium ? medium_draft(rng) : hard_draft(rng);
    const bool mirror = rng.uniform() < kMirrorProbability;
    BenchmarkGoal goal = finish(std::move(draft), tier, mirror);
    if (!seen.insert(kernel::serialize_state(goal.goal)).second) continue;
    if (!kernel::replay(goal.goal, goal.witness)) {
      throw std::logic_error("generator produced a goal whose witness does not replay: " +
                             kernel::serialize_state(goal.goal));
    }
    const int cap = oracle_depth_cap(tier, goal.witness.size());
    if (cap > 0 && !search::exhaustive_oracle(goal.goal, cap)) {
      throw std::logic_error("generator produced a goal the oracle rejects: " + kernel::serialize_state(goal.goal));
    }
    out.push_back(std::move(goal));
  }
  return out;
}

BenchmarkSuite generate_benchmark(int count, const TierMix& mix, std::uint64_t seed, double heldoutFraction) {
  require(count >= 1, "generate_benchmark: count must be >= 1");
  require(heldoutFraction >= 0.0 && heldoutFraction <= 1.0, "generate_benchmark: heldout fraction must lie in [0,1]");
  BenchmarkSuite suite;
  suite.generatorSeed = seed;
  suite.goals = generate_goals(count, mix, seed);
  std::vector<std::size_t> order(suite.goals.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, 0x5b117));
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  const auto heldout = static_cast<std::size_t>(std::llround(heldoutFraction * static_cast<double>(count)));
  for (std::size_t i = 0; i < order.size(); ++i) {
    suite.goals[order[i]].split = i < heldout ? Split::Heldout : Split::Train;
  }
  return suite;
}

std::vector<curation::SftExample> witness_corpus(std::span<const BenchmarkGoal> goals, const std::string& sourceTag) {
  std::vector<curation::SftExample> out;
  for (const auto& g : goals) {
    ProofState state = g.goal;
    for (const auto& tactic : g.witness) {
      out.push_back(curation::SftExample{kernel::serialize_state(state), policy::tokenize(tactic), sourceTag});
      auto next = kernel::apply_tactic(state, tactic);
      if (!next) throw std::logic_error("witness does not replay: " + kernel::serialize_state(g.goal));
      state = std::move(next).value();
    }
  }
  return out;
}

double PassReport::pass_at(int m) const {
  require(m >= 1 && m <= n, "pass_at: m must lie in [1, n]");
  if (goals.empty()) return 0.0;
  const auto hits = std::count_if(goals.begin(), goals.end(),
                                  [m](const GoalDetail& g) { return g.firstSuccess && *g.firstSuccess < m; });
  return static_cast<double>(hits) / static_cast<double>(goals.size());
}

std::uint64_t goal_seed(std::uint64_t attemptSeed, const ProofState& goal) {
  return derive_seed(attemptSeed, text_hash(kernel::serialize_state(goal)));
}

void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& fn) {
  const auto threads = static_cast<std::size_t>(std::max(1, workers));
  if (threads == 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(threads, count); ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = next++; i < count; i = next++) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

PassReport evaluate_pass_at_n(const policy::PolicyParams& params, std::span<const ProofState> goals,
                              const EvalOptions& options) {
  require(options.n >= 1, "evaluate_pass_at_n: n must be >= 1");
  require(options.perSearchBudget >= 1, "evaluate_pass_at_n: per-search budget must be >= 1");
  PassReport report;
  report.n = options.n;
  report.goals.resize(goals.size());
  parallel_for(goals.size(), options.workers, [&](std::size_t g) {
    GoalDetail& detail = report.goals[g];
    detail.goal = kernel::serialize_state(goals[g]);
    const int attempts = options.accumulateBudget ? 1 : options.n;
    for (int j = 0; j < attempts; ++j) {
      search::SearchConfig cfg = options.search;
      cfg.nodeBudget = options.accumulateBudget ? options.perSearchBudget * options.n : options.perSearchBudget;
      cfg.rngSeed = goal_seed(options.baseSeed + static_cast<std::uint64_t>(j), goals[g]);
      const auto tree = curation::label_tree(search::best_first_search(params, goals[g], cfg));
      AttemptDetail attempt;
      attempt.proved = tree.outcome == search::Outcome::Proved;
      attempt.expansionsUsed = tree.expansionsUsed;
      attempt.transitions = static_cast<int>(tree.edges.size());
      attempt.stagnantTransitions = static_cast<int>(std::count_if(
          tree.edges.begin(), tree.edges.end(), [](const auto& e) { return e.utility == search::Utility::Stagnant; }));
      detail.attempts.push_back(attempt);
      if (attempt.proved) {
        detail.firstSuccess = options.accumulateBudget ? 0 : j;
        break;
      }
    }
  });
  if (options.accumulateBudget) {
    // One pooled search stands in for every n; Pass@1 is still a single
    // plain-budget search.
    EvalOptions single = options;
    single.n = 1;
    single.accumulateBudget = false;
    const PassReport plain = evaluate_pass_at_n(params, goals, single);
    report.pass1 = plain.pass1;
    const auto hits = std::count_if(report.goals.begin(), report.goals.end(),
                                    [](const GoalDetail& g) { return g.firstSuccess.has_value(); });
    report.passN = goals.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(goals.size());
    return report;
  }
  report.pass1 = report.pass_at(1);
  report.passN = report.pass_at(options.n);
  return report;
}

void RunConfig::validate() const {
  search.validate();
  sft.validate();
  if (dpo) dpo->validate();
  require(eiRounds >= 1, "run config: eiRounds must be >= 1");
  require(passN >= 1, "run config: passN must be >= 1");
  require(perSearchBudget >= 1, "run config: perSearchBudget must be >= 1");
  require(losersPerWinner >= 1, "run config: losersPerWinner must be >= 1");
  require(benchmarkCount >= 1, "run config: benchmarkCount must be >= 1");
  require(bookGoals >= 0, "run config: bookGoals must be >= 0");
  require(pref.steps >= 0 && pref.batchSize >= 1 && pref.learningRate > 0.0,
          "run config: preference steps >= 0, batch >= 1, rate > 0");
}

namespace {

void add_to_pool(std::vector<curation::SftExample>& pool, std::set<std::pair<std::string, std::string>>& keys,
                 const std::vector<curation::SftExample>& fresh, int& added) {
  for (const auto& ex : fresh) {
    if (keys.emplace(ex.state, policy::to_text(ex.tokens)).second) {
      pool.push_back(ex);
      ++added;
    }
  }
}

}  // namespace

EiResult run_expert_iteration(const RunConfig& config, const RoundCallback& onRound) {
  config.validate();
  EiResult result;
  result.suite = generate_benchmark(config.benchmarkCount, config.tierMix, derive_seed(config.seed, 1),
                                    config.heldoutFraction);
  std::vector<std::string> taken;
  for (const auto& g : result.suite.goals) taken.push_back(kernel::serialize_state(g.goal));
  const auto bookGoals = generate_goals(config.bookGoals, config.tierMix, derive_seed(config.seed, 2), taken);
  result.bookCorpus = witness_corpus(bookGoals, "Book");

  std::vector<curation::SftExample> pool;
  std::set<std::pair<std::string, std::string>> poolKeys;
  int ignored = 0;
  add_to_pool(pool, poolKeys, result.bookCorpus, ignored);

  policy::PolicyParams params = policy::zero_params();
  params.seed = config.seed;
  if (!pool.empty()) {
    training::SftConfig warm = config.sft;
    warm.rngSeed = derive_seed(config.seed, 3);
    params = training::sft_train(params, pool, warm).params;
  }
  params.versionTag = "base";
  result.base = params;

  const auto train = result.suite.states(Split::Train);
  const auto heldout = result.suite.states(Split::Heldout);
  EvalOptions eval;
  eval.n = config.passN;
  eval.perSearchBudget = config.perSearchBudget;
  eval.baseSeed = derive_seed(config.seed, 999);
  eval.accumulateBudget = config.accumulateBudget;
  eval.search = config.search;
  eval.workers = config.workers;
  result.baseEval = evaluate_pass_at_n(params, heldout, eval);

  for (int round = 1; round <= config.eiRounds; ++round) {
    RoundArtifacts art;
    EiRoundReport report;
    report.roundIndex = round;
    report.theoremsAttempted = static_cast<int>(train.size());

    art.trees.resize(train.size());
    const std::uint64_t searchSeed = derive_seed(config.seed, 100 + static_cast<std::uint64_t>(round));
    parallel_for(train.size(), config.workers, [&](std::size_t i) {
      search::SearchConfig cfg = config.search;
      cfg.rngSeed = goal_seed(searchSeed, train[i]);
      art.trees[i] = curation::label_tree(search::best_first_search(params, train[i], cfg));
    });

    const std::string tag = curation::ei_round_tag(round);
    for (const auto& tree : art.trees) {
      if (tree.outcome != search::Outcome::Proved) continue;
      ++report.theoremsProved;
      add_to_pool(pool, poolKeys, curation::extract_sft(tree, tag), report.newSftExamples);
    }
    if (report.theoremsProved == 0) {
      throw TrainingDiagnostic("expert iteration round " + std::to_string(round) +
                               " proved zero theorems (cold start); add a warm-start corpus or raise the budget");
    }
    report.sftPoolSize = static_cast<int>(pool.size());
    art.sftPool = pool;

    training::SftConfig sft = config.sft;
    sft.rngSeed = derive_seed(config.seed, 200 + static_cast<std::uint64_t>(round));
    art.postSft = training::sft_train(params, pool, sft).params;
    art.postSft.versionTag = tag + "-sft";
    art.final = art.postSft;

    if (config.dpo) {
      curation::PreferenceOptions prefOptions;
      prefOptions.losersPerWinner = config.losersPerWinner;
      prefOptions.includeStagnant = training::uses_stagnant_losers(config.dpo->method);
      prefOptions.loserClassBias = config.loserClassBias;
      Rng pairRng(derive_seed(config.seed, 300 + static_cast<std::uint64_t>(round)));
      for (const auto& tree : art.trees) {
        auto pairs = curation::extract_preferences(tree, art.postSft, prefOptions, pairRng);
        art.pairs.insert(art.pairs.end(), std::make_move_iterator(pairs.begin()), std::make_move_iterator(pairs.end()));
      }
      report.newPreferencePairs = static_cast<int>(art.pairs.size());
      if (!art.pairs.empty() && config.pref.steps > 0) {
        Rng trainRng(derive_seed(config.seed, 400 + static_cast<std::uint64_t>(round)));
        art.final = training::preference_train(art.postSft, art.pairs, *config.dpo, config.pref, trainRng).params;
        art.final.versionTag = tag + "-" + std::string(training::to_string(config.dpo->method));
      }
    }

    art.eval = evaluate_pass_at_n(art.final, heldout, eval);
    report.pass1 = art.eval.pass1;
    report.passN = art.eval.passN;
    report.corpusPplBySource = curation::corpus_ppl_stats(pool, art.final);
    params = art.final;
    if (onRound) onRound(report, art);
    result.reports.push_back(report);
    result.rounds.push_back(std::move(art));
  }
  result.finalParams = params;
  return result;
}

std::vector<AblationRow> run_tau_ablation(const RunConfig& config, std::span<const double> tauValues) {
  require(config.dpo.has_value() && training::is_perplexity_weighted(config.dpo->method),
          "ablate-tau: a perplexity-weighted method (pw-dpo or pw-uapo) must be selected");
  require(!tauValues.empty(), "ablate-tau: need at least one tau value");
  std::vector<AblationRow> rows;
  for (double tau : tauValues) {
    RunConfig cfg = config;
    cfg.dpo->tauWeight = tau;
    const EiResult run = run_expert_iteration(cfg);
    rows.push_back(AblationRow{tau, run.reports.back().pass1, run.reports.back().passN});
  }
  return rows;
}

std::string ablation_csv(std::span<const AblationRow> rows) {
  auto text = [](double v) {
    char buf[32];
    return std::string(buf, std::to_chars(buf, buf + sizeof(buf), v).ptr);
  };
  std::string out = "tau,pass1,passN\n";
  for (const auto& row : rows) out += text(row.tau) + ',' + text(row.pass1) + ',' + text(row.passN) + '\n';
  return out;
}

}  // namespace stepprover::harness
