#include "stepprover/cli.hpp"

#include <algorithm>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "stepprover/errors.hpp"
#include "stepprover/harness.hpp"
#include "stepprover/io.hpp"

namespace stepprover::cli {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr const char* kSeedEnv = "STEPPROVER_SEED";

struct SearchFlags {
  search::SearchConfig config;

  void attach(CLI::App* app) {
    app->add_option("--budget", config.nodeBudget, "Node expansions per search")->capture_default_str();
    app->add_option("--width", config.expansionWidth, "Tactics sampled per expansion")->capture_default_str();
    app->add_option("--temperature", config.samplingTemperature, "Sampling temperature")->capture_default_str();
    app->add_option("--alpha", config.lengthNormAlpha, "Length normalization exponent")->capture_default_str();
    app->add_option("--max-depth", config.maxDepth, "Maximum proof depth")->capture_default_str();
  }
};

struct DpoFlags {
  training::DpoConfig config;
  std::string method = "pw-uapo";

  void attach(CLI::App* app, bool withTau) {
    app->add_option("--beta", config.beta, "DPO beta")->capture_default_str();
    if (withTau) app->add_option("--tau", config.tauWeight, "Token-weight normalizer tau")->capture_default_str();
    app->add_option("--epsilon", config.epsilonWeight, "Token-weight epsilon")->capture_default_str();
    app->add_option("--alpha-weight", config.alphaWeight, "Token-weight exponent")->capture_default_str();
    app->add_option("--delta-min", config.deltaMin, "Token-weight floor")->capture_default_str();
    app->add_option("--delta-max", config.deltaMax, "Token-weight ceiling")->capture_default_str();
  }

  training::DpoConfig resolved() const {
    training::DpoConfig out = config;
    out.method = training::parse_method(method);
    return out;
  }
};

struct SftFlags {
  training::SftConfig config;

  void attach(CLI::App* app) {
    app->add_option("--epochs", config.epochs)->capture_default_str();
    app->add_option("--lr-start", config.learningRateStart)->capture_default_str();
    app->add_option("--lr-end", config.learningRateEnd)->capture_default_str();
    app->add_option("--batch", config.batchSize)->capture_default_str();
  }
};

struct PrefFlags {
  training::PreferenceTrainOptions options;

  void attach(CLI::App* app, const std::string& prefix) {
    app->add_option("--" + prefix + "steps", options.steps)->capture_default_str();
    app->add_option("--" + prefix + "lr", options.learningRate)->capture_default_str();
    app->add_option("--" + prefix + "batch", options.batchSize)->capture_default_str();
  }
};

struct RunFlags {
  harness::RunConfig config;
  SearchFlags search;
  DpoFlags dpo;
  PrefFlags pref;
  std::optional<double> loserClassBias;

  void attach(CLI::App* app, const std::string& defaultMethod, bool withTau) {
    dpo.method = defaultMethod;
    search.attach(app);
    app->add_option("--rounds", config.eiRounds, "Expert-iteration rounds")->capture_default_str();
    app->add_option("--count", config.benchmarkCount, "Benchmark goals (Train + Heldout)")->capture_default_str();
    app->add_option("--heldout-fraction", config.heldoutFraction)->capture_default_str();
    app->add_option("--easy", config.tierMix.easy, "Tier weight")->capture_default_str();
    app->add_option("--medium", config.tierMix.medium, "Tier weight")->capture_default_str();
    app->add_option("--hard", config.tierMix.hard, "Tier weight")->capture_default_str();
    app->add_option("--book-goals", config.bookGoals, "Warm-start witness goals (0 disables)")->capture_default_str();
    app->add_option("--n", config.passN, "Pass@n attempts on Heldout")->capture_default_str();
    app->add_flag("--accumulate-budget", config.accumulateBudget, "One search with n x budget instead of restarts");
    app->add_option("--workers", config.workers, "Search worker threads")->capture_default_str();
    app->add_option("--method", dpo.method, "none|dpo|uapo|pw-dpo|pw-uapo")->capture_default_str();
    app->add_option("--losers-per-winner", config.losersPerWinner)->capture_default_str();
    app->add_option("--loser-class-bias", loserClassBias, "Probability of drawing a stagnant loser");
    app->add_option("--epochs", config.sft.epochs)->capture_default_str();
    app->add_option("--lr-start", config.sft.learningRateStart)->capture_default_str();
    app->add_option("--lr-end", config.sft.learningRateEnd)->capture_default_str();
    app->add_option("--batch", config.sft.batchSize)->capture_default_str();
    pref.options = config.pref;
    pref.attach(app, "pref-");
    dpo.attach(app, withTau);
  }

  harness::RunConfig resolved(std::uint64_t seed) const {
    harness::RunConfig out = config;
    out.seed = seed;
    out.search = search.config;
    out.perSearchBudget = search.config.nodeBudget;
    out.pref = pref.options;
    out.loserClassBias = loserClassBias;
    if (dpo.method == "none") {
      out.dpo.reset();
    } else {
      out.dpo = dpo.resolved();
    }
    out.validate();
    return out;
  }
};

json search_config_json(const search::SearchConfig& c) {
  return json{{"expansionWidth", c.expansionWidth}, {"samplingTemperature", c.samplingTemperature},
              {"lengthNormAlpha", c.lengthNormAlpha}, {"nodeBudget", c.nodeBudget}, {"maxDepth", c.maxDepth}};
}

json run_config_json(const harness::RunConfig& c) {
  json j{{"seed", c.seed},
         {"search", search_config_json(c.search)},
         {"sft",
          {{"epochs", c.sft.epochs},
           {"learningRateStart", c.sft.learningRateStart},
           {"learningRateEnd", c.sft.learningRateEnd},
           {"batchSize", c.sft.batchSize}}},
         {"eiRounds", c.eiRounds},
         {"passN", c.passN},
         {"perSearchBudget", c.perSearchBudget},
         {"accumulateBudget", c.accumulateBudget},
         {"benchmarkCount", c.benchmarkCount},
         {"tierMix", {{"easy", c.tierMix.easy}, {"medium", c.tierMix.medium}, {"hard", c.tierMix.hard}}},
         {"heldoutFraction", c.heldoutFraction},
         {"bookGoals", c.bookGoals},
         {"losersPerWinner", c.losersPerWinner},
         {"loserClassBias", c.loserClassBias ? json(*c.loserClassBias) : json(nullptr)}};
  if (c.dpo) {
    j["dpo"] = {{"method", training::to_string(c.dpo->method)},
                {"beta", c.dpo->beta},
                {"tauWeight", c.dpo->tauWeight},
                {"epsilonWeight", c.dpo->epsilonWeight},
                {"alphaWeight", c.dpo->alphaWeight},
                {"deltaMin", c.dpo->deltaMin},
                {"deltaMax", c.dpo->deltaMax}};
    j["pref"] = {{"steps", c.pref.steps}, {"learningRate", c.pref.learningRate}, {"batchSize", c.pref.batchSize}};
  } else {
    j["dpo"] = nullptr;
  }
  return j;
}

policy::PolicyParams checkpoint_or_zero(const std::string& path) {
  return path.empty() ? policy::zero_params() : io::load_checkpoint(path);
}

// Everything a single invocation binds its options to. Rebuilt for the
// second parse when a --config file supplies defaults.
struct Invocation {
  std::uint64_t seed = 0;
  std::string configPath;

  // gen-bench
  int count = 200;
  harness::TierMix mix{};
  double heldoutFraction = 0.3;
  std::string outDir;

  // shared file arguments
  std::string goalsPath, tracePath, outPath, checkpointPath, corpusPath, pairsPath, manifestPath, curvePath;
  std::string sftOut, prefOut, refCheckpoint;

  SearchFlags search;
  int workers = 1;

  // extract
  std::string tag = curation::ei_round_tag(1);
  std::string extractMethod = "pw-uapo";
  int losersPerWinner = 4;
  std::optional<double> loserClassBias;

  double threshold = 5.0;
  SftFlags sft;
  DpoFlags dpo;
  PrefFlags pref;

  // eval
  int n = 1;
  bool accumulate = false;

  RunFlags run;
  std::vector<double> taus;
};

void add_common(CLI::App* app, Invocation& inv) {
  app->add_option("--config", inv.configPath, "Flat key = value file; command-line flags win");
  app->add_option("--seed", inv.seed, "Global seed")->envname(kSeedEnv)->capture_default_str();
}

std::unique_ptr<CLI::App> build_app(Invocation& inv) {
  auto app = std::make_unique<CLI::App>("Step-level prover toolkit over the MiniCalc rewriting kernel", "stepprover");
  app->require_subcommand(1, 1);
  app->fallthrough(false);

  auto* gen = app->add_subcommand("gen-bench", "Generate a benchmark suite (train.goals, heldout.goals, suite.jsonl)");
  add_common(gen, inv);
  gen->add_option("--count", inv.count)->capture_default_str();
  gen->add_option("--easy", inv.mix.easy)->capture_default_str();
  gen->add_option("--medium", inv.mix.medium)->capture_default_str();
  gen->add_option("--hard", inv.mix.hard)->capture_default_str();
  gen->add_option("--heldout-fraction", inv.heldoutFraction)->capture_default_str();
  gen->add_option("--out-dir", inv.outDir)->required();

  auto* srch = app->add_subcommand("search", "Best-first search on every goal; writes a trace file");
  add_common(srch, inv);
  srch->add_option("--goals", inv.goalsPath)->required();
  srch->add_option("--checkpoint", inv.checkpointPath, "Policy weights (zero weights if omitted)");
  srch->add_option("--out", inv.outPath)->required();
  srch->add_option("--workers", inv.workers)->capture_default_str();
  inv.search.attach(srch);

  auto* label = app->add_subcommand("label", "Assign utilities to every transition of a trace");
  add_common(label, inv);
  label->add_option("--trace", inv.tracePath)->required();
  label->add_option("--out", inv.outPath)->required();

  auto* extract = app->add_subcommand("extract", "SFT examples and preference pairs from a labeled trace");
  add_common(extract, inv);
  extract->add_option("--trace", inv.tracePath)->required();
  extract->add_option("--sft-out", inv.sftOut);
  extract->add_option("--pref-out", inv.prefOut);
  extract->add_option("--ref-checkpoint", inv.refCheckpoint, "Reference policy for frozen log-probs (zero if omitted)");
  extract->add_option("--tag", inv.tag, "Source tag for SFT examples")->capture_default_str();
  extract->add_option("--method", inv.extractMethod, "Loser classes follow the method: dpo|pw-dpo invalid only")
      ->capture_default_str();
  extract->add_option("--losers-per-winner", inv.losersPerWinner)->capture_default_str();
  extract->add_option("--loser-class-bias", inv.loserClassBias);

  auto* stats = app->add_subcommand("ppl-stats", "Per-source mean sequence perplexity (CSV) and pair median token PPL");
  add_common(stats, inv);
  stats->add_option("--corpus", inv.corpusPath);
  stats->add_option("--pairs", inv.pairsPath, "Print the median reference token perplexity of these pairs");
  stats->add_option("--checkpoint", inv.checkpointPath);
  stats->add_option("--out", inv.outPath);

  auto* filter = app->add_subcommand("ppl-filter", "Keep corpus examples with perplexity below a threshold");
  add_common(filter, inv);
  filter->add_option("--corpus", inv.corpusPath)->required();
  filter->add_option("--checkpoint", inv.checkpointPath);
  filter->add_option("--threshold", inv.threshold)->capture_default_str();
  filter->add_option("--out", inv.outPath)->required();

  auto* sft = app->add_subcommand("sft", "Supervised fine-tuning on an SFT corpus");
  add_common(sft, inv);
  sft->add_option("--corpus", inv.corpusPath)->required();
  sft->add_option("--checkpoint", inv.checkpointPath, "Initial weights (zero if omitted)");
  sft->add_option("--out", inv.outPath)->required();
  sft->add_option("--loss-csv", inv.curvePath);
  sft->add_option("--manifest", inv.manifestPath);
  inv.sft.attach(sft);

  auto* pref = app->add_subcommand("pref-train", "Preference optimization on a pair file");
  add_common(pref, inv);
  pref->add_option("--pairs", inv.pairsPath)->required();
  pref->add_option("--checkpoint", inv.checkpointPath, "Initial weights (zero if omitted)");
  pref->add_option("--out", inv.outPath)->required();
  pref->add_option("--method", inv.dpo.method, "dpo|uapo|pw-dpo|pw-uapo")->required();
  pref->add_option("--curve-csv", inv.curvePath);
  pref->add_option("--manifest", inv.manifestPath);
  inv.dpo.attach(pref, true);
  inv.pref.attach(pref, "");

  auto* ei = app->add_subcommand("ei", "Expert iteration: search, label, SFT, optional preference stage, evaluate");
  add_common(ei, inv);
  ei->add_option("--out-dir", inv.outDir)->required();
  inv.run.attach(ei, "none", true);

  auto* eval = app->add_subcommand("eval", "Pass@1 and Pass@n of a checkpoint on a goal file");
  add_common(eval, inv);
  eval->add_option("--goals", inv.goalsPath)->required();
  eval->add_option("--checkpoint", inv.checkpointPath);
  eval->add_option("--n", inv.n)->capture_default_str();
  eval->add_flag("--accumulate-budget", inv.accumulate, "One search with n x budget instead of n restarts");
  eval->add_option("--workers", inv.workers)->capture_default_str();
  eval->add_option("--out", inv.outPath, "Per-goal detail (JSON)");
  inv.search.attach(eval);

  auto* ablate = app->add_subcommand("ablate-tau", "Full pipeline once per tau value; CSV rows tau,pass1,passN");
  add_common(ablate, inv);
  ablate->add_option("taus", inv.taus, "Token-weight tau values")->required();
  ablate->add_option("--out", inv.outPath, "CSV path (always echoed to stdout)");
  inv.run.attach(ablate, "pw-uapo", false);

  return app;
}

void write_manifest(const std::string& path, json config, const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs) {
  json files = json::object();
  for (const auto& f : inputs) files["inputs"][f] = io::file_digest(f);
  for (const auto& f : outputs) files["outputs"][f] = io::file_digest(f);
  json j{{"config", std::move(config)}, {"digests", files}, {"digestAlgorithm", "fnv1a64"}};
  io::write_text(path, j.dump(2) + "\n");
}

int run_gen_bench(Invocation& inv, std::ostream& out) {
  const auto suite = harness::generate_benchmark(inv.count, inv.mix, inv.seed, inv.heldoutFraction);
  const fs::path dir(inv.outDir);
  io::write_text(dir / "train.goals", io::goals_text(suite.states(harness::Split::Train)));
  io::write_text(dir / "heldout.goals", io::goals_text(suite.states(harness::Split::Heldout)));
  io::write_text(dir / "suite.jsonl", io::suite_jsonl(suite));
  out << "wrote " << suite.goals.size() << " goals to " << dir.string() << "\n";
  return 0;
}

int run_search(Invocation& inv, std::ostream& out) {
  const auto goals = io::parse_goals(io::read_text(inv.goalsPath));
  const auto params = checkpoint_or_zero(inv.checkpointPath);
  inv.search.config.validate();
  std::vector<search::SearchTree> trees(goals.size());
  harness::parallel_for(goals.size(), inv.workers, [&](std::size_t i) {
    search::SearchConfig cfg = inv.search.config;
    cfg.rngSeed = harness::goal_seed(inv.seed, goals[i]);
    trees[i] = search::best_first_search(params, goals[i], cfg);
  });
  io::write_text(inv.outPath, io::trace_jsonl(trees));
  const auto proved = std::count_if(trees.begin(), trees.end(),
                                    [](const auto& t) { return t.outcome == search::Outcome::Proved; });
  out << "proved " << proved << "/" << trees.size() << "\n";
  return 0;
}

int run_label(Invocation& inv, std::ostream& out) {
  auto trees = io::parse_trace_jsonl(io::read_text(inv.tracePath));
  for (auto& t : trees) t = curation::label_tree(std::move(t));
  io::write_text(inv.outPath, io::trace_jsonl(trees));
  out << "labeled " << trees.size() << " trees\n";
  return 0;
}

int run_extract(Invocation& inv, std::ostream& out) {
  require(!inv.sftOut.empty() || !inv.prefOut.empty(), "extract: give --sft-out and/or --pref-out");
  const auto trees = io::parse_trace_jsonl(io::read_text(inv.tracePath));
  for (const auto& t : trees) {
    for (const auto& e : t.edges) {
      require(e.utility != search::Utility::Unlabeled, "extract: trace is not labeled (run `label` first)");
    }
  }
  const auto ref = checkpoint_or_zero(inv.refCheckpoint);
  if (!inv.sftOut.empty()) {
    std::vector<curation::SftExample> corpus;
    for (const auto& t : trees) {
      auto part = curation::extract_sft(t, inv.tag);
      corpus.insert(corpus.end(), part.begin(), part.end());
    }
    io::write_text(inv.sftOut, io::sft_jsonl(corpus, ref));
    out << "sft examples " << corpus.size() << "\n";
  }
  if (!inv.prefOut.empty()) {
    curation::PreferenceOptions options;
    options.losersPerWinner = inv.losersPerWinner;
    options.includeStagnant = training::uses_stagnant_losers(training::parse_method(inv.extractMethod));
    options.loserClassBias = inv.loserClassBias;
    Rng rng(inv.seed);
    std::vector<curation::PreferencePair> pairs;
    for (const auto& t : trees) {
      auto part = curation::extract_preferences(t, ref, options, rng);
      pairs.insert(pairs.end(), part.begin(), part.end());
    }
    io::write_text(inv.prefOut, io::preference_jsonl(pairs));
    out << "preference pairs " << pairs.size() << "\n";
  }
  return 0;
}

int run_ppl_stats(Invocation& inv, std::ostream& out) {
  require(!inv.corpusPath.empty() || !inv.pairsPath.empty(), "ppl-stats: give --corpus and/or --pairs");
  if (!inv.corpusPath.empty()) {
    const auto corpus = io::parse_sft_jsonl(io::read_text(inv.corpusPath));
    const auto csv = io::stats_csv(curation::corpus_ppl_stats(corpus, checkpoint_or_zero(inv.checkpointPath)));
    if (!inv.outPath.empty()) io::write_text(inv.outPath, csv);
    out << csv;
  }
  if (!inv.pairsPath.empty()) {
    const auto pairs = io::parse_preference_jsonl(io::read_text(inv.pairsPath));
    out << "median token ppl " << std::setprecision(17) << curation::median_token_ppl(pairs) << "\n";
  }
  return 0;
}

int run_ppl_filter(Invocation& inv, std::ostream& out) {
  const auto corpus = io::parse_sft_jsonl(io::read_text(inv.corpusPath));
  const auto params = checkpoint_or_zero(inv.checkpointPath);
  const auto kept = curation::ppl_filter(corpus, params, inv.threshold);
  io::write_text(inv.outPath, io::sft_jsonl(kept, params));
  out << "kept " << kept.size() << "/" << corpus.size() << "\n";
  return 0;
}

int run_sft(Invocation& inv, std::ostream& out) {
  const auto corpus = io::parse_sft_jsonl(io::read_text(inv.corpusPath));
  training::SftConfig cfg = inv.sft.config;
  cfg.rngSeed = inv.seed;
  auto result = training::sft_train(checkpoint_or_zero(inv.checkpointPath), corpus, cfg);
  result.params.versionTag = "sft";
  io::save_checkpoint(inv.outPath, result.params);
  if (!inv.curvePath.empty()) io::write_text(inv.curvePath, io::loss_csv(result.stepLoss, "loss"));
  if (!inv.manifestPath.empty()) {
    json config{{"command", "sft"},
                {"seed", inv.seed},
                {"epochs", cfg.epochs},
                {"learningRateStart", cfg.learningRateStart},
                {"learningRateEnd", cfg.learningRateEnd},
                {"batchSize", cfg.batchSize},
                {"epochLoss", result.epochLoss}};
    std::vector<std::string> inputs{inv.corpusPath};
    if (!inv.checkpointPath.empty()) inputs.push_back(inv.checkpointPath);
    std::vector<std::string> outputs{inv.outPath};
    if (!inv.curvePath.empty()) outputs.push_back(inv.curvePath);
    write_manifest(inv.manifestPath, config, inputs, outputs);
  }
  out << "nll " << result.epochLoss.front() << " -> " << result.epochLoss.back() << "\n";
  return 0;
}

int run_pref_train(Invocation& inv, std::ostream& out) {
  const auto pairs = io::parse_preference_jsonl(io::read_text(inv.pairsPath));
  const auto cfg = inv.dpo.resolved();
  Rng rng(inv.seed);
  auto result = training::preference_train(checkpoint_or_zero(inv.checkpointPath), pairs, cfg, inv.pref.options, rng);
  result.params.versionTag = std::string(training::to_string(cfg.method));
  io::save_checkpoint(inv.outPath, result.params);
  if (!inv.curvePath.empty()) io::write_text(inv.curvePath, io::curve_csv(result.curve));
  const auto before = training::evaluate_preferences(checkpoint_or_zero(inv.checkpointPath), pairs, cfg);
  const auto after = training::evaluate_preferences(result.params, pairs, cfg);
  if (!inv.manifestPath.empty()) {
    json config{{"command", "pref-train"},
                {"seed", inv.seed},
                {"method", training::to_string(cfg.method)},
                {"beta", cfg.beta},
                {"tauWeight", cfg.tauWeight},
                {"epsilonWeight", cfg.epsilonWeight},
                {"alphaWeight", cfg.alphaWeight},
                {"deltaMin", cfg.deltaMin},
                {"deltaMax", cfg.deltaMax},
                {"steps", inv.pref.options.steps},
                {"learningRate", inv.pref.options.learningRate},
                {"batchSize", inv.pref.options.batchSize},
                {"lossBefore", before.lossValue},
                {"lossAfter", after.lossValue}};
    std::vector<std::string> inputs{inv.pairsPath};
    if (!inv.checkpointPath.empty()) inputs.push_back(inv.checkpointPath);
    std::vector<std::string> outputs{inv.outPath};
    if (!inv.curvePath.empty()) outputs.push_back(inv.curvePath);
    write_manifest(inv.manifestPath, config, inputs, outputs);
  }
  out << "loss " << before.lossValue << " -> " << after.lossValue << ", margin " << before.marginMean << " -> "
      << after.marginMean << "\n";
  return 0;
}

int run_ei(Invocation& inv, std::ostream& out) {
  const auto cfg = inv.run.resolved(inv.seed);
  const fs::path dir(inv.outDir);
  std::vector<std::string> written;
  auto emit = [&](const fs::path& p, const std::string& content) {
    io::write_text(p, content);
    written.push_back(p.string());
  };

  const auto result = harness::run_expert_iteration(cfg, [&](const harness::EiRoundReport& report,
                                                             const harness::RoundArtifacts& art) {
    const fs::path rd = dir / ("round-" + std::to_string(report.roundIndex));
    emit(rd / "trace.jsonl", io::trace_jsonl(art.trees));
    emit(rd / "sft-pool.jsonl", io::sft_jsonl(art.sftPool, art.postSft));
    if (cfg.dpo) emit(rd / "pairs.jsonl", io::preference_jsonl(art.pairs));
    emit(rd / "post-sft.ckpt", io::encode_checkpoint(art.postSft));
    emit(rd / "final.ckpt", io::encode_checkpoint(art.final));
    emit(rd / "eval.json", io::pass_report_json(art.eval));
    emit(rd / "report.json", io::round_report_json(report));
    out << "round " << report.roundIndex << ": proved " << report.theoremsProved << "/" << report.theoremsAttempted
        << ", pass1 " << report.pass1 << ", pass" << cfg.passN << " " << report.passN << "\n";
  });

  emit(dir / "train.goals", io::goals_text(result.suite.states(harness::Split::Train)));
  emit(dir / "heldout.goals", io::goals_text(result.suite.states(harness::Split::Heldout)));
  emit(dir / "suite.jsonl", io::suite_jsonl(result.suite));
  emit(dir / "book.jsonl", io::sft_jsonl(result.bookCorpus, result.base));
  emit(dir / "base.ckpt", io::encode_checkpoint(result.base));
  emit(dir / "base-eval.json", io::pass_report_json(result.baseEval));
  emit(dir / "rounds.csv", io::rounds_csv(result.baseEval, result.reports));
  emit(dir / "final.ckpt", io::encode_checkpoint(result.finalParams));

  std::sort(written.begin(), written.end());
  json digests = json::object();
  for (const auto& f : written) digests[fs::relative(f, dir).generic_string()] = io::file_digest(f);
  json manifest{{"command", "ei"}, {"config", run_config_json(cfg)}, {"digestAlgorithm", "fnv1a64"},
                {"files", digests}};
  io::write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  out << "base pass1 " << result.baseEval.pass1 << "; outputs in " << dir.string() << "\n";
  return 0;
}

int run_eval(Invocation& inv, std::ostream& out) {
  const auto goals = io::parse_goals(io::read_text(inv.goalsPath));
  inv.search.config.validate();
  harness::EvalOptions options;
  options.n = inv.n;
  options.perSearchBudget = inv.search.config.nodeBudget;
  options.baseSeed = inv.seed;
  options.accumulateBudget = inv.accumulate;
  options.search = inv.search.config;
  options.workers = inv.workers;
  const auto report = harness::evaluate_pass_at_n(checkpoint_or_zero(inv.checkpointPath), goals, options);
  if (!inv.outPath.empty()) io::write_text(inv.outPath, io::pass_report_json(report));
  out << std::setprecision(17) << "pass1 " << report.pass1 << "\npass" << report.n << " " << report.passN << "\n";
  return 0;
}

int run_ablate(Invocation& inv, std::ostream& out) {
  const auto cfg = inv.run.resolved(inv.seed);
  const auto rows = harness::run_tau_ablation(cfg, inv.taus);
  const auto csv = harness::ablation_csv(rows);
  if (!inv.outPath.empty()) io::write_text(inv.outPath, csv);
  out << csv;
  return 0;
}

int execute(const std::string& name, Invocation& inv, std::ostream& out) {
  if (name == "gen-bench") return run_gen_bench(inv, out);
  if (name == "search") return run_search(inv, out);
  if (name == "label") return run_label(inv, out);
  if (name == "extract") return run_extract(inv, out);
  if (name == "ppl-stats") return run_ppl_stats(inv, out);
  if (name == "ppl-filter") return run_ppl_filter(inv, out);
  if (name == "sft") return run_sft(inv, out);
  if (name == "pref-train") return run_pref_train(inv, out);
  if (name == "ei") return run_ei(inv, out);
  if (name == "eval") return run_eval(inv, out);
  if (name == "ablate-tau") return run_ablate(inv, out);
  throw PreconditionError("unknown subcommand " + name);
}

// Command-line arguments implied by the config file for options the user
// did not set explicitly.
std::vector<std::string> config_arguments(CLI::App* sub, const std::string& path) {
  std::vector<std::string> extra;
  for (const auto& [key, value] : io::parse_flat_config(io::read_text(path))) {
    if (key == "config") throw PreconditionError("config files cannot include other config files");
    const CLI::Option* opt = sub->get_option_no_throw("--" + key);
    if (opt == nullptr) throw PreconditionError("unknown config key '" + key + "' for " + sub->get_name());
    if (opt->count() > 0) continue;
    if (opt->get_expected_max() == 0) {
      if (value == "true" || value == "1") extra.push_back("--" + key);
      continue;
    }
    extra.push_back("--" + key);
    extra.push_back(value);
  }
  return extra;
}

}  // namespace

int cli_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);

  for (int pass = 0; pass < 2; ++pass) {
    Invocation inv;
    auto app = build_app(inv);
    try {
      std::vector<std::string> reversed(args.rbegin(), args.rend());
      app->parse(reversed);
    } catch (const CLI::CallForHelp&) {
      out << app->help();
      return 0;
    } catch (const CLI::CallForAllHelp&) {
      out << app->help("", CLI::AppFormatMode::All);
      return 0;
    } catch (const CLI::ParseError& e) {
      err << "error: " << e.what() << "\n\n" << app->help();
      return 1;
    }
    CLI::App* sub = app->get_subcommands().front();
    try {
      if (pass == 0 && !inv.configPath.empty()) {
        const auto extra = config_arguments(sub, inv.configPath);
        // Insert right after the subcommand name so the explicit flags keep precedence.
        const auto at = std::find(args.begin(), args.end(), sub->get_name());
        args.insert(at + 1, extra.begin(), extra.end());
        continue;
      }
      return execute(sub->get_name(), inv, out);
    } catch (const PreconditionError& e) {
      err << "error: " << e.what() << "\n";
      return 1;
    } catch (const IoError& e) {
      err << "io error: " << e.what() << "\n";
      return 2;
    } catch (const TrainingDiagnostic& e) {
      err << "training diagnostic: " << e.what() << "\n";
      return 3;
    }
  }
  return 1;
}

int cli_dispatch(int argc, const char* const* argv) { return cli_dispatch(argc, argv, std::cout, std::cerr); }

}  // namespace stepprover::cli
