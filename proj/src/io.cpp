#include "stepprover/io.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "stepprover/errors.hpp"

namespace stepprover::io {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'S', 'P', 'C', 'K'};

template <typename T>
void put_le(std::string& out, T value) {
  static_assert(std::is_unsigned_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      value |= static_cast<T>(static_cast<std::uint8_t>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return value;
  }

  std::string_view take(std::size_t n) {
    need(n);
    auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw IoError("checkpoint is truncated");
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

json parse_line(std::string_view line, std::size_t lineNo) {
  try {
    return json::parse(line);
  } catch (const json::exception& e) {
    throw IoError("line " + std::to_string(lineNo) + ": " + e.what());
  }
}

// Calls fn on every non-blank line as parsed JSON.
template <typename Fn>
void for_each_json_line(std::string_view text, Fn&& fn) {
  std::size_t lineNo = 0;
  while (!text.empty()) {
    const auto end = text.find('\n');
    const auto line = text.substr(0, end);
    text.remove_prefix(end == std::string_view::npos ? text.size() : end + 1);
    ++lineNo;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      fn(parse_line(line, lineNo));
    } catch (const json::exception& e) {
      throw IoError("line " + std::to_string(lineNo) + ": " + e.what());
    }
  }
}

policy::TokenSequence tokens_from(const json& j) {
  auto parsed = policy::parse_tokens(j.get<std::string>());
  if (!parsed) throw IoError("bad token text: " + parsed.error().message);
  return std::move(parsed).value();
}

kernel::ProofState state_from(const json& j) {
  auto parsed = kernel::parse_state(j.get<std::string>());
  if (!parsed) throw IoError("bad state text: " + parsed.error().message);
  return std::move(parsed).value();
}

std::string_view outcome_name(search::Outcome o) { return o == search::Outcome::Proved ? "proved" : "exhausted"; }

search::Outcome outcome_from(const std::string& text) {
  if (text == "proved") return search::Outcome::Proved;
  if (text == "exhausted") return search::Outcome::BudgetExhausted;
  throw IoError("unknown outcome '" + text + "'");
}

kernel::ErrorKind error_kind_from(const std::string& text) {
  for (auto k : {kernel::ErrorKind::ParseError, kernel::ErrorKind::NoMatch, kernel::ErrorKind::BadPath,
                 kernel::ErrorKind::AlreadyClosed}) {
    if (text == kernel::to_string(k)) return k;
  }
  throw IoError("unknown error kind '" + text + "'");
}

kernel::Tactic tactic_from(const json& j) {
  auto parsed = kernel::parse_tactic(j.get<std::string>());
  if (!parsed) throw IoError("bad tactic text: " + parsed.error().message);
  return std::move(parsed).value();
}

json config_json(const search::SearchConfig& c) {
  return json{{"expansionWidth", c.expansionWidth}, {"samplingTemperature", c.samplingTemperature},
              {"lengthNormAlpha", c.lengthNormAlpha}, {"nodeBudget", c.nodeBudget},
              {"maxDepth", c.maxDepth}, {"rngSeed", c.rngSeed}};
}

search::SearchConfig config_from(const json& j) {
  search::SearchConfig c;
  c.expansionWidth = j.at("expansionWidth").get<int>();
  c.samplingTemperature = j.at("samplingTemperature").get<double>();
  c.lengthNormAlpha = j.at("lengthNormAlpha").get<double>();
  c.nodeBudget = j.at("nodeBudget").get<int>();
  c.maxDepth = j.at("maxDepth").get<int>();
  c.rngSeed = j.at("rngSeed").get<std::uint64_t>();
  return c;
}

template <typename T>
json optional_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

// Shortest text that parses back to the same double.
std::string format_double(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

}  // namespace

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  if (in.bad()) throw IoError("read failed: " + path.string());
  return buffer.str();
}

void write_text(const fs::path& path, const std::string& content) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

std::string digest(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : bytes) h = (h ^ static_cast<std::uint8_t>(c)) * 0x100000001b3ULL;
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

std::string file_digest(const fs::path& path) { return digest(read_text(path)); }

std::string encode_checkpoint(const policy::PolicyParams& params) {
  std::string out(kMagic, sizeof(kMagic));
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint32_t>(out, policy::kVocabSize);
  put_le<std::uint32_t>(out, policy::kFeatureDim);
  put_le<std::uint64_t>(out, params.seed);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.versionTag.size()));
  out += params.versionTag;
  out.reserve(out.size() + 8 * params.weights.size());
  for (double w : params.weights) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(w));
  return out;
}

policy::PolicyParams decode_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  if (r.take(4) != std::string_view(kMagic, 4)) throw IoError("not a checkpoint (bad magic)");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) throw IoError("unsupported checkpoint version " + std::to_string(version));
  const auto vocab = r.get<std::uint32_t>();
  const auto dim = r.get<std::uint32_t>();
  if (vocab != policy::kVocabSize || dim != policy::kFeatureDim) throw IoError("checkpoint shape mismatch");
  policy::PolicyParams params;
  params.seed = r.get<std::uint64_t>();
  params.versionTag = std::string(r.take(r.get<std::uint32_t>()));
  for (double& w : params.weights) w = std::bit_cast<double>(r.get<std::uint64_t>());
  if (!r.done()) throw IoError("trailing bytes after checkpoint payload");
  return params;
}

void save_checkpoint(const fs::path& path, const policy::PolicyParams& params) {
  write_text(path, encode_checkpoint(params));
}

policy::PolicyParams load_checkpoint(const fs::path& path) { return decode_checkpoint(read_text(path)); }

std::string sft_jsonl(std::span<const curation::SftExample> corpus, const policy::PolicyParams& scorer) {
  std::string out;
  for (const auto& ex : corpus) {
    const auto scored = policy::sequence_logprob(scorer, ex.state, ex.tokens);
    auto tactic = policy::detokenize(ex.tokens);
    json j{{"state", ex.state},
           {"tacticText", tactic ? kernel::to_text(tactic.value()) : std::string()},
           {"tokens", policy::to_text(ex.tokens)},
           {"perTokenLogProb", scored.perTokenLogProb},
           {"ppl", policy::perplexity_from_logprobs(scored.perTokenLogProb)},
           {"sourceTag", ex.sourceTag}};
    out += j.dump() + "\n";
  }
  return out;
}

std::vector<curation::SftExample> parse_sft_jsonl(std::string_view text) {
  std::vector<curation::SftExample> out;
  for_each_json_line(text, [&](const json& j) {
    out.push_back(curation::SftExample{j.at("state").get<std::string>(), tokens_from(j.at("tokens")),
                                       j.value("sourceTag", std::string("Lib"))});
  });
  return out;
}

std::string preference_jsonl(std::span<const curation::PreferencePair> pairs) {
  std::string out;
  for (const auto& p : pairs) {
    json j{{"state", p.state},
           {"winnerTokens", policy::to_text(p.winnerTokens)},
           {"loserTokens", policy::to_text(p.loserTokens)},
           {"loserUtility", p.loserUtility},
           {"refWinnerPerTokenLogProb", p.refWinnerPerTokenLogProb},
           {"refLoserPerTokenLogProb", p.refLoserPerTokenLogProb}};
    out += j.dump() + "\n";
  }
  return out;
}

std::vector<curation::PreferencePair> parse_preference_jsonl(std::string_view text) {
  std::vector<curation::PreferencePair> out;
  for_each_json_line(text, [&](const json& j) {
    curation::PreferencePair p;
    p.state = j.at("state").get<std::string>();
    p.winnerTokens = tokens_from(j.at("winnerTokens"));
    p.loserTokens = tokens_from(j.at("loserTokens"));
    p.loserUtility = j.at("loserUtility").get<int>();
    p.refWinnerPerTokenLogProb = j.at("refWinnerPerTokenLogProb").get<std::vector<double>>();
    p.refLoserPerTokenLogProb = j.at("refLoserPerTokenLogProb").get<std::vector<double>>();
    if (p.refWinnerPerTokenLogProb.size() != p.winnerTokens.size() ||
        p.refLoserPerTokenLogProb.size() != p.loserTokens.size()) {
      throw IoError("reference log-prob count does not match token count");
    }
    out.push_back(std::move(p));
  });
  return out;
}

std::string trace_jsonl(std::span<const search::SearchTree> trees) {
  std::string out;
  for (const auto& tree : trees) {
    json header{{"type", "header"},
                {"version", kTraceVersion},
                {"goal", kernel::serialize_state(tree.goal)},
                {"config", config_json(tree.config)},
                {"outcome", outcome_name(tree.outcome)},
                {"expansionsUsed", tree.expansionsUsed},
                {"proofNodeId", optional_json(tree.proofNodeId)},
                {"nodeCount", tree.nodes.size()},
                {"edgeCount", tree.edges.size()}};
    out += header.dump() + "\n";
    for (const auto& n : tree.nodes) {
      json j{{"type", "node"},
             {"nodeId", n.nodeId},
             {"parentId", optional_json(n.parentId)},
             {"state", kernel::serialize_state(n.state)},
             {"closed", n.state.closed},
             {"incomingTactic", n.incomingTactic ? json(kernel::to_text(*n.incomingTactic)) : json(nullptr)},
             {"incomingLogProb", n.incomingLogProb},
             {"pathLogProb", n.pathLogProb},
             {"depth", n.depth},
             {"priority", n.priority}};
      out += j.dump() + "\n";
    }
    for (const auto& e : tree.edges) {
      json j{{"type", "transition"},
             {"fromNodeId", e.fromNodeId},
             {"fromState", e.fromState},
             {"tactic", e.tactic ? json(kernel::to_text(*e.tactic)) : json(nullptr)},
             {"tokens", policy::to_text(e.tacticTokens)},
             {"perTokenLogProb", e.perTokenLogProb},
             {"valid", e.valid},
             {"error", e.error ? json(kernel::to_string(*e.error)) : json(nullptr)},
             {"childNodeId", optional_json(e.childNodeId)},
             {"utility", static_cast<int>(e.utility)}};
      out += j.dump() + "\n";
    }
  }
  return out;
}

std::vector<search::SearchTree> parse_trace_jsonl(std::string_view text) {
  std::vector<search::SearchTree> trees;
  std::size_t expectNodes = 0;
  std::size_t expectEdges = 0;
  auto check_complete = [&] {
    if (!trees.empty() && (trees.back().nodes.size() != expectNodes || trees.back().edges.size() != expectEdges)) {
      throw IoError("trace for goal '" + kernel::serialize_state(trees.back().goal) + "' is incomplete");
    }
  };
  for_each_json_line(text, [&](const json& j) {
    const auto type = j.at("type").get<std::string>();
    if (type == "header") {
      check_complete();
      if (j.at("version").get<int>() != kTraceVersion) throw IoError("unsupported trace version");
      search::SearchTree tree;
      tree.goal = state_from(j.at("goal"));
      tree.config = config_from(j.at("config"));
      tree.outcome = outcome_from(j.at("outcome").get<std::string>());
      tree.expansionsUsed = j.at("expansionsUsed").get<int>();
      if (!j.at("proofNodeId").is_null()) tree.proofNodeId = j.at("proofNodeId").get<search::NodeId>();
      expectNodes = j.at("nodeCount").get<std::size_t>();
      expectEdges = j.at("edgeCount").get<std::size_t>();
      trees.push_back(std::move(tree));
      return;
    }
    if (trees.empty()) throw IoError("trace record before any header");
    auto& tree = trees.back();
    if (type == "node") {
      search::SearchNode n;
      n.nodeId = j.at("nodeId").get<search::NodeId>();
      if (n.nodeId != static_cast<search::NodeId>(tree.nodes.size())) throw IoError("node ids are not dense");
      if (!j.at("parentId").is_null()) n.parentId = j.at("parentId").get<search::NodeId>();
      n.state = state_from(j.at("state"));
      n.state.closed = j.at("closed").get<bool>();
      if (!j.at("incomingTactic").is_null()) n.incomingTactic = tactic_from(j.at("incomingTactic"));
      n.incomingLogProb = j.at("incomingLogProb").get<double>();
      n.pathLogProb = j.at("pathLogProb").get<double>();
      n.depth = j.at("depth").get<int>();
      n.priority = j.at("priority").get<double>();
      tree.nodes.push_back(std::move(n));
    } else if (type == "transition") {
      search::TransitionRecord e;
      e.fromNodeId = j.at("fromNodeId").get<search::NodeId>();
      e.fromState = j.at("fromState").get<std::string>();
      if (!j.at("tactic").is_null()) e.tactic = tactic_from(j.at("tactic"));
      e.tacticTokens = tokens_from(j.at("tokens"));
      e.perTokenLogProb = j.at("perTokenLogProb").get<std::vector<double>>();
      e.valid = j.at("valid").get<bool>();
      if (!j.at("error").is_null()) e.error = error_kind_from(j.at("error").get<std::string>());
      if (!j.at("childNodeId").is_null()) e.childNodeId = j.at("childNodeId").get<search::NodeId>();
      const int u = j.at("utility").get<int>();
      if (u < -1 || u > 2) throw IoError("utility out of range");
      e.utility = static_cast<search::Utility>(u);
      tree.edges.push_back(std::move(e));
    } else {
      throw IoError("unknown trace record type '" + type + "'");
    }
  });
  check_complete();
  return trees;
}

std::string goals_text(std::span<const kernel::ProofState> goals) {
  std::string out;
  for (const auto& g : goals) out += kernel::serialize_state(g) + "\n";
  return out;
}

std::vector<kernel::ProofState> parse_goals(std::string_view text) {
  std::vector<kernel::ProofState> out;
  std::size_t lineNo = 0;
  while (!text.empty()) {
    const auto end = text.find('\n');
    auto line = text.substr(0, end);
    text.remove_prefix(end == std::string_view::npos ? text.size() : end + 1);
    ++lineNo;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string_view::npos || line[first] == '#') continue;
    auto parsed = kernel::parse_state(line);
    if (!parsed) throw IoError("goal line " + std::to_string(lineNo) + ": " + parsed.error().message);
    out.push_back(std::move(parsed).value());
  }
  return out;
}

std::string suite_jsonl(const harness::BenchmarkSuite& suite) {
  std::string out;
  for (const auto& g : suite.goals) {
    std::vector<std::string> witness;
    for (const auto& t : g.witness) witness.push_back(kernel::to_text(t));
    json j{{"goal", kernel::serialize_state(g.goal)},
           {"tier", harness::to_string(g.tier)},
           {"split", harness::to_string(g.split)},
           {"witness", witness},
           {"generatorSeed", suite.generatorSeed}};
    out += j.dump() + "\n";
  }
  return out;
}

std::string stats_csv(std::span<const curation::CorpusStats> rows) {
  std::string out = "sourceTag,count,avgPpl\n";
  for (const auto& r : rows) out += r.sourceTag + "," + std::to_string(r.pairCount) + "," + format_double(r.avgSequencePpl) + "\n";
  return out;
}

std::string loss_csv(std::span<const double> values, std::string_view column) {
  std::string out = "step," + std::string(column) + "\n";
  for (std::size_t i = 0; i < values.size(); ++i) out += std::to_string(i) + "," + format_double(values[i]) + "\n";
  return out;
}

std::string curve_csv(std::span<const training::LossReport> curve) {
  std::string out = "step,loss,marginMean,gradNorm,pairCount\n";
  for (std::size_t i = 0; i < curve.size(); ++i) {
    const auto& r = curve[i];
    out += std::to_string(i) + "," + format_double(r.lossValue) + "," + format_double(r.marginMean) + "," +
           format_double(r.gradNorm) + "," + std::to_string(r.pairCount) + "\n";
  }
  return out;
}

std::string round_report_json(const harness::EiRoundReport& r) {
  json stats = json::array();
  for (const auto& s : r.corpusPplBySource) {
    stats.push_back({{"sourceTag", s.sourceTag}, {"count", s.pairCount}, {"avgPpl", s.avgSequencePpl}});
  }
  json j{{"roundIndex", r.roundIndex},
         {"theoremsAttempted", r.theoremsAttempted},
         {"theoremsProved", r.theoremsProved},
         {"newSftExamples", r.newSftExamples},
         {"newPreferencePairs", r.newPreferencePairs},
         {"sftPoolSize", r.sftPoolSize},
         {"pass1", r.pass1},
         {"passN", r.passN},
         {"corpusPplBySource", stats}};
  return j.dump(2) + "\n";
}

std::string rounds_csv(const harness::PassReport& base, std::span<const harness::EiRoundReport> reports) {
  std::string out = "round,theoremsAttempted,theoremsProved,newSftExamples,newPreferencePairs,sftPoolSize,pass1,passN\n";
  out += "0,0,0,0,0,0," + format_double(base.pass1) + "," + format_double(base.passN) + "\n";
  for (const auto& r : reports) {
    out += std::to_string(r.roundIndex) + "," + std::to_string(r.theoremsAttempted) + "," +
           std::to_string(r.theoremsProved) + "," + std::to_string(r.newSftExamples) + "," +
           std::to_string(r.newPreferencePairs) + "," + std::to_string(r.sftPoolSize) + "," +
           format_double(r.pass1) + "," + format_double(r.passN) + "\n";
  }
  return out;
}

std::string pass_report_json(const harness::PassReport& report) {
  json goals = json::array();
  for (const auto& g : report.goals) {
    json attempts = json::array();
    for (const auto& a : g.attempts) {
      attempts.push_back({{"proved", a.proved},
                          {"expansionsUsed", a.expansionsUsed},
                          {"stagnantTransitions", a.stagnantTransitions},
                          {"transitions", a.transitions}});
    }
    goals.push_back({{"goal", g.goal}, {"firstSuccess", optional_json(g.firstSuccess)}, {"attempts", attempts}});
  }
  json j{{"n", report.n}, {"pass1", report.pass1}, {"passN", report.passN}, {"goals", goals}};
  return j.dump(2) + "\n";
}

std::map<std::string, std::string> parse_flat_config(std::string_view text) {
  std::map<std::string, std::string> out;
  std::size_t lineNo = 0;
  auto trim = [](std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return std::string_view{};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (!text.empty()) {
    const auto end = text.find('\n');
    const auto line = trim(text.substr(0, end));
    text.remove_prefix(end == std::string_view::npos ? text.size() : end + 1);
    ++lineNo;
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw IoError("config line " + std::to_string(lineNo) + ": expected key = value");
    const auto key = trim(line.substr(0, eq));
    auto value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    if (key.empty()) throw IoError("config line " + std::to_string(lineNo) + ": empty key");
    out[std::string(key)] = std::string(value);
  }
  return out;
}

}  // namespace stepprover::io
