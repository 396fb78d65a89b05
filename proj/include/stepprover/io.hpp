#pragma once

// Persistence: binary weight checkpoints, JSONL corpora / preference pairs /
// search traces, benchmark files, CSV tables and run manifests. Field names
// and layouts are listed in docs/FORMATS.md. Every reader throws IoError on
// unreadable or malformed input.

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "stepprover/curation.hpp"
#include "stepprover/harness.hpp"
#include "stepprover/policy.hpp"
#include "stepprover/search.hpp"
#include "stepprover/training.hpp"

namespace stepprover::io {

namespace fs = std::filesystem;

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr int kTraceVersion = 1;

std::string read_text(const fs::path& path);
// Creates missing parent directories.
void write_text(const fs::path& path, const std::string& content);

// 16 lowercase hex digits of FNV-1a 64 over the bytes.
std::string digest(std::string_view bytes);
std::string file_digest(const fs::path& path);

std::string encode_checkpoint(const policy::PolicyParams& params);
policy::PolicyParams decode_checkpoint(std::string_view bytes);
void save_checkpoint(const fs::path& path, const policy::PolicyParams& params);
policy::PolicyParams load_checkpoint(const fs::path& path);

// Corpus lines also carry tacticText and, under `scorer`, perTokenLogProb
// and ppl. Readers only need state, tokens and sourceTag.
std::string sft_jsonl(std::span<const curation::SftExample> corpus, const policy::PolicyParams& scorer);
std::vector<curation::SftExample> parse_sft_jsonl(std::string_view text);

std::string preference_jsonl(std::span<const curation::PreferencePair> pairs);
std::vector<curation::PreferencePair> parse_preference_jsonl(std::string_view text);

// One header line per tree, then its nodes, then its transitions.
std::string trace_jsonl(std::span<const search::SearchTree> trees);
std::vector<search::SearchTree> parse_trace_jsonl(std::string_view text);

// One serialized goal per line; blank lines and lines starting with '#'
// are skipped.
std::string goals_text(std::span<const kernel::ProofState> goals);
std::vector<kernel::ProofState> parse_goals(std::string_view text);
std::string suite_jsonl(const harness::BenchmarkSuite& suite);

std::string stats_csv(std::span<const curation::CorpusStats> rows);
std::string loss_csv(std::span<const double> values, std::string_view column);
std::string curve_csv(std::span<const training::LossReport> curve);

std::string round_report_json(const harness::EiRoundReport& report);
// round 0 is the warm-started base policy.
std::string rounds_csv(const harness::PassReport& base, std::span<const harness::EiRoundReport> reports);
std::string pass_report_json(const harness::PassReport& report);

// Flat `key = value` text; '#' starts a comment line.
std::map<std::string, std::string> parse_flat_config(std::string_view text);

}  // namespace stepprover::io
