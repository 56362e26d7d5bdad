#pragma once

// Unlabeled-text ingestion, deduplication and (record, task) pairing.

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "aquilt/taskspec.hpp"

namespace aquilt::corpus {

using taskspec::Language;
using taskspec::ResolvedTask;
using taskspec::TaskType;

struct UnlabeledRecord {
  std::string id;
  std::string source;
  Language language = Language::En;
  std::string text;
  std::map<std::string, std::string> meta;

  bool operator==(const UnlabeledRecord&) const = default;
};

struct LabeledSeed {
  std::string id;
  Language language = Language::En;
  std::string text;
  std::string question;
  std::string answer;
  TaskType task = TaskType::ExtractiveQa;

  bool operator==(const LabeledSeed&) const = default;
};

enum class SourceFormat { Jsonl, PlainLines };

SourceFormat parse_source_format(std::string_view name);

struct SourceDescriptor {
  std::string key;
  std::filesystem::path path;
  SourceFormat format = SourceFormat::Jsonl;
  Language default_language = Language::En;
};

// Registry JSON: {"<key>": {"path": ..., "format": "jsonl"|"plain-lines",
// "language": "en"|"zh"}}. Relative paths resolve against base_dir.
std::vector<SourceDescriptor> parse_source_registry(const nlohmann::json& registry,
                                                    const std::filesystem::path& base_dir);

struct LineError {
  std::size_t line = 0;  // 1-based
  std::string message;
};

struct IngestReport {
  std::string source;
  std::size_t lines = 0;
  std::size_t accepted = 0;
  std::size_t dropped_blank = 0;
  std::vector<LineError> errors;
};

struct IngestResult {
  std::vector<UnlabeledRecord> records;
  IngestReport report;
};

// One record per JSONL object or non-blank line. Missing ids become
// `<source-key>:<line ordinal>` (0-based). Malformed lines are collected in
// the report. Throws IoError for unreadable paths and EmptyCorpusError when
// nothing valid remains.
IngestResult ingest_corpus(const SourceDescriptor& source, SourceFormat format);
inline IngestResult ingest_corpus(const SourceDescriptor& source) {
  return ingest_corpus(source, source.format);
}

struct SeedIngestResult {
  std::vector<LabeledSeed> seeds;
  IngestReport report;
};

// Labeled-seed JSONL: {"id", "language", "text", "question", "answer", "task"}.
SeedIngestResult ingest_seeds(const std::filesystem::path& path, std::string_view key = "seeds");

// Drops later records whose whitespace-normalized text repeats an earlier one.
std::vector<UnlabeledRecord> dedup(std::span<const UnlabeledRecord> records);

struct WeightedTask {
  ResolvedTask task;
  double weight = 0.0;
};

// Task draw weights, optionally overridden per language.
class TaskWeights {
 public:
  TaskWeights() = default;
  explicit TaskWeights(const std::map<TaskType, double>& weights);
  explicit TaskWeights(std::vector<WeightedTask> weights);

  static TaskWeights uniform();

  void set_language(Language lang, std::vector<WeightedTask> weights);
  const std::vector<WeightedTask>& for_language(Language lang) const;

  // Throws ConfigError on negative weights or when no positive weight exists
  // for one of the given languages.
  void validate(std::span<const Language> languages) const;

 private:
  std::vector<WeightedTask> default_;
  std::map<Language, std::vector<WeightedTask>> per_language_;
};

struct Pairing {
  std::string id;
  UnlabeledRecord record;
  ResolvedTask task;
  std::uint64_t seed = 0;

  bool operator==(const Pairing&) const = default;
};

// Exactly `count` pairings: records drawn uniformly with replacement, tasks by
// normalized weight for the record's language. A pure function of its inputs.
std::vector<Pairing> sample_pairings(std::span<const UnlabeledRecord> records,
                                     const TaskWeights& weights, std::size_t count,
                                     std::uint64_t seed, std::string_view id_prefix = "p");

// Seeded split into (first, second) with about `fraction` of records in
// `first`; used to keep inspection pairings disjoint from training ones.
std::pair<std::vector<UnlabeledRecord>, std::vector<UnlabeledRecord>> partition_records(
    std::span<const UnlabeledRecord> records, double fraction, std::uint64_t seed);

nlohmann::json to_json(const UnlabeledRecord& record);
UnlabeledRecord record_from_json(const nlohmann::json& j);
nlohmann::json to_json(const LabeledSeed& seed);
LabeledSeed seed_from_json(const nlohmann::json& j);
nlohmann::json to_json(const IngestReport& report);
// Pairings reference records by id.
nlohmann::json to_json(const Pairing& pairing);
Pairing pairing_from_json(const nlohmann::json& j,
                          const std::map<std::string, const UnlabeledRecord*>& records_by_id);

}  // namespace aquilt::corpus
