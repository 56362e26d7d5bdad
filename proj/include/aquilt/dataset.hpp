#pragma once

// Capping, SFT assembly, JSONL export and the dataset statistics table.

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "aquilt/synthesis.hpp"
#include "aquilt/taskspec.hpp"

namespace aquilt::dataset {

using synthesis::QuintupleRecord;
using taskspec::Language;
using taskspec::TaskType;

struct BalanceCaps {
  std::size_t per_task_language = 50000;
  std::size_t per_score_language = 2000;
  void validate() const;
};

enum class Mode { Synthesis, Inspection };

std::string_view to_string(Mode mode);
Mode parse_mode(std::string_view name);

// Uniform seeded sample of exactly the cap from every over-cap (task,
// language) group; inspection pools are then capped per (score, language).
// Survivors keep their input order.
std::vector<QuintupleRecord> downsample(std::span<const QuintupleRecord> records,
                                        const BalanceCaps& caps, std::uint64_t seed, Mode pool);

struct SftMeta {
  std::string task;  // display name
  TaskType base = TaskType::ClosedBookQa;
  Language language = Language::En;
  std::string record_id;
  std::string template_version;
};

struct SftExample {
  Mode mode = Mode::Synthesis;
  std::string input;
  std::string target;
  SftMeta meta;
};

nlohmann::json to_json(const SftExample& example);
SftExample sft_from_json(const nlohmann::json& j);

// Synthesis targets are {"question", "thinking_steps", "answer"}; inspection
// targets are {"analysis_steps", "score"}. Inspection inputs use the
// self-inspection prompt the synthesis model answers at scoring time.
// Throws PreconditionError for an unscored record in inspection mode.
std::vector<SftExample> assemble_sft(std::span<const QuintupleRecord> records, Mode mode,
                                     const taskspec::PromptRegistry& prompts);

struct DatasetManifest {
  std::string file;  // file name, relative to the manifest
  std::string sha256;
  std::size_t count = 0;
  std::map<std::pair<TaskType, Language>, std::size_t> synthesis_counts;
  std::map<Language, std::size_t> inspection_counts;
  nlohmann::json extra = nlohmann::json::object();  // caller-supplied provenance
};

nlohmann::json to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const nlohmann::json& j);

// `<stem>.manifest.json` next to the data file.
std::filesystem::path manifest_path_for(const std::filesystem::path& data_path);

// Writes the data file atomically, then the manifest beside it. Output bytes
// depend only on the examples and `extra`. Throws IoError; the manifest is
// never written when the data file fails.
DatasetManifest export_jsonl(std::span<const SftExample> examples,
                             const std::filesystem::path& path,
                             const nlohmann::json& extra = nlohmann::json::object());

struct DatasetStats {
  std::map<std::pair<TaskType, Language>, std::size_t> tasks;
  std::map<Language, std::size_t> self_inspection;

  void add(const DatasetManifest& manifest);
  std::size_t total(Language lang) const;
};

// Fixed-width table: 10 task rows, a self-inspection row and a total row.
std::string summarize(const DatasetStats& stats);
nlohmann::json stats_json(const DatasetStats& stats);

}  // namespace aquilt::dataset
