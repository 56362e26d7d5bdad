#pragma once

// File-based stage orchestration behind the `aquilt` command line tool.
// Every stage reads and writes inside one run directory and records itself
// in <run>/manifest.json; a stage whose inputs are unchanged is skipped.

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "aquilt/backend.hpp"
#include "aquilt/corpus.hpp"
#include "aquilt/dataset.hpp"
#include "aquilt/synthesis.hpp"

namespace aquilt::pipeline {

inline constexpr std::uint64_t kDefaultSeed = 20250101;

struct NovelTask {
  std::string name;
  bool requires_context = false;
  std::string prefix;
  double weight = 1.0;
};

enum class InspectionSampling { Disjoint, Overlapping };

struct RunConfig {
  std::filesystem::path config_dir;  // relative paths resolve against this
  std::filesystem::path output_dir;
  std::filesystem::path asset_dir;
  std::uint64_t seed = kDefaultSeed;
  bool seed_defaulted = false;

  std::vector<corpus::SourceDescriptor> sources;
  std::optional<std::filesystem::path> seeds_file;

  corpus::TaskWeights weights = corpus::TaskWeights::uniform();
  std::vector<NovelTask> novel_tasks;

  std::size_t synthesis_pairs = 400;
  std::size_t candidate_pairs = 200;
  InspectionSampling inspection_sampling = InspectionSampling::Disjoint;
  double inspection_fraction = 0.5;

  std::map<std::string, backend::BackendProfile> backends;  // strong, synthesizer, judge

  dataset::BalanceCaps caps;
  double bias_threshold = 0.10;
  bool bias_strict = false;
  bool relaxation_per_group = true;

  std::size_t parallelism = 4;
  int retry_budget = 3;
  bool prefix_question = true;

  // The configuration as written, minus output_dir and parallelism, which do
  // not affect artifact bytes.
  nlohmann::json fingerprint;

  const backend::BackendProfile& role(const std::string& name) const;
};

// Throws ValidationError carrying the JSON path of the offending field.
RunConfig parse_config(const nlohmann::json& j, const std::filesystem::path& config_dir);
RunConfig load_config(const std::filesystem::path& path);

enum class Command {
  Ingest,
  Pair,
  Synthesize,
  SupplementLogic,
  Inspect,
  Filter,
  Assemble,
  Export,
  Stats,
  Audit,
  Eval,
};

std::string_view to_string(Command command);
Command parse_command(std::string_view name);

struct StageReport {
  std::string stage;
  bool skipped = false;  // inputs unchanged since the recorded run
  nlohmann::json counts = nlohmann::json::object();
};

// Held for the duration of one stage; a second holder fails fast.
class RunLock {
 public:
  explicit RunLock(const std::filesystem::path& run_dir);
  ~RunLock();
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  std::filesystem::path path_;
};

class Pipeline {
 public:
  explicit Pipeline(RunConfig config);

  StageReport ingest();
  StageReport pair();
  StageReport synthesize(synthesis::Stage stage);
  StageReport supplement_logic();
  // role is "strong" (inspection prompt) or "synthesizer" (self-inspection).
  StageReport inspect(const std::string& role);
  StageReport filter(const std::string& threshold_role = "synthesizer");
  StageReport assemble();
  StageReport export_datasets();
  // Returns the rendered table in counts["table"].
  StageReport stats();
  StageReport audit(const std::optional<std::filesystem::path>& input = std::nullopt);

  // Every generation and filtering stage in order.
  std::vector<StageReport> run_all();

  const RunConfig& config() const { return config_; }
  const std::filesystem::path& run_dir() const { return config_.output_dir; }
  nlohmann::json manifest() const;

 private:
  struct StageSpec {
    std::string name;
    std::vector<std::string> inputs;    // run-relative paths that must exist
    std::vector<std::string> optional;  // run-relative paths hashed when present
    std::vector<std::filesystem::path> external;  // files outside the run dir
    nlohmann::json args = nlohmann::json::object();
  };

  template <typename Body>
  StageReport run_stage(const StageSpec& spec, Body&& body);

  std::filesystem::path at(const std::string& rel) const { return config_.output_dir / rel; }
  void write(const std::string& rel, const std::string& content,
             std::map<std::string, std::string>& outputs) const;
  backend::Backend& backend_for(const std::string& role);
  const taskspec::PromptRegistry& prompts();
  std::vector<corpus::UnlabeledRecord> load_records() const;
  nlohmann::json provenance() const;

  RunConfig config_;
  std::optional<taskspec::PromptRegistry> prompts_;
  std::map<std::string, std::unique_ptr<backend::Backend>> backends_;
};

}  // namespace aquilt::pipeline
