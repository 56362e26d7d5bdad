#pragma once

// Task taxonomy, novel-task mapping and the prompt template registry.

#include <nlohmann/json_fwd.hpp>

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace aquilt::taskspec {

enum class Language { En, Zh };

inline constexpr std::array<Language, 2> kLanguages{Language::En, Language::Zh};

std::string_view to_string(Language lang);
// Throws ConfigError for anything other than "en" / "zh".
Language parse_language(std::string_view code);

// Declaration order is the row order of the dataset statistics table.
enum class TaskType {
  ExtractiveQa,
  Nli,
  MultiChoiceSingle,
  MultiChoiceMulti,
  TextGeneration,
  Summarization,
  TextClassification,
  Nlu,
  OpenBookQa,
  ClosedBookQa,
};

inline constexpr std::array<TaskType, 10> kAllTasks{
    TaskType::ExtractiveQa,       TaskType::Nli,        TaskType::MultiChoiceSingle,
    TaskType::MultiChoiceMulti,   TaskType::TextGeneration, TaskType::Summarization,
    TaskType::TextClassification, TaskType::Nlu,        TaskType::OpenBookQa,
    TaskType::ClosedBookQa,
};

// Canonical kebab-case name, e.g. "multi-choice-single".
std::string_view to_string(TaskType task);
std::optional<TaskType> find_task(std::string_view name);
// Throws ConfigError on unknown names.
TaskType parse_task(std::string_view name);

// Tasks whose questions must stand on their own without the source text.
// The prohibited-phrase filter only applies to these.
constexpr bool is_context_free(TaskType task) {
  return task == TaskType::MultiChoiceSingle || task == TaskType::MultiChoiceMulti ||
         task == TaskType::ClosedBookQa;
}

// The four task types collected from labeled datasets (logic supplementation).
constexpr bool is_seedable(TaskType task) {
  return task == TaskType::ExtractiveQa || task == TaskType::Nli ||
         task == TaskType::MultiChoiceSingle || task == TaskType::Summarization;
}

// Row label in the statistics table, e.g. "Multi-Choice QA (Single Answer)".
std::string_view table_label(TaskType task);

// Task name as it appears inside prompts ("single-choice", "closed-book", ...).
std::string_view prompt_label(TaskType task, Language lang);

struct ResolvedTask {
  TaskType base = TaskType::ClosedBookQa;
  // Instruction of a novel task; set iff the task was mapped from a novel name.
  std::optional<std::string> prefix;
  std::string display_name;

  bool is_novel() const { return prefix.has_value(); }
  bool operator==(const ResolvedTask&) const = default;
};

ResolvedTask builtin(TaskType task);

// Builtin names pass through unchanged. Anything else maps to open-book QA when
// it needs the unlabeled text and closed-book QA otherwise, carrying the
// instruction prefix. A novel task without a prefix is a ConfigError.
ResolvedTask resolve_task(std::string_view name, bool requires_context,
                          std::optional<std::string> instruction_prefix);

// {"base": "<task>", "name": "<display name>", "prefix"?: "..."}
nlohmann::json to_json(const ResolvedTask& task);
// Also accepts a bare builtin task name string.
ResolvedTask task_from_json(const nlohmann::json& j);

// Prepends a novel task's prefix to a question unless it already starts with it.
std::string apply_question_prefix(const ResolvedTask& task, std::string question);

enum class PromptKind {
  Generation,         // task prompt seen by the synthesis model (also SFT input)
  MetaGeneration,     // requirement-style prompt used for distillation
  LogicSupplement,
  Inspection,         // scoring-criteria prompt for the strong scorer
  SelfInspection,     // short scoring prompt seen by the synthesis model
  IndependenceJudge,
  Evaluation,
};

std::string_view to_string(PromptKind kind);
PromptKind parse_prompt_kind(std::string_view name);

// Placeholders every caller must supply for a kind; `t` and
// `prefix_instruction` are always filled in by the registry.
std::vector<std::string> required_placeholders(PromptKind kind);

struct PromptTemplate {
  PromptKind kind = PromptKind::Generation;
  std::optional<TaskType> task;  // nullopt: applies to every task
  Language language = Language::En;
  std::string body;
  std::string version = "1";
  std::string sha256;
  bool verbatim = false;
  std::string path;  // relative asset path, for provenance

  // `${name}` placeholders in order of first appearance.
  std::vector<std::string> placeholders() const;
};

using PromptFields = std::map<std::string, std::string>;

// Immutable after load; rendering is safe from many threads.
class PromptRegistry {
 public:
  PromptRegistry() = default;

  // Loads `<dir>/manifest.json` and every template it lists, verifying
  // checksums. Throws IoError or ConfigError.
  static PromptRegistry load(const std::filesystem::path& dir);

  void add(PromptTemplate tmpl);

  // Task-specific template first, then the task-agnostic one.
  const PromptTemplate& find(PromptKind kind, TaskType task, Language lang) const;
  bool contains(PromptKind kind, TaskType task, Language lang) const;

  // Throws LookupError when no template exists and RenderError naming the
  // first missing placeholder. Substitution is single pass: values are never
  // re-expanded.
  std::string render(PromptKind kind, const ResolvedTask& task, Language lang,
                     const PromptFields& fields) const;

  const std::string& version() const { return version_; }
  // asset path -> template version, for run manifests.
  std::map<std::string, std::string> versions() const;
  std::size_t size() const { return templates_.size(); }

 private:
  struct Key {
    PromptKind kind;
    std::optional<TaskType> task;
    Language language;
    auto operator<=>(const Key&) const = default;
  };
  const PromptTemplate* lookup(PromptKind kind, TaskType task, Language lang) const;

  std::string version_ = "unversioned";
  std::map<Key, PromptTemplate> templates_;
};

}  // namespace aquilt::taskspec
