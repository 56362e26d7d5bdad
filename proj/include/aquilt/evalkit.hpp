#pragma once

#include <nlohmann/json_fwd.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aquilt/taskspec.hpp"

namespace aquilt::evalkit {

using taskspec::TaskType;

// SQuAD normalization: lowercase, drop punctuation (ASCII and CJK), drop the
// articles a/an/the, collapse whitespace.
std::string normalize_answer(std::string_view s);

// Tokens after normalize_answer; CJK characters become single tokens.
std::vector<std::string> squad_tokens(std::string_view s);
// As squad_tokens but articles are kept.
std::vector<std::string> rouge_tokens(std::string_view s);

double token_f1(std::span<const std::string> prediction, std::span<const std::string> reference);
// Maximum over references. Throws PreconditionError when references is empty.
double squad_f1(std::string_view prediction, std::span<const std::string> references);
double exact_match(std::string_view prediction, std::span<const std::string> references);

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);
double rouge_l(std::string_view prediction, std::string_view reference);

enum class ChoiceMode { Single, Multiple, YesNoMaybe };

struct LetterExtraction {
  std::vector<char> letters;  // distinct, in order of first appearance
  bool cued = false;          // letters start at an "answer is" style cue
};

// Standalone option letters (ASCII word boundaries). When the prediction
// contains a cue such as "answer is B" or "答案是B", only letters from the
// cue onward count.
LetterExtraction extract_letters(std::string_view prediction, std::size_t option_count);
// "yes", "no", "maybe" or empty.
std::string extract_yes_no_maybe(std::string_view prediction);

// 1 or 0. Single mode takes the letter right after a cue; without one it
// scores 0 unless exactly one distinct letter is present.
int choice_accuracy(std::string_view prediction, std::string_view gold, ChoiceMode mode,
                    std::size_t option_count = 4);

enum class Metric { F1, RougeL, Accuracy };

std::string_view to_string(Metric metric);
Metric parse_metric(std::string_view name);
Metric default_metric(TaskType task);

struct EvalRecord {
  std::string id;
  TaskType task = TaskType::ExtractiveQa;
  std::string prediction;
  std::vector<std::string> references;
  std::vector<std::string> options;
  std::optional<Metric> metric;
};

EvalRecord eval_record_from_json(const nlohmann::json& j);
// Throws ConfigError naming the 1-based line of the first invalid record.
std::vector<EvalRecord> load_eval_jsonl(const std::filesystem::path& path);

double score_record(const EvalRecord& record);

struct TaskScore {
  Metric metric = Metric::F1;
  std::size_t count = 0;
  double mean = 0.0;
};

struct EvalReport {
  std::map<TaskType, TaskScore> tasks;
  std::size_t count = 0;
};

EvalReport evaluate(std::span<const EvalRecord> records);
nlohmann::json to_json(const EvalReport& report);

}  // namespace aquilt::evalkit
