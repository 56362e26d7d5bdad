#pragma once

// Relevance filtering (prohibited phrases, word-frequency bias),
// inspection scoring with threshold filtering, and the independence audit.

#include <nlohmann/json_fwd.hpp>

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "aquilt/backend.hpp"
#include "aquilt/synthesis.hpp"
#include "aquilt/taskspec.hpp"

namespace aquilt::quality {

using synthesis::QuintupleRecord;
using taskspec::Language;
using taskspec::ResolvedTask;

// Phrases that betray a dependency on an absent source text. Matching is
// ASCII case-insensitive, which is a plain substring test for CJK.
class Lexicon {
 public:
  Lexicon() = default;
  // Reads <dir>/<lang>.txt for every language present; one phrase per line,
  // '#' starts a comment line.
  static Lexicon load(const std::filesystem::path& dir);

  void add(Language lang, std::string phrase);
  const std::vector<std::string>& phrases(Language lang) const;
  // First phrase (in file order, English list first) contained in `text`.
  std::optional<std::string> find_in(std::string_view text) const;

 private:
  std::map<Language, std::vector<std::string>> phrases_;
};

class StopwordSet {
 public:
  StopwordSet() = default;
  static StopwordSet load(const std::filesystem::path& dir);
  void add(std::string token);
  bool contains(const std::string& token) const { return words_.contains(token); }
  std::size_t size() const { return words_.size(); }

 private:
  std::unordered_set<std::string> words_;
};

struct Decision {
  bool keep = true;
  std::string phrase;  // set when rejected
};

// Only context-free tasks are ever rejected.
Decision detect_prohibited(std::string_view question, const ResolvedTask& task,
                           const Lexicon& lexicon);

struct GroupKey {
  std::string task;  // display name; novel tasks form their own groups
  Language language = Language::En;
  auto operator<=>(const GroupKey&) const = default;
};

GroupKey group_of(const QuintupleRecord& record);

struct KeywordPrevalence {
  std::string keyword;
  std::size_t count = 0;  // questions containing the keyword
  std::size_t total = 0;
  double prevalence = 0.0;
};

// Keyword units for the frequency rule: lowercased words for alphabetic text,
// one token per CJK character.
std::vector<std::string> keyword_tokens(std::string_view question);

// Distinct tokens per question (document frequency), stopwords excluded.
std::map<std::string, std::size_t> document_frequency(std::span<const std::string> questions,
                                                      const StopwordSet& stopwords);

// Keywords with count / total strictly above `threshold`, highest first.
std::vector<KeywordPrevalence> flag_keywords(std::span<const std::string> questions,
                                             const StopwordSet& stopwords, double threshold);

struct BiasGroup {
  GroupKey key;
  std::size_t questions = 0;
  std::vector<KeywordPrevalence> keywords;
};

struct BiasReport {
  double threshold = 0.10;
  std::vector<BiasGroup> groups;  // only groups with at least one flagged keyword
};

BiasReport scan_frequency_bias(std::span<const QuintupleRecord> records,
                               const StopwordSet& stopwords, double threshold = 0.10);

// Smallest k with (count - k) / (total - k) <= threshold.
std::size_t minimal_removals(std::size_t count, std::size_t total, double threshold);

struct BiasRemoval {
  GroupKey key;
  std::string keyword;
  std::size_t removed = 0;
  std::uint64_t seed = 0;
};

struct BiasFilterResult {
  std::vector<QuintupleRecord> kept;
  std::vector<QuintupleRecord> removed;
  std::vector<BiasRemoval> removals;
};

// Removes seeded-random questions containing each reported keyword until its
// prevalence among survivors is within the threshold. `strict` removes every
// question containing a reported keyword instead.
BiasFilterResult apply_bias_filter(std::span<const QuintupleRecord> records,
                                   const BiasReport& report, std::uint64_t seed,
                                   bool strict = false);

struct InspectionOptions {
  int retry_budget = 3;
  std::size_t parallelism = 4;
};

// Renders the inspection prompt of `kind` (Inspection for the strong scorer,
// SelfInspection for the synthesis model) and sets score and analysis.
// Throws PreconditionError when the record is already scored.
synthesis::Outcome score_inspection(backend::Backend& backend,
                                    const taskspec::PromptRegistry& prompts,
                                    const QuintupleRecord& record, taskspec::PromptKind kind,
                                    const InspectionOptions& options = {});

synthesis::BatchResult score_all(backend::Backend& backend, const taskspec::PromptRegistry& prompts,
                                 std::span<const QuintupleRecord> records,
                                 taskspec::PromptKind kind, const InspectionOptions& options = {});

struct ScoreDistribution {
  std::array<std::size_t, 5> counts{};  // index 0 is score 1
  std::size_t total = 0;
};

ScoreDistribution score_distribution(std::span<const QuintupleRecord> records);

// 1 when more than 20% of scores are exactly 2, otherwise 2.
int select_cutoff(std::size_t total, std::size_t score2);

struct CutoffGroup {
  GroupKey key;
  ScoreDistribution distribution;
  int cutoff = 2;
};

struct ThresholdResult {
  std::vector<QuintupleRecord> kept;
  std::vector<QuintupleRecord> removed;
  std::vector<CutoffGroup> groups;
};

// Keeps records with score > cutoff; the cutoff is chosen per (task,
// language) group, or once for the whole input when per_group is false.
ThresholdResult threshold_filter(std::span<const QuintupleRecord> records, bool per_group = true);

struct AuditQuestion {
  std::string id;
  std::string question;
  Language language = Language::En;
};

enum class AuditVerdict { Independent, Dependent, Undecided };

struct AuditResult {
  std::size_t dependent = 0;
  std::size_t independent = 0;
  std::size_t undecided = 0;
  double rate = 0.0;  // dependent / (dependent + independent)
  std::vector<AuditVerdict> verdicts;
};

AuditResult audit_independence(backend::Backend& backend, const taskspec::PromptRegistry& prompts,
                               std::span<const AuditQuestion> questions,
                               const InspectionOptions& options = {});

nlohmann::json to_json(const GroupKey& key);
nlohmann::json to_json(const BiasReport& report);
nlohmann::json to_json(const BiasFilterResult& result);
nlohmann::json to_json(const ScoreDistribution& distribution);
nlohmann::json to_json(const ThresholdResult& result);
nlohmann::json to_json(const AuditResult& result);

}  // namespace aquilt::quality
