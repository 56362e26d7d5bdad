#include "aquilt/quality.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <set>

#include "aquilt/error.hpp"
#include "aquilt/text.hpp"
#include "aquilt/util.hpp"

namespace aquilt::quality {

using nlohmann::json;
using taskspec::PromptKind;

namespace {

std::vector<std::string> asset_lines(const std::filesystem::path& path) {
  std::vector<std::string> out;
  for (const auto& line : text::split_lines(io::read_file(path))) {
    std::string t = text::trim(line);
    if (t.empty() || t.front() == '#') continue;
    out.push_back(std::move(t));
  }
  return out;
}

std::set<std::string> token_set(std::string_view question) {
  auto tokens = keyword_tokens(question);
  return {std::make_move_iterator(tokens.begin()), std::make_move_iterator(tokens.end())};
}

double fraction(std::size_t count, std::size_t total) {
  return total == 0 ? 0.0 : static_cast<double>(count) / static_cast<double>(total);
}

}  // namespace

Lexicon Lexicon::load(const std::filesystem::path& dir) {
  Lexicon lex;
  for (auto lang : taskspec::kLanguages) {
    const auto path = dir / (std::string(taskspec::to_string(lang)) + ".txt");
    if (!std::filesystem::exists(path)) continue;
    for (auto& phrase : asset_lines(path)) lex.add(lang, std::move(phrase));
  }
  return lex;
}

void Lexicon::add(Language lang, std::string phrase) {
  if (text::is_blank(phrase)) throw ConfigError("lexicon phrases must be non-empty");
  phrases_[lang].push_back(std::move(phrase));
}

const std::vector<std::string>& Lexicon::phrases(Language lang) const {
  static const std::vector<std::string> kEmpty;
  auto it = phrases_.find(lang);
  return it == phrases_.end() ? kEmpty : it->second;
}

std::optional<std::string> Lexicon::find_in(std::string_view s) const {
  for (const auto& [lang, list] : phrases_) {
    for (const auto& phrase : list) {
      if (text::contains_ci(s, phrase)) return phrase;
    }
  }
  return std::nullopt;
}

StopwordSet StopwordSet::load(const std::filesystem::path& dir) {
  StopwordSet set;
  for (auto lang : taskspec::kLanguages) {
    const auto path = dir / (std::string(taskspec::to_string(lang)) + ".txt");
    if (!std::filesystem::exists(path)) continue;
    for (auto& word : asset_lines(path)) set.add(std::move(word));
  }
  return set;
}

void StopwordSet::add(std::string token) { words_.insert(text::to_lower_ascii(token)); }

std::vector<std::string> keyword_tokens(std::string_view question) {
  return text::word_tokens(question);
}

Decision detect_prohibited(std::string_view question, const ResolvedTask& task,
                           const Lexicon& lexicon) {
  if (!taskspec::is_context_free(task.base)) return {};
  if (auto phrase = lexicon.find_in(question)) return {false, *phrase};
  return {};
}

GroupKey group_of(const QuintupleRecord& record) {
  return {record.task.display_name, record.language};
}

std::map<std::string, std::size_t> document_frequency(std::span<const std::string> questions,
                                                      const StopwordSet& stopwords) {
  std::map<std::string, std::size_t> df;
  for (const auto& q : questions) {
    for (const auto& tok : token_set(q)) {
      if (!stopwords.contains(tok)) ++df[tok];
    }
  }
  return df;
}

std::vector<KeywordPrevalence> flag_keywords(std::span<const std::string> questions,
                                             const StopwordSet& stopwords, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw ConfigError("bias threshold must lie in (0, 1)");
  }
  std::vector<KeywordPrevalence> out;
  const std::size_t n = questions.size();
  for (const auto& [word, count] : document_frequency(questions, stopwords)) {
    const double p = fraction(count, n);
    if (p > threshold) out.push_back({word, count, n, p});
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.count > b.count;
  });
  return out;
}

namespace {

// A novel task's instruction prefix is shared by every question in its group;
// it is not counted as content.
std::string bias_text(const QuintupleRecord& r) {
  if (r.task.prefix && r.question.starts_with(*r.task.prefix)) {
    return r.question.substr(r.task.prefix->size());
  }
  return r.question;
}

std::map<GroupKey, std::vector<std::size_t>> group_indices(
    std::span<const QuintupleRecord> records) {
  std::map<GroupKey, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < records.size(); ++i) groups[group_of(records[i])].push_back(i);
  return groups;
}

}  // namespace

BiasReport scan_frequency_bias(std::span<const QuintupleRecord> records,
                               const StopwordSet& stopwords, double threshold) {
  BiasReport report;
  report.threshold = threshold;
  for (const auto& [key, idx] : group_indices(records)) {
    std::vector<std::string> questions;
    questions.reserve(idx.size());
    for (auto i : idx) questions.push_back(bias_text(records[i]));
    auto flagged = flag_keywords(questions, stopwords, threshold);
    if (flagged.empty()) continue;
    report.groups.push_back({key, idx.size(), std::move(flagged)});
  }
  return report;
}

std::size_t minimal_removals(std::size_t count, std::size_t total, double threshold) {
  for (std::size_t k = 0; k < count; ++k) {
    if (fraction(count - k, total - k) <= threshold) return k;
  }
  return count;
}

BiasFilterResult apply_bias_filter(std::span<const QuintupleRecord> records,
                                   const BiasReport& report, std::uint64_t seed,
                                   bool strict) {
  std::vector<bool> removed(records.size(), false);
  BiasFilterResult result;
  const auto groups = group_indices(records);

  for (const auto& flagged : report.groups) {
    auto git = groups.find(flagged.key);
    if (git == groups.end()) continue;
    const auto& idx = git->second;
    std::vector<std::set<std::string>> tokens;
    tokens.reserve(idx.size());
    for (auto i : idx) tokens.push_back(token_set(bias_text(records[i])));

    std::map<std::string, BiasRemoval> per_keyword;
    // Removing questions for one keyword raises the share of the others, so
    // passes repeat until every reported keyword is within the threshold.
    for (bool changed = true; changed;) {
      changed = false;
      for (const auto& kw : flagged.keywords) {
        std::vector<std::size_t> holders;
        std::size_t alive = 0;
        for (std::size_t j = 0; j < idx.size(); ++j) {
          if (removed[idx[j]]) continue;
          ++alive;
          if (tokens[j].contains(kw.keyword)) holders.push_back(j);
        }
        if (holders.empty() || fraction(holders.size(), alive) <= report.threshold) continue;
        const std::size_t k =
            strict ? holders.size() : minimal_removals(holders.size(), alive, report.threshold);
        const std::string label = flagged.key.task + "|" +
                                  std::string(taskspec::to_string(flagged.key.language)) + "|" +
                                  kw.keyword;
        auto& entry = per_keyword[kw.keyword];
        entry.key = flagged.key;
        entry.keyword = kw.keyword;
        entry.seed = derive_seed(seed, label);
        Rng rng(derive_seed(entry.seed, std::to_string(entry.removed)));
        for (auto pick : rng.sample_sorted(holders.size(), k)) removed[idx[holders[pick]]] = true;
        entry.removed += k;
        changed = changed || k > 0;
      }
    }
    for (auto& [kw, entry] : per_keyword) result.removals.push_back(std::move(entry));
  }
  for (std::size_t i = 0; i < records.size(); ++i) {
    (removed[i] ? result.removed : result.kept).push_back(records[i]);
  }
  return result;
}

synthesis::Outcome score_inspection(backend::Backend& backend,
                                    const taskspec::PromptRegistry& prompts,
                                    const QuintupleRecord& record, PromptKind kind,
                                    const InspectionOptions& options) {
  if (record.score) throw PreconditionError("record " + record.id + " is already scored");
  if (kind != PromptKind::Inspection && kind != PromptKind::SelfInspection) {
    throw PreconditionError("score_inspection needs an inspection prompt kind");
  }
  backend::CompletionRequest request{
      prompts.render(kind, record.task, record.language,
                     {{"u", record.unlabeled},
                      {"q", record.question},
                      {"l", record.logic},
                      {"a", record.answer}}),
      record.id + ":" + std::string(taskspec::to_string(kind)),
      {std::string(taskspec::to_string(kind)), record.task.base, record.language}};
  std::vector<std::string> raw;
  std::string reason;
  auto parsed = synthesis::complete_with_retries(backend, request, options.retry_budget,
                                                 synthesis::parse_inspection, raw, reason);
  synthesis::Outcome out;
  if (!parsed) {
    out.reject = synthesis::RejectEntry{record.id, record.task, record.language, std::move(raw),
                                        std::move(reason)};
    return out;
  }
  QuintupleRecord scored = record;
  scored.score = parsed->score;
  scored.analysis = std::move(parsed->analysis);
  out.record = std::move(scored);
  return out;
}

synthesis::BatchResult score_all(backend::Backend& backend, const taskspec::PromptRegistry& prompts,
                                 std::span<const QuintupleRecord> records, PromptKind kind,
                                 const InspectionOptions& options) {
  std::vector<synthesis::Outcome> outcomes(records.size());
  const std::size_t bound = std::min(options.parallelism, backend.profile().parallelism);
  parallel_for(records.size(), bound, [&](std::size_t i) {
    outcomes[i] = score_inspection(backend, prompts, records[i], kind, options);
  });
  synthesis::BatchResult result;
  for (auto& o : outcomes) {
    if (o.record) result.records.push_back(std::move(*o.record));
    if (o.reject) result.rejects.push_back(std::move(*o.reject));
  }
  return result;
}

ScoreDistribution score_distribution(std::span<const QuintupleRecord> records) {
  ScoreDistribution d;
  for (const auto& r : records) {
    if (!r.score) throw PreconditionError("record " + r.id + " has no inspection score");
    ++d.counts[static_cast<std::size_t>(*r.score - 1)];
    ++d.total;
  }
  return d;
}

int select_cutoff(std::size_t total, std::size_t score2) {
  return fraction(score2, total) > 0.20 ? 1 : 2;
}

ThresholdResult threshold_filter(std::span<const QuintupleRecord> records, bool per_group) {
  ThresholdResult result;
  std::map<GroupKey, std::vector<std::size_t>> groups;
  if (per_group) {
    groups = group_indices(records);
  } else if (!records.empty()) {
    auto& all = groups[GroupKey{"*", Language::En}];
    for (std::size_t i = 0; i < records.size(); ++i) all.push_back(i);
  }
  std::vector<int> cutoff_of(records.size(), 2);
  for (const auto& [key, idx] : groups) {
    std::vector<QuintupleRecord> members;
    members.reserve(idx.size());
    for (auto i : idx) members.push_back(records[i]);
    CutoffGroup g{key, score_distribution(members), 2};
    g.cutoff = select_cutoff(g.distribution.total, g.distribution.counts[1]);
    for (auto i : idx) cutoff_of[i] = g.cutoff;
    result.groups.push_back(std::move(g));
  }
  for (std::size_t i = 0; i < records.size(); ++i) {
    (*records[i].score > cutoff_of[i] ? result.kept : result.removed).push_back(records[i]);
  }
  return result;
}

AuditResult audit_independence(backend::Backend& backend, const taskspec::PromptRegistry& prompts,
                               std::span<const AuditQuestion> questions,
                               const InspectionOptions& options) {
  AuditResult result;
  result.verdicts.assign(questions.size(), AuditVerdict::Undecided);
  const auto task = taskspec::builtin(taskspec::TaskType::ClosedBookQa);
  const std::size_t bound = std::min(options.parallelism, backend.profile().parallelism);
  parallel_for(questions.size(), bound, [&](std::size_t i) {
    const auto& q = questions[i];
    backend::CompletionRequest request{
        prompts.render(PromptKind::IndependenceJudge, task, q.language, {{"q", q.question}}),
        q.id + ":independence-judge",
        {"independence-judge", std::nullopt, q.language}};
    std::vector<std::string> raw;
    std::string reason;
    auto v = synthesis::complete_with_retries(backend, request, options.retry_budget,
                                              synthesis::parse_verdict, raw, reason);
    if (v) {
      result.verdicts[i] =
          *v == synthesis::Verdict::Yes ? AuditVerdict::Dependent : AuditVerdict::Independent;
    }
  });
  for (auto v : result.verdicts) {
    if (v == AuditVerdict::Dependent) ++result.dependent;
    if (v == AuditVerdict::Independent) ++result.independent;
    if (v == AuditVerdict::Undecided) ++result.undecided;
  }
  result.rate = fraction(result.dependent, result.dependent + result.independent);
  return result;
}

json to_json(const GroupKey& key) {
  return json{{"task", key.task}, {"language", taskspec::to_string(key.language)}};
}

json to_json(const BiasReport& report) {
  json groups = json::array();
  for (const auto& g : report.groups) {
    json kws = json::array();
    for (const auto& k : g.keywords) {
      kws.push_back({{"keyword", k.keyword}, {"count", k.count}, {"prevalence", k.prevalence}});
    }
    groups.push_back({{"group", to_json(g.key)}, {"questions", g.questions}, {"keywords", kws}});
  }
  return json{{"threshold", report.threshold}, {"groups", groups}};
}

json to_json(const BiasFilterResult& result) {
  json removals = json::array();
  for (const auto& r : result.removals) {
    removals.push_back({{"group", to_json(r.key)},
                        {"keyword", r.keyword},
                        {"removed", r.removed},
                        {"seed", r.seed}});
  }
  return json{{"kept", result.kept.size()},
              {"removed", result.removed.size()},
              {"removals", removals}};
}

json to_json(const ScoreDistribution& d) {
  json counts = json::object();
  for (std::size_t s = 0; s < d.counts.size(); ++s) counts[std::to_string(s + 1)] = d.counts[s];
  return json{{"counts", counts}, {"total", d.total}};
}

json to_json(const ThresholdResult& result) {
  json groups = json::array();
  for (const auto& g : result.groups) {
    groups.push_back({{"group", to_json(g.key)},
                      {"distribution", to_json(g.distribution)},
                      {"applied_cutoff", g.cutoff}});
  }
  return json{{"kept", result.kept.size()}, {"removed", result.removed.size()}, {"groups", groups}};
}

json to_json(const AuditResult& result) {
  return json{{"dependent", result.dependent},
              {"independent", result.independent},
              {"undecided", result.undecided},
              {"rate", result.rate}};
}

}  // namespace aquilt::quality
