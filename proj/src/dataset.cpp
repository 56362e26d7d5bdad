#include "aquilt/dataset.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <functional>

#include "aquilt/error.hpp"
#include "aquilt/util.hpp"

namespace aquilt::dataset {

using nlohmann::json;
using nlohmann::ordered_json;

void BalanceCaps::validate() const {
  if (per_task_language == 0 || per_score_language == 0) {
    throw ConfigError("balance caps must be positive");
  }
}

std::string_view to_string(Mode mode) {
  return mode == Mode::Synthesis ? "synthesis" : "inspection";
}

Mode parse_mode(std::string_view name) {
  if (name == "synthesis") return Mode::Synthesis;
  if (name == "inspection") return Mode::Inspection;
  throw ConfigError("unknown SFT mode '" + std::string(name) + "'");
}

namespace {

// Keeps a seeded uniform sample of `cap` indices from each group.
template <typename Key>
void cap_groups(const std::map<Key, std::vector<std::size_t>>& groups, std::size_t cap,
                std::uint64_t seed, const std::function<std::string(const Key&)>& label,
                std::vector<bool>& keep) {
  for (const auto& [key, idx] : groups) {
    if (idx.size() <= cap) continue;
    Rng rng(derive_seed(seed, label(key)));
    std::vector<bool> chosen(idx.size(), false);
    for (auto pick : rng.sample_sorted(idx.size(), cap)) chosen[pick] = true;
    for (std::size_t j = 0; j < idx.size(); ++j) {
      if (!chosen[j]) keep[idx[j]] = false;
    }
  }
}

std::string dump_line(const json& j) {
  return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

}  // namespace

std::vector<QuintupleRecord> downsample(std::span<const QuintupleRecord> records,
                                        const BalanceCaps& caps, std::uint64_t seed, Mode pool) {
  caps.validate();
  std::vector<bool> keep(records.size(), true);

  using TaskKey = std::pair<std::string, Language>;
  std::map<TaskKey, std::vector<std::size_t>> by_task;
  for (std::size_t i = 0; i < records.size(); ++i) {
    by_task[{records[i].task.display_name, records[i].language}].push_back(i);
  }
  cap_groups<TaskKey>(by_task, caps.per_task_language, seed, [](const TaskKey& k) {
    return "task|" + k.first + "|" + std::string(taskspec::to_string(k.second));
  }, keep);

  if (pool == Mode::Inspection) {
    using ScoreKey = std::pair<int, Language>;
    std::map<ScoreKey, std::vector<std::size_t>> by_score;
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (!keep[i]) continue;
      if (!records[i].score) {
        throw PreconditionError("inspection pool record " + records[i].id + " is unscored");
      }
      by_score[{*records[i].score, records[i].language}].push_back(i);
    }
    cap_groups<ScoreKey>(by_score, caps.per_score_language, seed, [](const ScoreKey& k) {
      return "score|" + std::to_string(k.first) + "|" + std::string(taskspec::to_string(k.second));
    }, keep);
  }

  std::vector<QuintupleRecord> out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (keep[i]) out.push_back(records[i]);
  }
  return out;
}

json to_json(const SftExample& e) {
  return json{{"mode", to_string(e.mode)},
              {"input", e.input},
              {"target", e.target},
              {"meta",
               {{"task", e.meta.task},
                {"base", taskspec::to_string(e.meta.base)},
                {"language", taskspec::to_string(e.meta.language)},
                {"record_id", e.meta.record_id},
                {"template_version", e.meta.template_version}}}};
}

SftExample sft_from_json(const json& j) {
  SftExample e;
  e.mode = parse_mode(j.at("mode").get<std::string>());
  e.input = j.at("input").get<std::string>();
  e.target = j.at("target").get<std::string>();
  const auto& m = j.at("meta");
  e.meta.task = m.at("task").get<std::string>();
  e.meta.base = taskspec::parse_task(m.at("base").get<std::string>());
  e.meta.language = taskspec::parse_language(m.at("language").get<std::string>());
  e.meta.record_id = m.at("record_id").get<std::string>();
  e.meta.template_version = m.value("template_version", "");
  return e;
}

std::vector<SftExample> assemble_sft(std::span<const QuintupleRecord> records, Mode mode,
                                     const taskspec::PromptRegistry& prompts) {
  using taskspec::PromptKind;
  const PromptKind kind = mode == Mode::Synthesis ? PromptKind::Generation
                                                  : PromptKind::SelfInspection;
  std::vector<SftExample> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    SftExample e;
    e.mode = mode;
    e.meta = {r.task.display_name, r.task.base, r.language, r.id,
              prompts.find(kind, r.task.base, r.language).version};
    if (mode == Mode::Synthesis) {
      e.input = prompts.render(kind, r.task, r.language, {{"u", r.unlabeled}});
      ordered_json target;
      target["question"] = r.question;
      target["thinking_steps"] = r.logic;
      target["answer"] = r.answer;
      e.target = target.dump(-1, ' ', false, json::error_handler_t::replace);
    } else {
      if (!r.score) throw PreconditionError("record " + r.id + " has no inspection score");
      if (r.analysis.empty()) {
        throw PreconditionError("record " + r.id + " has no scorer analysis");
      }
      e.input = prompts.render(kind, r.task, r.language,
                               {{"u", r.unlabeled}, {"q", r.question}, {"l", r.logic},
                                {"a", r.answer}});
      ordered_json target;
      target["analysis_steps"] = r.analysis;
      target["score"] = std::to_string(*r.score);
      e.target = target.dump(-1, ' ', false, json::error_handler_t::replace);
    }
    out.push_back(std::move(e));
  }
  return out;
}

json to_json(const DatasetManifest& m) {
  json synthesis = json::array();
  for (const auto& [key, n] : m.synthesis_counts) {
    synthesis.push_back({{"task", taskspec::to_string(key.first)},
                         {"language", taskspec::to_string(key.second)},
                         {"count", n}});
  }
  json inspection = json::object();
  for (const auto& [lang, n] : m.inspection_counts) {
    inspection[std::string(taskspec::to_string(lang))] = n;
  }
  return json{{"file", m.file},
              {"sha256", m.sha256},
              {"count", m.count},
              {"counts", {{"synthesis", synthesis}, {"inspection", inspection}}},
              {"extra", m.extra}};
}

DatasetManifest manifest_from_json(const json& j) {
  DatasetManifest m;
  m.file = j.at("file").get<std::string>();
  m.sha256 = j.at("sha256").get<std::string>();
  m.count = j.at("count").get<std::size_t>();
  const auto& counts = j.at("counts");
  for (const auto& row : counts.at("synthesis")) {
    m.synthesis_counts[{taskspec::parse_task(row.at("task").get<std::string>()),
                        taskspec::parse_language(row.at("language").get<std::string>())}] =
        row.at("count").get<std::size_t>();
  }
  for (const auto& [lang, n] : counts.at("inspection").items()) {
    m.inspection_counts[taskspec::parse_language(lang)] = n.get<std::size_t>();
  }
  m.extra = j.value("extra", json::object());
  return m;
}

std::filesystem::path manifest_path_for(const std::filesystem::path& data_path) {
  auto p = data_path;
  p.replace_extension(".manifest.json");
  return p;
}

DatasetManifest export_jsonl(std::span<const SftExample> examples,
                             const std::filesystem::path& path, const json& extra) {
  std::string body;
  DatasetManifest m;
  for (const auto& e : examples) {
    body += dump_line(to_json(e));
    body += '\n';
    if (e.mode == Mode::Synthesis) {
      ++m.synthesis_counts[{e.meta.base, e.meta.language}];
    } else {
      ++m.inspection_counts[e.meta.language];
    }
  }
  io::write_file_atomic(path, body);
  m.file = path.filename().string();
  m.sha256 = sha256_hex(body);
  m.count = examples.size();
  m.extra = extra;
  io::write_file_atomic(manifest_path_for(path), to_json(m).dump(2) + "\n");
  return m;
}

void DatasetStats::add(const DatasetManifest& manifest) {
  for (const auto& [key, n] : manifest.synthesis_counts) tasks[key] += n;
  for (const auto& [lang, n] : manifest.inspection_counts) self_inspection[lang] += n;
}

std::size_t DatasetStats::total(Language lang) const {
  std::size_t n = 0;
  for (const auto& [key, c] : tasks) {
    if (key.second == lang) n += c;
  }
  if (auto it = self_inspection.find(lang); it != self_inspection.end()) n += it->second;
  return n;
}

namespace {

std::size_t lookup(const std::map<std::pair<TaskType, Language>, std::size_t>& m, TaskType t,
                   Language l) {
  auto it = m.find({t, l});
  return it == m.end() ? 0 : it->second;
}

std::size_t lookup(const std::map<Language, std::size_t>& m, Language l) {
  auto it = m.find(l);
  return it == m.end() ? 0 : it->second;
}

}  // namespace

std::string summarize(const DatasetStats& stats) {
  constexpr int kLabel = 36;
  constexpr int kCol = 10;
  const std::string rule(kLabel + 2 * kCol, '-');
  auto row = [&](std::string_view label, std::size_t en, std::size_t zh) {
    return fmt::format("{:<{}}{:>{}}{:>{}}\n", label, kLabel, en, kCol, zh, kCol);
  };
  std::string out = fmt::format("{:<{}}{:>{}}{:>{}}\n", "Task Type", kLabel, "English", kCol,
                                "Chinese", kCol);
  out += rule + "\n";
  for (auto task : taskspec::kAllTasks) {
    out += row(taskspec::table_label(task), lookup(stats.tasks, task, Language::En),
               lookup(stats.tasks, task, Language::Zh));
  }
  out += rule + "\n";
  out += row("Self-Inspection", lookup(stats.self_inspection, Language::En),
             lookup(stats.self_inspection, Language::Zh));
  out += rule + "\n";
  out += row("Total", stats.total(Language::En), stats.total(Language::Zh));
  return out;
}

json stats_json(const DatasetStats& stats) {
  json rows = json::array();
  for (auto task : taskspec::kAllTasks) {
    rows.push_back({{"label", taskspec::table_label(task)},
                    {"task", taskspec::to_string(task)},
                    {"en", lookup(stats.tasks, task, Language::En)},
                    {"zh", lookup(stats.tasks, task, Language::Zh)}});
  }
  rows.push_back({{"label", "Self-Inspection"},
                  {"en", lookup(stats.self_inspection, Language::En)},
                  {"zh", lookup(stats.self_inspection, Language::Zh)}});
  rows.push_back({{"label", "Total"},
                  {"en", stats.total(Language::En)},
                  {"zh", stats.total(Language::Zh)}});
  return json{{"rows", rows}};
}

}  // namespace aquilt::dataset
