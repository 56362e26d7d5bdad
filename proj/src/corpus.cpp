#include "aquilt/corpus.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <set>
#include <unordered_set>

#include "aquilt/error.hpp"
#include "aquilt/text.hpp"
#include "aquilt/util.hpp"

namespace aquilt::corpus {

using nlohmann::json;

namespace {

std::string meta_value(const json& v) {
  return v.is_string() ? v.get<std::string>() : v.dump();
}

std::string pad_ordinal(std::size_t n) {
  std::string s = std::to_string(n);
  if (s.size() < 6) s.insert(0, 6 - s.size(), '0');
  return s;
}

}  // namespace

SourceFormat parse_source_format(std::string_view name) {
  if (name == "jsonl") return SourceFormat::Jsonl;
  if (name == "plain-lines" || name == "plain") return SourceFormat::PlainLines;
  throw ConfigError("unknown source format '" + std::string(name) + "'");
}

std::vector<SourceDescriptor> parse_source_registry(const json& registry,
                                                    const std::filesystem::path& base_dir) {
  if (!registry.is_object()) throw ValidationError("sources", "expected an object");
  std::vector<SourceDescriptor> out;
  for (const auto& [key, entry] : registry.items()) {
    const std::string where = "sources." + key;
    if (!entry.is_object() || !entry.contains("path") || !entry["path"].is_string()) {
      throw ValidationError(where + ".path", "required string");
    }
    SourceDescriptor d;
    d.key = key;
    d.path = entry["path"].get<std::string>();
    if (d.path.is_relative()) d.path = base_dir / d.path;
    try {
      d.format = parse_source_format(entry.value("format", "jsonl"));
    } catch (const ConfigError& e) {
      throw ValidationError(where + ".format", e.what());
    }
    try {
      d.default_language = taskspec::parse_language(entry.value("language", "en"));
    } catch (const ConfigError& e) {
      throw ValidationError(where + ".language", e.what());
    }
    out.push_back(std::move(d));
  }
  return out;
}

IngestResult ingest_corpus(const SourceDescriptor& source, SourceFormat format) {
  const std::string content = io::read_file(source.path);
  IngestResult result;
  result.report.source = source.key;
  std::unordered_set<std::string> seen_ids;

  const auto lines = text::split_lines(content);
  result.report.lines = lines.size();
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string& line = lines[i];
    const std::size_t lineno = i + 1;
    if (text::is_blank(line)) {
      if (format == SourceFormat::PlainLines) ++result.report.dropped_blank;
      continue;
    }
    UnlabeledRecord rec;
    rec.source = source.key;
    rec.language = source.default_language;
    if (format == SourceFormat::PlainLines) {
      rec.text = line;
    } else {
      json obj;
      try {
        obj = json::parse(line);
      } catch (const json::parse_error& e) {
        result.report.errors.push_back({lineno, std::string("invalid JSON: ") + e.what()});
        continue;
      }
      if (!obj.is_object() || !obj.contains("text") || !obj["text"].is_string()) {
        result.report.errors.push_back({lineno, "expected an object with a string 'text'"});
        continue;
      }
      rec.text = obj["text"].get<std::string>();
      try {
        if (obj.contains("language")) {
          rec.language = taskspec::parse_language(obj["language"].get<std::string>());
        }
        if (obj.contains("id")) {
          if (!obj["id"].is_string()) throw ConfigError("'id' must be a string");
          rec.id = obj["id"].get<std::string>();
        }
        if (obj.contains("meta")) {
          if (!obj["meta"].is_object()) throw ConfigError("'meta' must be an object");
          for (const auto& [k, v] : obj["meta"].items()) rec.meta[k] = meta_value(v);
        }
      } catch (const std::exception& e) {
        result.report.errors.push_back({lineno, e.what()});
        continue;
      }
    }
    if (text::is_blank(rec.text)) {
      ++result.report.dropped_blank;
      continue;
    }
    if (rec.id.empty()) rec.id = source.key + ":" + std::to_string(i);
    if (!seen_ids.insert(rec.id).second) {
      result.report.errors.push_back({lineno, "duplicate id '" + rec.id + "'"});
      continue;
    }
    result.records.push_back(std::move(rec));
  }
  result.report.accepted = result.records.size();
  if (result.records.empty()) {
    throw EmptyCorpusError("source '" + source.key + "' (" + source.path.string() +
                           ") produced no valid records");
  }
  return result;
}

SeedIngestResult ingest_seeds(const std::filesystem::path& path, std::string_view key) {
  const std::string content = io::read_file(path);
  SeedIngestResult result;
  result.report.source = std::string(key);
  const auto lines = text::split_lines(content);
  result.report.lines = lines.size();
  std::unordered_set<std::string> seen_ids;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (text::is_blank(lines[i])) continue;
    try {
      auto seed = seed_from_json(json::parse(lines[i]));
      if (!seen_ids.insert(seed.id).second) throw ConfigError("duplicate id '" + seed.id + "'");
      result.seeds.push_back(std::move(seed));
    } catch (const std::exception& e) {
      result.report.errors.push_back({i + 1, e.what()});
    }
  }
  result.report.accepted = result.seeds.size();
  return result;
}

std::vector<UnlabeledRecord> dedup(std::span<const UnlabeledRecord> records) {
  std::vector<UnlabeledRecord> out;
  std::unordered_set<std::string> seen;
  for (const auto& rec : records) {
    if (seen.insert(text::normalize_whitespace(rec.text)).second) out.push_back(rec);
  }
  return out;
}

TaskWeights::TaskWeights(const std::map<TaskType, double>& weights) {
  for (const auto& [task, w] : weights) default_.push_back({taskspec::builtin(task), w});
}

TaskWeights::TaskWeights(std::vector<WeightedTask> weights) : default_(std::move(weights)) {}

TaskWeights TaskWeights::uniform() {
  std::map<TaskType, double> w;
  for (auto t : taskspec::kAllTasks) w[t] = 1.0;
  return TaskWeights(w);
}

void TaskWeights::set_language(Language lang, std::vector<WeightedTask> weights) {
  per_language_[lang] = std::move(weights);
}

const std::vector<WeightedTask>& TaskWeights::for_language(Language lang) const {
  if (auto it = per_language_.find(lang); it != per_language_.end()) return it->second;
  return default_;
}

void TaskWeights::validate(std::span<const Language> languages) const {
  auto check = [](const std::vector<WeightedTask>& ws, std::string_view where) {
    double total = 0.0;
    for (const auto& w : ws) {
      if (!(w.weight >= 0.0)) {
        throw ConfigError("negative task weight for " + w.task.display_name + " in " +
                          std::string(where));
      }
      total += w.weight;
    }
    if (!(total > 0.0)) {
      throw ConfigError("task weights for " + std::string(where) + " are all zero");
    }
  };
  for (auto lang : languages) check(for_language(lang), taskspec::to_string(lang));
}

std::vector<Pairing> sample_pairings(std::span<const UnlabeledRecord> records,
                                     const TaskWeights& weights, std::size_t count,
                                     std::uint64_t seed, std::string_view id_prefix) {
  if (count == 0) return {};
  if (records.empty()) throw EmptyCorpusError("cannot pair an empty record list");

  std::set<Language> langs;
  for (const auto& r : records) langs.insert(r.language);
  std::vector<Language> lang_list(langs.begin(), langs.end());
  weights.validate(lang_list);

  Rng rng(seed);
  std::vector<Pairing> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto& rec = records[rng.uniform_index(records.size())];
    const auto& ws = weights.for_language(rec.language);
    double total = 0.0;
    for (const auto& w : ws) total += w.weight;
    const double x = rng.uniform01() * total;
    // Last positive-weight entry absorbs rounding at the top of the range.
    const WeightedTask* chosen = nullptr;
    double acc = 0.0;
    for (const auto& w : ws) {
      if (w.weight <= 0.0) continue;
      chosen = &w;
      acc += w.weight;
      if (x < acc) break;
    }
    Pairing p;
    p.id = std::string(id_prefix) + "-" + pad_ordinal(i);
    p.record = rec;
    p.task = chosen->task;
    p.seed = derive_seed(seed, p.id);
    out.push_back(std::move(p));
  }
  return out;
}

std::pair<std::vector<UnlabeledRecord>, std::vector<UnlabeledRecord>> partition_records(
    std::span<const UnlabeledRecord> records, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) {
    throw ConfigError("partition fraction must lie in [0, 1]");
  }
  std::pair<std::vector<UnlabeledRecord>, std::vector<UnlabeledRecord>> out;
  for (const auto& r : records) {
    // Keyed on the record id so the split does not depend on input order.
    const double u = static_cast<double>(derive_seed(seed, r.id) >> 11) * 0x1.0p-53;
    (u < fraction ? out.first : out.second).push_back(r);
  }
  return out;
}

json to_json(const UnlabeledRecord& record) {
  json j{{"id", record.id},
         {"source", record.source},
         {"language", taskspec::to_string(record.language)},
         {"text", record.text}};
  if (!record.meta.empty()) j["meta"] = record.meta;
  return j;
}

UnlabeledRecord record_from_json(const json& j) {
  UnlabeledRecord r;
  r.id = j.at("id").get<std::string>();
  r.source = j.value("source", "");
  r.language = taskspec::parse_language(j.at("language").get<std::string>());
  r.text = j.at("text").get<std::string>();
  if (j.contains("meta")) r.meta = j.at("meta").get<std::map<std::string, std::string>>();
  return r;
}

json to_json(const LabeledSeed& seed) {
  return json{{"id", seed.id},
              {"language", taskspec::to_string(seed.language)},
              {"text", seed.text},
              {"question", seed.question},
              {"answer", seed.answer},
              {"task", taskspec::to_string(seed.task)}};
}

LabeledSeed seed_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("seed line is not a JSON object");
  auto str = [&](const char* key) {
    if (!j.contains(key) || !j[key].is_string()) {
      throw ConfigError(std::string("seed field '") + key + "' must be a string");
    }
    return j[key].get<std::string>();
  };
  LabeledSeed s;
  s.id = str("id");
  s.language = taskspec::parse_language(str("language"));
  s.text = str("text");
  // Trimmed here so parsed SFT targets reproduce the stored values exactly.
  s.question = text::trim(str("question"));
  s.answer = text::trim(str("answer"));
  s.task = taskspec::parse_task(str("task"));
  if (!taskspec::is_seedable(s.task)) {
    throw ConfigError("task '" + std::string(taskspec::to_string(s.task)) +
                      "' is not one of the labeled seed task types");
  }
  if (text::is_blank(s.question) || text::is_blank(s.answer)) {
    throw ConfigError("seed question and answer must be non-empty");
  }
  if (text::is_blank(s.text)) throw ConfigError("seed text must be non-empty");
  return s;
}

json to_json(const IngestReport& report) {
  json errors = json::array();
  for (const auto& e : report.errors) errors.push_back({{"line", e.line}, {"message", e.message}});
  return json{{"source", report.source},
              {"lines", report.lines},
              {"accepted", report.accepted},
              {"dropped_blank", report.dropped_blank},
              {"errors", errors}};
}

json to_json(const Pairing& pairing) {
  return json{{"id", pairing.id},
              {"record_id", pairing.record.id},
              {"language", taskspec::to_string(pairing.record.language)},
              {"task", taskspec::to_json(pairing.task)},
              {"seed", pairing.seed}};
}

Pairing pairing_from_json(const json& j,
                          const std::map<std::string, const UnlabeledRecord*>& records_by_id) {
  Pairing p;
  p.id = j.at("id").get<std::string>();
  const auto rid = j.at("record_id").get<std::string>();
  auto it = records_by_id.find(rid);
  if (it == records_by_id.end()) {
    throw ConfigError("pairing " + p.id + " references unknown record '" + rid + "'");
  }
  p.record = *it->second;
  p.task = taskspec::task_from_json(j.at("task"));
  p.seed = j.at("seed").get<std::uint64_t>();
  return p;
}

}  // namespace aquilt::corpus
