#include "aquilt/pipeline.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <spdlog/spdlog.h>

#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <set>

#include "aquilt/error.hpp"
#include "aquilt/evalkit.hpp"
#include "aquilt/quality.hpp"
#include "aquilt/text.hpp"
#include "aquilt/util.hpp"

#ifndef AQUILT_DEFAULT_ASSET_DIR
#define AQUILT_DEFAULT_ASSET_DIR "assets"
#endif

namespace aquilt::pipeline {

using nlohmann::json;
using synthesis::QuintupleRecord;
using taskspec::Language;

namespace {

const std::vector<std::string> kRoles{"strong", "synthesizer", "judge"};

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_relative() ? (base / path).lexically_normal() : path;
}

template <typename T>
T field(const json& obj, const std::string& key, const std::string& where, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(where + key, e.what());
  }
}

std::vector<corpus::WeightedTask> weight_list(const json& j, const std::string& where) {
  if (!j.is_object()) throw ValidationError(where, "expected an object of task -> weight");
  std::vector<corpus::WeightedTask> out;
  for (auto task : taskspec::kAllTasks) {
    const std::string name(taskspec::to_string(task));
    double w = 0.0;
    if (j.contains(name)) {
      if (!j[name].is_number()) throw ValidationError(where + "." + name, "expected a number");
      w = j[name].get<double>();
      if (w < 0.0) throw ValidationError(where + "." + name, "weight must be >= 0");
    }
    out.push_back({taskspec::builtin(task), w});
  }
  for (const auto& [name, value] : j.items()) {
    if (!taskspec::find_task(name)) {
      throw ValidationError(where + "." + name, "unknown task (declare novel tasks under novel_tasks)");
    }
    (void)value;
  }
  return out;
}

std::string jsonl(const std::vector<json>& rows) {
  std::string out;
  for (const auto& r : rows) {
    out += r.dump(-1, ' ', false, json::error_handler_t::replace);
    out += '\n';
  }
  return out;
}

template <typename T>
std::string jsonl_of(const std::vector<T>& items) {
  std::vector<json> rows;
  rows.reserve(items.size());
  for (const auto& x : items) rows.push_back(to_json(x));
  return jsonl(rows);
}

std::vector<json> read_jsonl(const std::filesystem::path& path) {
  std::vector<json> rows;
  const auto lines = text::split_lines(io::read_file(path));
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (text::is_blank(lines[i])) continue;
    try {
      rows.push_back(json::parse(lines[i]));
    } catch (const json::parse_error& e) {
      throw IoError(path.string() + " line " + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return rows;
}

std::vector<QuintupleRecord> read_quintuples(const std::filesystem::path& path) {
  std::vector<QuintupleRecord> out;
  for (const auto& row : read_jsonl(path)) out.push_back(synthesis::quintuple_from_json(row));
  return out;
}

std::string producer_of(const std::string& rel) {
  if (rel.starts_with("corpus/")) return "ingest";
  if (rel.starts_with("pairings/")) return "pair";
  if (rel.starts_with("quintuples/supplemented")) return "supplement-logic";
  if (rel.starts_with("quintuples/")) return "synthesize";
  if (rel.starts_with("scored/")) return "inspect";
  if (rel.starts_with("filtered/")) return "filter";
  if (rel.starts_with("sft/assembled/")) return "assemble";
  if (rel.starts_with("sft/")) return "export";
  return "unknown";
}

json group_counts(const std::vector<QuintupleRecord>& records) {
  std::map<std::string, std::size_t> counts;
  for (const auto& r : records) {
    counts[r.task.display_name + "|" + std::string(taskspec::to_string(r.language))]++;
  }
  return counts;
}

}  // namespace

const backend::BackendProfile& RunConfig::role(const std::string& name) const {
  auto it = backends.find(name);
  if (it == backends.end()) throw ValidationError("backends." + name, "no profile for role");
  return it->second;
}

RunConfig parse_config(const json& j, const std::filesystem::path& config_dir) {
  if (!j.is_object()) throw ValidationError("$", "configuration must be a JSON object");
  RunConfig c;
  c.config_dir = config_dir;
  c.output_dir = resolve(config_dir, field<std::string>(j, "output_dir", "", "run"));
  if (j.contains("asset_dir")) {
    c.asset_dir = resolve(config_dir, field<std::string>(j, "asset_dir", "", ""));
  } else if (const char* env = std::getenv("AQUILT_ASSETS")) {
    c.asset_dir = env;
  } else {
    c.asset_dir = AQUILT_DEFAULT_ASSET_DIR;
  }
  if (j.contains("seed")) {
    c.seed = field<std::uint64_t>(j, "seed", "", kDefaultSeed);
  } else {
    c.seed_defaulted = true;
  }

  if (!j.contains("sources")) throw ValidationError("sources", "required");
  c.sources = corpus::parse_source_registry(j["sources"], config_dir);
  if (c.sources.empty()) throw ValidationError("sources", "at least one source is required");
  if (j.contains("seeds_file")) {
    c.seeds_file = resolve(config_dir, field<std::string>(j, "seeds_file", "", ""));
  }

  std::vector<corpus::WeightedTask> defaults;
  std::map<Language, std::vector<corpus::WeightedTask>> per_language;
  if (j.contains("task_weights")) {
    const auto& tw = j["task_weights"];
    if (!tw.is_object()) throw ValidationError("task_weights", "expected an object");
    const bool layered = tw.contains("default") || tw.contains("en") || tw.contains("zh");
    if (layered) {
      for (const auto& [key, value] : tw.items()) {
        if (key == "default") {
          defaults = weight_list(value, "task_weights.default");
        } else {
          Language lang;
          try {
            lang = taskspec::parse_language(key);
          } catch (const ConfigError& e) {
            throw ValidationError("task_weights." + key, e.what());
          }
          per_language[lang] = weight_list(value, "task_weights." + key);
        }
      }
    } else {
      defaults = weight_list(tw, "task_weights");
    }
  }
  if (defaults.empty()) {
    for (auto t : taskspec::kAllTasks) defaults.push_back({taskspec::builtin(t), 1.0});
  }

  if (j.contains("novel_tasks")) {
    const auto& nt = j["novel_tasks"];
    if (!nt.is_array()) throw ValidationError("novel_tasks", "expected an array");
    for (std::size_t i = 0; i < nt.size(); ++i) {
      const std::string where = "novel_tasks[" + std::to_string(i) + "].";
      NovelTask n;
      n.name = field<std::string>(nt[i], "name", where, "");
      n.requires_context = field<bool>(nt[i], "requires_context", where, false);
      n.prefix = field<std::string>(nt[i], "prefix", where, "");
      n.weight = field<double>(nt[i], "weight", where, 1.0);
      if (n.weight < 0.0) throw ValidationError(where + "weight", "weight must be >= 0");
      taskspec::ResolvedTask rt;
      try {
        rt = taskspec::resolve_task(n.name, n.requires_context,
                                    n.prefix.empty() ? std::nullopt
                                                     : std::optional<std::string>(n.prefix));
      } catch (const ConfigError& e) {
        throw ValidationError(where + "prefix", e.what());
      }
      if (!rt.is_novel()) throw ValidationError(where + "name", "names a builtin task");
      defaults.push_back({rt, n.weight});
      for (auto& [lang, list] : per_language) list.push_back({rt, n.weight});
      c.novel_tasks.push_back(std::move(n));
    }
  }
  c.weights = corpus::TaskWeights(defaults);
  for (auto& [lang, list] : per_language) c.weights.set_language(lang, std::move(list));

  if (j.contains("pairing")) {
    const auto& p = j["pairing"];
    c.synthesis_pairs = field<std::size_t>(p, "synthesis_count", "pairing.", c.synthesis_pairs);
    c.candidate_pairs = field<std::size_t>(p, "candidate_count", "pairing.", c.candidate_pairs);
    const auto mode = field<std::string>(p, "inspection_sampling", "pairing.", "disjoint");
    if (mode == "disjoint") {
      c.inspection_sampling = InspectionSampling::Disjoint;
    } else if (mode == "overlapping") {
      c.inspection_sampling = InspectionSampling::Overlapping;
    } else {
      throw ValidationError("pairing.inspection_sampling", "expected disjoint or overlapping");
    }
    c.inspection_fraction =
        field<double>(p, "inspection_fraction", "pairing.", c.inspection_fraction);
    if (!(c.inspection_fraction > 0.0 && c.inspection_fraction < 1.0)) {
      throw ValidationError("pairing.inspection_fraction", "must lie in (0, 1)");
    }
  }

  if (!j.contains("backends") || !j["backends"].is_object()) {
    throw ValidationError("backends", "required object with strong, synthesizer and judge");
  }
  for (const auto& role : kRoles) {
    if (!j["backends"].contains(role)) throw ValidationError("backends." + role, "required");
    try {
      c.backends.emplace(role, backend::profile_from_json(j["backends"][role], config_dir));
    } catch (const ValidationError& e) {
      const std::string what = e.what();
      throw ValidationError("backends." + role + "." + e.field_path(),
                            what.substr(std::min(what.size(), e.field_path().size() + 2)));
    } catch (const ConfigError& e) {
      throw ValidationError("backends." + role, e.what());
    } catch (const json::exception& e) {
      throw ValidationError("backends." + role, e.what());
    }
  }

  if (j.contains("caps")) {
    c.caps.per_task_language =
        field<std::size_t>(j["caps"], "per_task_language", "caps.", c.caps.per_task_language);
    c.caps.per_score_language =
        field<std::size_t>(j["caps"], "per_score_language", "caps.", c.caps.per_score_language);
    try {
      c.caps.validate();
    } catch (const ConfigError& e) {
      throw ValidationError("caps", e.what());
    }
  }
  if (j.contains("thresholds")) {
    const auto& t = j["thresholds"];
    c.bias_threshold = field<double>(t, "bias", "thresholds.", c.bias_threshold);
    if (!(c.bias_threshold > 0.0 && c.bias_threshold < 1.0)) {
      throw ValidationError("thresholds.bias", "must lie in (0, 1)");
    }
    c.bias_strict = field<bool>(t, "bias_strict", "thresholds.", false);
    const auto relax = field<std::string>(t, "relaxation", "thresholds.", "per-group");
    if (relax != "per-group" && relax != "per-dataset") {
      throw ValidationError("thresholds.relaxation", "expected per-group or per-dataset");
    }
    c.relaxation_per_group = relax == "per-group";
  }
  c.parallelism = field<std::size_t>(j, "parallelism", "", c.parallelism);
  if (c.parallelism == 0) throw ValidationError("parallelism", "must be positive");
  c.retry_budget = field<int>(j, "retry_budget", "", c.retry_budget);
  if (c.retry_budget < 1) throw ValidationError("retry_budget", "must be >= 1");
  c.prefix_question = field<bool>(j, "prefix_question", "", true);

  c.fingerprint = j;
  c.fingerprint.erase("output_dir");
  c.fingerprint.erase("parallelism");
  c.fingerprint["seed"] = c.seed;
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(io::read_file(path));
  } catch (const json::parse_error& e) {
    throw ValidationError("$", std::string("invalid JSON: ") + e.what());
  }
  return parse_config(j, std::filesystem::absolute(path).parent_path());
}

std::string_view to_string(Command command) {
  switch (command) {
    case Command::Ingest: return "ingest";
    case Command::Pair: return "pair";
    case Command::Synthesize: return "synthesize";
    case Command::SupplementLogic: return "supplement-logic";
    case Command::Inspect: return "inspect";
    case Command::Filter: return "filter";
    case Command::Assemble: return "assemble";
    case Command::Export: return "export";
    case Command::Stats: return "stats";
    case Command::Audit: return "audit";
    case Command::Eval: return "eval";
  }
  return "ingest";
}

Command parse_command(std::string_view name) {
  for (auto c : {Command::Ingest, Command::Pair, Command::Synthesize, Command::SupplementLogic,
                 Command::Inspect, Command::Filter, Command::Assemble, Command::Export,
                 Command::Stats, Command::Audit, Command::Eval}) {
    if (to_string(c) == name) return c;
  }
  throw ConfigError("unknown command '" + std::string(name) + "'");
}

RunLock::RunLock(const std::filesystem::path& run_dir) : path_(run_dir / ".lock") {
  std::filesystem::create_directories(run_dir);
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    if (errno == EEXIST) {
      throw PreconditionError("run directory " + run_dir.string() +
                              " is locked by another stage (remove .lock if stale)");
    }
    throw IoError("cannot create " + path_.string() + ": " + std::strerror(errno));
  }
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

RunLock::~RunLock() {
  std::error_code ec;
  std::filesystem::remove(path_, ec);
}

Pipeline::Pipeline(RunConfig config) : config_(std::move(config)) {}

const taskspec::PromptRegistry& Pipeline::prompts() {
  if (!prompts_) prompts_ = taskspec::PromptRegistry::load(config_.asset_dir / "templates");
  return *prompts_;
}

backend::Backend& Pipeline::backend_for(const std::string& role) {
  auto it = backends_.find(role);
  if (it == backends_.end()) {
    it = backends_.emplace(role, backend::make_backend(config_.role(role))).first;
  }
  return *it->second;
}

json Pipeline::manifest() const {
  const auto path = config_.output_dir / "manifest.json";
  if (!std::filesystem::exists(path)) return json::object();
  return json::parse(io::read_file(path));
}

json Pipeline::provenance() const {
  json backends = json::object();
  for (const auto& [role, profile] : config_.backends) backends[role] = backend::to_json(profile);
  json templates = json::object();
  if (prompts_) {
    templates["set_version"] = prompts_->version();
    templates["files"] = prompts_->versions();
  }
  return json{{"seed", config_.seed},
              {"seed_defaulted", config_.seed_defaulted},
              {"config_sha256", sha256_hex(config_.fingerprint.dump())},
              {"backends", backends},
              {"templates", templates},
              {"retry_budget", config_.retry_budget},
              {"caps",
               {{"per_task_language", config_.caps.per_task_language},
                {"per_score_language", config_.caps.per_score_language}}},
              {"downsampling", "uniform-seeded"},
              {"inspection_sampling", config_.inspection_sampling == InspectionSampling::Disjoint
                                          ? "disjoint"
                                          : "overlapping"}};
}

void Pipeline::write(const std::string& rel, const std::string& content,
                     std::map<std::string, std::string>& outputs) const {
  const auto path = at(rel);
  std::filesystem::create_directories(path.parent_path());
  io::write_file_atomic(path, content);
  outputs[rel] = sha256_hex(content);
}

template <typename Body>
StageReport Pipeline::run_stage(const StageSpec& spec, Body&& body) {
  RunLock lock(config_.output_dir);
  (void)prompts();

  json fingerprint{{"stage", spec.name}, {"args", spec.args}, {"config", config_.fingerprint}};
  for (const auto& rel : spec.inputs) {
    if (!std::filesystem::exists(at(rel))) {
      const auto producer = producer_of(rel);
      throw DependencyError(producer, "stage '" + spec.name + "' needs " + rel + "; run '" +
                                          producer + "' first");
    }
    fingerprint["inputs"][rel] = sha256_hex(io::read_file(at(rel)));
  }
  for (const auto& rel : spec.optional) {
    fingerprint["optional"][rel] =
        std::filesystem::exists(at(rel)) ? json(sha256_hex(io::read_file(at(rel)))) : json(nullptr);
  }
  for (const auto& path : spec.external) {
    fingerprint["external"].push_back(sha256_hex(io::read_file(path)));
  }
  fingerprint["templates"] = prompts_->versions();
  const std::string input_hash = sha256_hex(fingerprint.dump());

  json manifest = this->manifest();
  StageReport report;
  report.stage = spec.name;
  if (manifest.contains("stages") && manifest["stages"].contains(spec.name)) {
    const auto& rec = manifest["stages"][spec.name];
    bool intact = rec.value("inputs", "") == input_hash;
    const json recorded = rec.value("outputs", json::object());
    for (auto it = recorded.begin(); intact && it != recorded.end(); ++it) {
      intact = std::filesystem::exists(at(it.key())) &&
               sha256_hex(io::read_file(at(it.key()))) == it.value().template get<std::string>();
    }
    if (intact) {
      spdlog::info("{}: inputs unchanged, skipping", spec.name);
      report.skipped = true;
      report.counts = rec.value("counts", json::object());
      return report;
    }
  }

  spdlog::info("{}: running", spec.name);
  std::map<std::string, std::string> outputs;
  report.counts = body(outputs);

  manifest = this->manifest();
  json updated = provenance();
  updated["format"] = 1;
  updated["stages"] = manifest.value("stages", json::object());
  updated["stages"][spec.name] = {{"inputs", input_hash}, {"outputs", outputs},
                                  {"counts", report.counts}};
  io::write_file_atomic(config_.output_dir / "manifest.json", updated.dump(2) + "\n");
  spdlog::info("{}: done {}", spec.name, report.counts.dump());
  return report;
}

std::vector<corpus::UnlabeledRecord> Pipeline::load_records() const {
  std::vector<corpus::UnlabeledRecord> out;
  for (const auto& row : read_jsonl(at("corpus/records.jsonl"))) {
    out.push_back(corpus::record_from_json(row));
  }
  return out;
}

StageReport Pipeline::ingest() {
  StageSpec spec{"ingest", {}, {}, {}, json::object()};
  for (const auto& s : config_.sources) spec.external.push_back(s.path);
  if (config_.seeds_file) spec.external.push_back(*config_.seeds_file);
  return run_stage(spec, [&](std::map<std::string, std::string>& outputs) {
    std::vector<corpus::UnlabeledRecord> all;
    json reports = json::array();
    for (const auto& src : config_.sources) {
      auto res = corpus::ingest_corpus(src, src.format);
      reports.push_back(corpus::to_json(res.report));
      all.insert(all.end(), res.records.begin(), res.records.end());
    }
    auto unique = corpus::dedup(all);
    std::set<std::string> ids;
    for (const auto& r : unique) {
      if (!ids.insert(r.id).second) {
        throw ConfigError("record id '" + r.id + "' appears in more than one source");
      }
    }
    write("corpus/records.jsonl", jsonl_of(unique), outputs);

    json seed_report = nullptr;
    std::size_t seed_count = 0;
    if (config_.seeds_file) {
      auto seeds = corpus::ingest_seeds(*config_.seeds_file, "seeds");
      seed_report = corpus::to_json(seeds.report);
      seed_count = seeds.seeds.size();
      write("corpus/seeds.jsonl", jsonl_of(seeds.seeds), outputs);
    }
    std::map<std::string, std::size_t> by_language;
    for (const auto& r : unique) by_language[std::string(taskspec::to_string(r.language))]++;
    json counts{{"records", unique.size()},
                {"duplicates_removed", all.size() - unique.size()},
                {"by_language", by_language},
                {"seeds", seed_count}};
    write("reports/ingest.json",
          json{{"sources", reports}, {"seeds", seed_report}, {"counts", counts}}.dump(2) + "\n",
          outputs);
    return counts;
  });
}

StageReport Pipeline::pair() {
  StageSpec spec{"pair", {"corpus/records.jsonl"}, {}, {}, json::object()};
  return run_stage(spec, [&](std::map<std::string, std::string>& outputs) {
    const auto records = load_records();
    std::vector<corpus::UnlabeledRecord> synth_pool = records;
    std::vector<corpus::UnlabeledRecord> cand_pool = records;
    if (config_.inspection_sampling == InspectionSampling::Disjoint) {
      auto [inspection, synthesis] = corpus::partition_records(
          records, config_.inspection_fraction, derive_seed(config_.seed, "partition"));
      if (inspection.empty() || synthesis.empty()) {
        throw EmptyCorpusError("corpus too small for a disjoint inspection split");
      }
      cand_pool = std::move(inspection);
      synth_pool = std::move(synthesis);
    }
    auto synth = corpus::sample_pairings(synth_pool, config_.weights, config_.synthesis_pairs,
                                         derive_seed(config_.seed, "pairs/synthesis"), "p");
    auto cand = corpus::sample_pairings(cand_pool, config_.weights, config_.candidate_pairs,
                                        derive_seed(config_.seed, "pairs/candidate"), "c");
    write("pairings/synthesis.jsonl", jsonl_of(synth), outputs);
    write("pairings/candidate.jsonl", jsonl_of(cand), outputs);
    return json{{"synthesis", synth.size()},
                {"candidate", cand.size()},
                {"synthesis_pool", synth_pool.size()},
                {"candidate_pool", cand_pool.size()}};
  });
}

StageReport Pipeline::synthesize(synthesis::Stage stage) {
  if (stage == synthesis::Stage::Supplemented) {
    throw ConfigError("use supplement-logic for seed supplementation");
  }
  const bool distilled = stage == synthesis::Stage::Distilled;
  const std::string name(synthesis::to_string(stage));
  const std::string input = distilled ? "pairings/synthesis.jsonl" : "pairings/candidate.jsonl";
  const std::string role = distilled ? "strong" : "synthesizer";
  StageSpec spec{"synthesize:" + name, {"corpus/records.jsonl", input}, {}, {},
                 json{{"stage", name}, {"role", role}}};
  return run_stage(spec, [&](std::map<std::string, std::string>& outputs) {
    const auto records = load_records();
    std::map<std::string, const corpus::UnlabeledRecord*> by_id;
    for (const auto& r : records) by_id[r.id] = &r;
    std::vector<corpus::Pairing> pairings;
    for (const auto& row : read_jsonl(at(input))) {
      pairings.push_back(corpus::pairing_from_json(row, by_id));
    }
    auto& be = backend_for(role);
    const auto before = be.usage_report();
    synthesis::SynthesisOptions opts{config_.retry_budget, config_.prefix_question,
                                     config_.parallelism};
    auto batch = synthesis::synthesize(be, prompts(), pairings, stage, opts);
    const auto after = be.usage_report();
    write("quintuples/" + name + ".jsonl", jsonl_of(batch.records), outputs);
    write("quintuples/" + name + ".rejects.jsonl", jsonl_of(batch.rejects), outputs);
    return json{{"pairings", pairings.size()},
                {"records", batch.records.size()},
                {"rejected", batch.rejects.size()},
                {"by_group", group_counts(batch.records)},
                {"usage",
                 {{"requests", after.requests - before.requests},
                  {"input_tokens", after.input_tokens - before.input_tokens},
                  {"output_tokens", after.output_tokens - before.output_tokens},
                  {"failures", after.failures - before.failures}}}};
  });
}

StageReport Pipeline::supplement_logic() {
  StageSpec spec{"supplement-logic", {}, {"corpus/seeds.jsonl"}, {}, json{{"role", "strong"}}};
  if (config_.seeds_file) spec.inputs.push_back("corpus/seeds.jsonl");
  return run_stage(spec, [&](std::map<std::string, std::string>& outputs) {
    std::vector<corpus::LabeledSeed> seeds;
    if (std::filesystem::exists(at("corpus/seeds.jsonl"))) {
      for (const auto& row : read_jsonl(at("corpus/seeds.jsonl"))) {
        seeds.push_back(corpus::seed_from_json(row));
      }
    }
    synthesis::SynthesisOptions opts{config_.retry_budget, config_.prefix_question,
                                     config_.parallelism};
    auto batch = synthesis::supplement_all(backend_for("strong"), prompts(), seeds, opts);
    write("quintuples/supplemented.jsonl", jsonl_of(batch.records), outputs);
    write("quintuples/supplemented.rejects.jsonl", jsonl_of(batch.rejects), outputs);
    return json{{"seeds", seeds.size()},
                {"records", batch.records.size()},
                {"rejected", batch.rejects.size()}};
  });
}

StageReport Pipeline::inspect(const std::string& role) {
  if (role != "strong" && role != "synthesizer") {
    throw ConfigError("inspect role must be strong or synthesizer, got '" + role + "'");
  }
  const auto kind = role == "strong" ? taskspec::PromptKind::Inspection
                                     : taskspec::PromptKind::SelfInspection;
  StageSpec spec{"inspect:" + role, {"quintuples/candidate.jsonl"}, {}, {},
                 json{{"role", role}, {"prompt", taskspec::to_string(kind)}}};
  return run_stage(spec, [&](std::map<std::string, std::string>& outputs) {
    const auto records = read_quintuples(at("quintuples/candidate.jsonl"));
    quality::InspectionOptions opts{config_.retry_budget, config_.parallelism};
    auto batch = quality::score_all(backend_for(role), prompts(), records, kind, opts);
    write("scored/" + role + ".jsonl", jsonl_of(batch.records), outputs);
    write("scored/" + role + ".rejects.jsonl", jsonl_of(batch.rejects), outputs);
    return json{{"records", records.size()},
                {"scored", batch.records.size()},
                {"rejected", batch.rejects.size()},
                {"distribution", quality::to_json(quality::score_distribution(batch.records))}};
  });
}

StageReport Pipeline::filter(const std::string& threshold_role) {
  const std::string scored = "scored/" + threshold_role + ".jsonl";
  StageSpec spec{"filter", {"quintuples/distilled.jsonl"},
                 {"quintuples/supplemented.jsonl", scored}, {},
                 json{{"threshold_role", threshold_role}}};
  return run_stage(spec, [&](std::map<std::string, std::string>& outputs) {
    auto pool = read_quintuples(at("quintuples/distilled.jsonl"));
    if (std::filesystem::exists(at("quintuples/supplemented.jsonl"))) {
      auto sup = read_quintuples(at("quintuples/supplemented.jsonl"));
      pool.insert(pool.end(), sup.begin(), sup.end());
    }
    const auto lexicon = quality::Lexicon::load(config_.asset_dir / "lexicon");
    const auto stopwords = quality::StopwordSet::load(config_.asset_dir / "stopwords");

    std::vector<QuintupleRecord> relevant;
    std::vector<json> dropped;
    std::map<std::string, std::size_t> prohibited_by_group;
    for (auto& r : pool) {
      auto d = quality::detect_prohibited(r.question, r.task, lexicon);
      if (d.keep) {
        relevant.push_back(std::move(r));
        continue;
      }
      prohibited_by_group[r.task.display_name + "|" +
                          std::string(taskspec::to_string(r.language))]++;
      dropped.push_back({{"id", r.id}, {"rule", "prohibited-phrase"}, {"detail", d.phrase}});
    }
    const auto bias = quality::scan_frequency_bias(relevant, stopwords, config_.bias_threshold);
    const auto bias_seed = derive_seed(config_.seed, "bias-filter");
    auto filtered = quality::apply_bias_filter(relevant, bias, bias_seed, config_.bias_strict);
    for (const auto& r : filtered.removed) {
      dropped.push_back({{"id", r.id}, {"rule", "frequency-bias"}, {"detail", ""}});
    }
    write("filtered/synthesis.jsonl", jsonl_of(filtered.kept), outputs);
    write("filtered/removed.jsonl", jsonl(dropped), outputs);

    json counts{{"input", pool.size()},
                {"prohibited", relevant.size() < pool.size() ? pool.size() - relevant.size() : 0},
                {"prohibited_by_group", prohibited_by_group},
                {"bias_removed", filtered.removed.size()},
                {"kept", filtered.kept.size()},
                {"bias_seed", bias_seed}};
    json report{{"relevance", counts},
                {"bias_report", quality::to_json(bias)},
                {"bias_filter", quality::to_json(filtered)}};

    if (std::filesystem::exists(at(scored))) {
      const auto records = read_quintuples(at(scored));
      auto th = quality::threshold_filter(records, config_.relaxation_per_group);
      write("filtered/scored.jsonl", jsonl_of(th.kept), outputs);
      report["threshold"] = quality::to_json(th);
      json groups = json::array();
      for (const auto& g : th.groups) {
        groups.push_back({{"group", quality::to_json(g.key)}, {"applied_cutoff", g.cutoff},
                          {"score2", g.distribution.counts[1]}, {"total", g.distribution.total}});
      }
      counts["threshold"] = {{"source", threshold_role},
                             {"input", records.size()},
                             {"kept", th.kept.size()},
                             {"removed", th.removed.size()},
                             {"groups", groups}};
    }
    write("reports/filter.json", report.dump(2) + "\n", outputs);
    return counts;
  });
}

StageReport Pipeline::assemble() {
  StageSpec spec{"assemble", {"filtered/synthesis.jsonl"},
                 {"scored/strong.jsonl", "filtered/scored.jsonl"}, {}, json::object()};
  return run_stage(spec, [&](std::map<std::string, std::string>& outputs) {
    json counts = json::object();
    auto build = [&](const std::string& name, const std::string& rel, dataset::Mode mode) {
      const auto pool = read_quintuples(at(rel));
      const auto capped =
          dataset::downsample(pool, config_.caps, derive_seed(config_.seed, "downsample/" + name),
                              mode);
      const auto examples = dataset::assemble_sft(capped, mode, prompts());
      write("sft/assembled/" + name + ".jsonl", jsonl_of(examples), outputs);
      counts[name] = {{"pool", pool.size()},
                      {"capped", pool.size() - capped.size()},
                      {"examples", examples.size()}};
    };
    build("synthesis", "filtered/synthesis.jsonl", dataset::Mode::Synthesis);
    if (std::filesystem::exists(at("scored/strong.jsonl"))) {
      build("inspection", "scored/strong.jsonl", dataset::Mode::Inspection);
    }
    if (std::filesystem::exists(at("filtered/scored.jsonl"))) {
      build("domain", "filtered/scored.jsonl", dataset::Mode::Synthesis);
    }
    return counts;
  });
}

StageReport Pipeline::export_datasets() {
  StageSpec spec{"export", {"sft/assembled/synthesis.jsonl"},
                 {"sft/assembled/inspection.jsonl", "sft/assembled/domain.jsonl"}, {},
                 json::object()};
  return run_stage(spec, [&](std::map<std::string, std::string>& outputs) {
    json counts = json::object();
    json stage_counts = json::object();
    const json m = manifest();
    const json stages = m.value("stages", json::object());
    for (const auto& [stage, rec] : stages.items()) {
      stage_counts[stage] = rec.value("counts", json::object());
    }
    std::size_t rejects = 0;
    for (const auto& [stage, c] : stage_counts.items()) {
      if (c.is_object() && c.contains("rejected")) rejects += c["rejected"].get<std::size_t>();
    }
    json extra = provenance();
    extra["stage_counts"] = stage_counts;
    extra["reject_total"] = rejects;
    for (const std::string name : {"synthesis", "inspection", "domain"}) {
      const auto src = at("sft/assembled/" + name + ".jsonl");
      if (!std::filesystem::exists(src)) continue;
      std::vector<dataset::SftExample> examples;
      for (const auto& row : read_jsonl(src)) examples.push_back(dataset::sft_from_json(row));
      const auto data_rel = "sft/" + name + ".jsonl";
      const auto m2 = dataset::export_jsonl(examples, at(data_rel), extra);
      outputs[data_rel] = m2.sha256;
      const auto man_rel = "sft/" + name + ".manifest.json";
      outputs[man_rel] = sha256_hex(io::read_file(at(man_rel)));
      counts[name] = m2.count;
    }
    return counts;
  });
}

StageReport Pipeline::stats() {
  StageSpec spec{"stats", {"sft/synthesis.manifest.json"}, {"sft/inspection.manifest.json"}, {},
                 json::object()};
  return run_stage(spec, [&](std::map<std::string, std::string>& outputs) {
    dataset::DatasetStats stats;
    for (const std::string name : {"synthesis", "inspection"}) {
      const auto p = at("sft/" + name + ".manifest.json");
      if (!std::filesystem::exists(p)) continue;
      stats.add(dataset::manifest_from_json(json::parse(io::read_file(p))));
    }
    const auto table = dataset::summarize(stats);
    write("reports/stats.txt", table, outputs);
    write("reports/stats.json", dataset::stats_json(stats).dump(2) + "\n", outputs);
    return json{{"total_en", stats.total(Language::En)},
                {"total_zh", stats.total(Language::Zh)},
                {"table", table}};
  });
}

StageReport Pipeline::audit(const std::optional<std::filesystem::path>& input) {
  StageSpec spec{"audit", {}, {}, {}, json{{"role", "judge"}}};
  std::filesystem::path source;
  if (input) {
    source = *input;
    spec.external.push_back(source);
  } else {
    spec.inputs.push_back("quintuples/candidate.jsonl");
    source = at("quintuples/candidate.jsonl");
  }
  return run_stage(spec, [&](std::map<std::string, std::string>& outputs) {
    const auto records = read_quintuples(source);
    std::vector<quality::AuditQuestion> questions;
    for (const auto& r : records) questions.push_back({r.id, r.question, r.language});
    quality::InspectionOptions opts{config_.retry_budget, config_.parallelism};
    const auto result = quality::audit_independence(backend_for("judge"), prompts(), questions, opts);

    std::map<std::string, std::array<std::size_t, 3>> per_task;
    for (std::size_t i = 0; i < records.size(); ++i) {
      per_task[records[i].task.display_name][static_cast<std::size_t>(result.verdicts[i])]++;
    }
    json tasks = json::object();
    for (const auto& [task, c] : per_task) {
      const std::size_t decided = c[0] + c[1];
      tasks[task] = {{"independent", c[0]},
                     {"dependent", c[1]},
                     {"undecided", c[2]},
                     {"rate", decided ? static_cast<double>(c[1]) / static_cast<double>(decided)
                                      : 0.0}};
    }
    json counts = quality::to_json(result);
    counts["questions"] = questions.size();
    write("reports/audit.json", json{{"overall", counts}, {"tasks", tasks}}.dump(2) + "\n",
          outputs);
    return counts;
  });
}

std::vector<StageReport> Pipeline::run_all() {
  std::vector<StageReport> reports;
  reports.push_back(ingest());
  reports.push_back(pair());
  reports.push_back(synthesize(synthesis::Stage::Distilled));
  reports.push_back(supplement_logic());
  reports.push_back(synthesize(synthesis::Stage::Candidate));
  reports.push_back(inspect("strong"));
  reports.push_back(inspect("synthesizer"));
  reports.push_back(filter("synthesizer"));
  reports.push_back(assemble());
  reports.push_back(export_datasets());
  reports.push_back(stats());
  reports.push_back(audit());
  return reports;
}

}  // namespace aquilt::pipeline
