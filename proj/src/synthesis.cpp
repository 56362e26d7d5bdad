#include "aquilt/synthesis.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <initializer_list>
#include <regex>

#include "aquilt/text.hpp"
#include "aquilt/util.hpp"

namespace aquilt::synthesis {

using nlohmann::json;
using taskspec::PromptKind;

namespace {

// End of the balanced object starting at text[open], or npos.
std::size_t balanced_end(std::string_view text, std::size_t open) {
  int depth = 0;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = open; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}') {
      if (--depth == 0) return i;
    }
  }
  return std::string_view::npos;
}

std::optional<std::string> as_text(const json& v) {
  switch (v.type()) {
    case json::value_t::string:
      return text::trim(v.get<std::string>());
    case json::value_t::array: {
      std::string out;
      for (const auto& item : v) {
        auto s = as_text(item);
        if (!s || s->empty()) continue;
        if (!out.empty()) out += '\n';
        out += *s;
      }
      return out;
    }
    case json::value_t::null:
    case json::value_t::discarded:
      return std::nullopt;
    case json::value_t::boolean:
      return v.get<bool>() ? "true" : "false";
    default:
      return v.dump();
  }
}

// First present key among `keys`; SchemaError names keys[0] otherwise.
std::string required(const json& obj, std::initializer_list<std::string_view> keys) {
  for (auto key : keys) {
    auto it = obj.find(std::string(key));
    if (it == obj.end()) continue;
    auto value = as_text(*it);
    if (value && !value->empty()) return *value;
  }
  const std::string name(*keys.begin());
  throw SchemaError(name, "required key `" + name + "` is missing or empty");
}

int coerce_score(const json& obj) {
  auto it = obj.find("score");
  if (it == obj.end() || it->is_null()) {
    throw SchemaError("score", "required key `score` is missing or empty");
  }
  long long value = 0;
  if (it->is_number_integer()) {
    value = it->get<long long>();
  } else if (it->is_number_float()) {
    const double d = it->get<double>();
    if (std::floor(d) != d) throw RangeError("score " + it->dump() + " is not an integer");
    value = static_cast<long long>(d);
  } else if (it->is_string()) {
    const std::string s = text::trim(it->get<std::string>());
    if (s.empty()) throw SchemaError("score", "required key `score` is missing or empty");
    if (s.size() > 6 || !std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; })) {
      throw RangeError("score \"" + s + "\" is not an integer");
    }
    value = std::stoll(s);
  } else {
    throw RangeError("score " + it->dump() + " is not an integer");
  }
  if (value < 1 || value > 5) {
    throw RangeError("score " + std::to_string(value) + " outside 1..5");
  }
  return static_cast<int>(value);
}

// Scorers often echo the prompt's unquoted `analysis_steps: ..., score: ...`
// layout. Recovered only when strict JSON fails.
std::optional<json> relaxed_inspection(std::string_view text) {
  static const std::regex score_re(R"re(score"?\s*[:：]\s*"?\s*([0-9]+(?:\.[0-9]+)?))re");
  static const std::regex analysis_re(
      R"re(analysis_steps"?\s*[:：]\s*"?([\s\S]*?)"?\s*,?\s*\n?\s*"?score)re");
  const std::string s(text);
  std::smatch score_m;
  std::smatch analysis_m;
  if (!std::regex_search(s, score_m, score_re) || !std::regex_search(s, analysis_m, analysis_re)) {
    return std::nullopt;
  }
  return json{{"analysis_steps", analysis_m[1].str()}, {"score", score_m[1].str()}};
}

}  // namespace

json locate_json_object(std::string_view text) {
  for (std::size_t open = text.find('{'); open != std::string_view::npos;
       open = text.find('{', open + 1)) {
    const std::size_t close = balanced_end(text, open);
    if (close == std::string_view::npos) continue;
    json parsed = json::parse(text.substr(open, close - open + 1), nullptr, false);
    if (!parsed.is_discarded() && parsed.is_object()) return parsed;
  }
  throw ParseError("no JSON object found in model output");
}

ParsedGeneration parse_generation(std::string_view text) {
  const json obj = locate_json_object(text);
  ParsedGeneration g;
  g.question = required(obj, {"question"});
  g.thinking_steps = required(obj, {"thinking_steps", "thought_process", "thought process"});
  g.answer = required(obj, {"answer"});
  return g;
}

ParsedInspection parse_inspection(std::string_view text) {
  json obj;
  try {
    obj = locate_json_object(text);
  } catch (const ParseError&) {
    auto relaxed = text.find('{') != std::string_view::npos ? relaxed_inspection(text)
                                                            : std::nullopt;
    if (!relaxed) throw;
    obj = std::move(*relaxed);
  }
  ParsedInspection p;
  p.analysis = required(obj, {"analysis_steps", "analysis"});
  p.score = coerce_score(obj);
  return p;
}

std::string parse_logic(std::string_view text) {
  const json obj = locate_json_object(text);
  return required(obj, {"thought_process", "thinking_steps", "thought process"});
}

Verdict parse_verdict(std::string_view raw) {
  std::string s = text::trim(raw);
  const auto cps = text::decode_utf8(s);
  std::size_t i = 0;
  auto skippable = [](char32_t c) {
    return c == U'"' || c == U'\'' || c == U'*' || c == U'`' || c == U'(' || c == U'[' ||
           c == U'「' || c == U'『' || c == U'（' || c == U'“' || c == U' ' || c == U'\n' ||
           c == U'\t' || c == U'\r';
  };
  while (i < cps.size() && skippable(cps[i])) ++i;
  if (i < cps.size() && cps[i] == U'是') return Verdict::Yes;
  if (i < cps.size() && cps[i] == U'否') return Verdict::No;
  std::string word;
  for (; i < cps.size() && cps[i] < 0x80 && std::isalpha(static_cast<int>(cps[i])); ++i) {
    word += static_cast<char>(std::tolower(static_cast<int>(cps[i])));
  }
  if (word == "yes") return Verdict::Yes;
  if (word == "no") return Verdict::No;
  throw ParseError("no yes/no verdict at the start of: " + s.substr(0, 80));
}

json extract_structured(std::string_view text, Schema schema) {
  switch (schema) {
    case Schema::GenerationTriple: {
      auto g = parse_generation(text);
      return json{{"question", g.question}, {"thinking_steps", g.thinking_steps}, {"answer", g.answer}};
    }
    case Schema::InspectionPair: {
      auto p = parse_inspection(text);
      return json{{"analysis_steps", p.analysis}, {"score", p.score}};
    }
    case Schema::YesNo:
      return json{{"verdict", parse_verdict(text) == Verdict::Yes ? "yes" : "no"}};
    case Schema::Logic:
      return json{{"thought_process", parse_logic(text)}};
  }
  throw ParseError("unknown schema");
}

std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::Distilled: return "distilled";
    case Stage::Supplemented: return "supplemented";
    case Stage::Candidate: return "candidate";
  }
  return "distilled";
}

Stage parse_stage(std::string_view name) {
  if (name == "distilled") return Stage::Distilled;
  if (name == "supplemented") return Stage::Supplemented;
  if (name == "candidate") return Stage::Candidate;
  throw ConfigError("unknown stage '" + std::string(name) + "'");
}

json to_json(const QuintupleRecord& r) {
  json j{{"id", r.id},
         {"source_id", r.source_id},
         {"task", taskspec::to_json(r.task)},
         {"language", taskspec::to_string(r.language)},
         {"unlabeled", r.unlabeled},
         {"question", r.question},
         {"logic", r.logic},
         {"answer", r.answer},
         {"provenance",
          {{"model", r.provenance.model_name},
           {"template_version", r.provenance.template_version},
           {"request_id", r.provenance.request_id},
           {"stage", to_string(r.provenance.stage)}}}};
  if (r.score) j["score"] = *r.score;
  if (!r.analysis.empty()) j["analysis"] = r.analysis;
  return j;
}

QuintupleRecord quintuple_from_json(const json& j) {
  QuintupleRecord r;
  r.id = j.at("id").get<std::string>();
  r.source_id = j.value("source_id", "");
  r.task = taskspec::task_from_json(j.at("task"));
  r.language = taskspec::parse_language(j.at("language").get<std::string>());
  r.unlabeled = j.at("unlabeled").get<std::string>();
  r.question = j.at("question").get<std::string>();
  r.logic = j.at("logic").get<std::string>();
  r.answer = j.at("answer").get<std::string>();
  if (j.contains("score")) {
    const int s = j["score"].get<int>();
    if (s < 1 || s > 5) throw RangeError("stored score outside 1..5 in record " + r.id);
    r.score = s;
  }
  r.analysis = j.value("analysis", "");
  const auto& p = j.at("provenance");
  r.provenance.model_name = p.value("model", "");
  r.provenance.template_version = p.value("template_version", "");
  r.provenance.request_id = p.value("request_id", "");
  r.provenance.stage = parse_stage(p.value("stage", "distilled"));
  return r;
}

json to_json(const RejectEntry& e) {
  return json{{"pairing_id", e.pairing_id},
              {"task", taskspec::to_json(e.task)},
              {"language", taskspec::to_string(e.language)},
              {"attempts", e.attempts},
              {"reason", e.reason}};
}

RejectEntry reject_from_json(const json& j) {
  RejectEntry e;
  e.pairing_id = j.at("pairing_id").get<std::string>();
  e.task = taskspec::task_from_json(j.at("task"));
  e.language = taskspec::parse_language(j.at("language").get<std::string>());
  e.attempts = j.at("attempts").get<std::vector<std::string>>();
  e.reason = j.value("reason", "");
  return e;
}

std::string attempt_request_id(std::string_view base, int attempt) {
  std::string id(base);
  if (attempt > 0) id += "#" + std::to_string(attempt);
  return id;
}

PromptKind generation_prompt_kind(Stage stage) {
  return stage == Stage::Distilled ? PromptKind::MetaGeneration : PromptKind::Generation;
}

Outcome generate_quintuple(backend::Backend& backend, const taskspec::PromptRegistry& prompts,
                           const corpus::Pairing& pairing, Stage stage,
                           const SynthesisOptions& options) {
  if (stage == Stage::Supplemented) {
    throw PreconditionError("supplemented records come from supplement_logic");
  }
  const PromptKind kind = generation_prompt_kind(stage);
  const Language lang = pairing.record.language;
  const auto& tmpl = prompts.find(kind, pairing.task.base, lang);
  backend::CompletionRequest request{
      prompts.render(kind, pairing.task, lang, {{"u", pairing.record.text}}),
      pairing.id + ":" + std::string(to_string(stage)),
      {std::string(taskspec::to_string(kind)), pairing.task.base, lang}};

  std::vector<std::string> raw;
  std::string reason;
  auto parsed = complete_with_retries(backend, request, options.retry_budget, parse_generation,
                                      raw, reason);
  Outcome out;
  if (!parsed) {
    out.reject = RejectEntry{pairing.id, pairing.task, lang, std::move(raw), std::move(reason)};
    return out;
  }
  QuintupleRecord r;
  r.id = pairing.id;
  r.source_id = pairing.record.id;
  r.task = pairing.task;
  r.language = lang;
  r.unlabeled = pairing.record.text;
  r.question = options.prefix_question
                   ? taskspec::apply_question_prefix(pairing.task, std::move(parsed->question))
                   : std::move(parsed->question);
  r.logic = std::move(parsed->thinking_steps);
  r.answer = std::move(parsed->answer);
  r.provenance = {backend.profile().model_name, tmpl.version,
                  attempt_request_id(request.request_id, static_cast<int>(raw.size()) - 1), stage};
  out.record = std::move(r);
  return out;
}

Outcome supplement_logic(backend::Backend& backend, const taskspec::PromptRegistry& prompts,
                         const corpus::LabeledSeed& seed, const SynthesisOptions& options) {
  const auto task = taskspec::builtin(seed.task);
  const PromptKind kind = PromptKind::LogicSupplement;
  const auto& tmpl = prompts.find(kind, seed.task, seed.language);
  backend::CompletionRequest request{
      prompts.render(kind, task, seed.language,
                     {{"u", seed.text}, {"q", seed.question}, {"a", seed.answer}}),
      seed.id + ":supplemented",
      {std::string(taskspec::to_string(kind)), seed.task, seed.language}};

  std::vector<std::string> raw;
  std::string reason;
  auto logic =
      complete_with_retries(backend, request, options.retry_budget, parse_logic, raw, reason);
  Outcome out;
  if (!logic) {
    out.reject = RejectEntry{seed.id, task, seed.language, std::move(raw), std::move(reason)};
    return out;
  }
  QuintupleRecord r;
  r.id = seed.id;
  r.source_id = seed.id;
  r.task = task;
  r.language = seed.language;
  r.unlabeled = seed.text;
  r.question = seed.question;
  r.logic = std::move(*logic);
  r.answer = seed.answer;
  r.provenance = {backend.profile().model_name, tmpl.version,
                  attempt_request_id(request.request_id, static_cast<int>(raw.size()) - 1),
                  Stage::Supplemented};
  out.record = std::move(r);
  return out;
}

namespace {

template <typename Item, typename Fn>
BatchResult run_batch(backend::Backend& backend, std::span<const Item> items,
                      const SynthesisOptions& options, Fn&& fn) {
  std::vector<Outcome> outcomes(items.size());
  const std::size_t bound = std::min(options.parallelism, backend.profile().parallelism);
  parallel_for(items.size(), bound, [&](std::size_t i) { outcomes[i] = fn(items[i]); });
  BatchResult result;
  for (auto& o : outcomes) {
    if (o.record) result.records.push_back(std::move(*o.record));
    if (o.reject) result.rejects.push_back(std::move(*o.reject));
  }
  return result;
}

}  // namespace

BatchResult synthesize(backend::Backend& backend, const taskspec::PromptRegistry& prompts,
                       std::span<const corpus::Pairing> pairings, Stage stage,
                       const SynthesisOptions& options) {
  return run_batch(backend, pairings, options, [&](const corpus::Pairing& p) {
    return generate_quintuple(backend, prompts, p, stage, options);
  });
}

BatchResult supplement_all(backend::Backend& backend, const taskspec::PromptRegistry& prompts,
                           std::span<const corpus::LabeledSeed> seeds,
                           const SynthesisOptions& options) {
  return run_batch(backend, seeds, options, [&](const corpus::LabeledSeed& s) {
    return supplement_logic(backend, prompts, s, options);
  });
}

}  // namespace aquilt::synthesis
