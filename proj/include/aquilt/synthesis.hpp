#pragma once

// Structured-output extraction and the generation calls: quintuple
// generation (distilled or candidate) and logic supplementation for seeds.

#include <nlohmann/json_fwd.hpp>

#include <algorithm>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aquilt/backend.hpp"
#include "aquilt/corpus.hpp"
#include "aquilt/error.hpp"
#include "aquilt/taskspec.hpp"

namespace aquilt::synthesis {

using taskspec::Language;
using taskspec::ResolvedTask;

enum class Schema { GenerationTriple, InspectionPair, YesNo, Logic };

struct ParsedGeneration {
  std::string question;
  std::string thinking_steps;
  std::string answer;
  bool operator==(const ParsedGeneration&) const = default;
};

struct ParsedInspection {
  std::string analysis;
  int score = 0;
  bool operator==(const ParsedInspection&) const = default;
};

enum class Verdict { No, Yes };

// The first balanced {...} span in `text` that parses as a JSON object.
// Throws ParseError when there is none.
nlohmann::json locate_json_object(std::string_view text);

// Throw ParseError (nothing to parse), SchemaError (missing or empty key,
// named in key()) or RangeError (score outside 1..5 or not an integer).
ParsedGeneration parse_generation(std::string_view text);
ParsedInspection parse_inspection(std::string_view text);
std::string parse_logic(std::string_view text);
// Leading-token match: yes/no (any case) or 是/否.
Verdict parse_verdict(std::string_view text);

// Schema-dispatched form of the parsers above, returning a normalized object:
// {question, thinking_steps, answer} | {analysis_steps, score} |
// {verdict: "yes"|"no"} | {thought_process}.
nlohmann::json extract_structured(std::string_view text, Schema schema);

enum class Stage { Distilled, Supplemented, Candidate };

std::string_view to_string(Stage stage);
Stage parse_stage(std::string_view name);

struct Provenance {
  std::string model_name;
  std::string template_version;
  std::string request_id;
  Stage stage = Stage::Distilled;
  bool operator==(const Provenance&) const = default;
};

struct QuintupleRecord {
  std::string id;
  std::string source_id;  // unlabeled record or seed id
  ResolvedTask task;
  Language language = Language::En;
  std::string unlabeled;
  std::string question;
  std::string logic;
  std::string answer;
  std::optional<int> score;
  std::string analysis;  // scorer's reasoning, kept for inspection SFT targets
  Provenance provenance;

  bool operator==(const QuintupleRecord&) const = default;
};

nlohmann::json to_json(const QuintupleRecord& record);
QuintupleRecord quintuple_from_json(const nlohmann::json& j);

struct RejectEntry {
  std::string pairing_id;
  ResolvedTask task;
  Language language = Language::En;
  std::vector<std::string> attempts;
  std::string reason;
};

nlohmann::json to_json(const RejectEntry& entry);
RejectEntry reject_from_json(const nlohmann::json& j);

struct SynthesisOptions {
  // Total attempts per item, first try included.
  int retry_budget = 3;
  // Prepend a novel task's prefix to the parsed question.
  bool prefix_question = true;
  std::size_t parallelism = 4;
};

struct Outcome {
  std::optional<QuintupleRecord> record;
  std::optional<RejectEntry> reject;
};

struct BatchResult {
  std::vector<QuintupleRecord> records;
  std::vector<RejectEntry> rejects;
};

// Request id for attempt n of an item: "<base>" for n = 0, "<base>#n" after.
std::string attempt_request_id(std::string_view base, int attempt);

// Sends the request up to `budget` times, re-parsing each reply with
// `parse`. Parse, schema and range failures trigger a retry; transport
// failures end the loop. Raw replies are appended to `raw`.
template <typename Parse>
auto complete_with_retries(backend::Backend& backend, backend::CompletionRequest request,
                           int budget, Parse&& parse, std::vector<std::string>& raw,
                           std::string& reason) -> std::optional<decltype(parse(std::string()))> {
  const std::string base = request.request_id;
  for (int attempt = 0; attempt < std::max(1, budget); ++attempt) {
    request.request_id = attempt_request_id(base, attempt);
    std::string text;
    try {
      text = backend.complete(request).text;
    } catch (const TransportError& e) {
      reason = std::string("transport: ") + e.what();
      return std::nullopt;
    } catch (const ProtocolError& e) {
      reason = std::string("protocol: ") + e.what();
      return std::nullopt;
    }
    raw.push_back(text);
    try {
      return parse(text);
    } catch (const ParseError& e) {
      reason = std::string("parse: ") + e.what();
    } catch (const SchemaError& e) {
      reason = std::string("schema: ") + e.what();
    } catch (const RangeError& e) {
      reason = std::string("range: ") + e.what();
    }
  }
  return std::nullopt;
}

// Distilled records use the meta-generation prompt; candidates use the task
// prompt the synthesis model was trained on.
taskspec::PromptKind generation_prompt_kind(Stage stage);

Outcome generate_quintuple(backend::Backend& backend, const taskspec::PromptRegistry& prompts,
                           const corpus::Pairing& pairing, Stage stage,
                           const SynthesisOptions& options = {});

Outcome supplement_logic(backend::Backend& backend, const taskspec::PromptRegistry& prompts,
                         const corpus::LabeledSeed& seed, const SynthesisOptions& options = {});

// Bounded-parallel batch; output is in input order regardless of scheduling.
BatchResult synthesize(backend::Backend& backend, const taskspec::PromptRegistry& prompts,
                       std::span<const corpus::Pairing> pairings, Stage stage,
                       const SynthesisOptions& options = {});

BatchResult supplement_all(backend::Backend& backend, const taskspec::PromptRegistry& prompts,
                           std::span<const corpus::LabeledSeed> seeds,
                           const SynthesisOptions& options = {});

}  // namespace aquilt::synthesis
