#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include "aquilt/backend.hpp"
#include "aquilt/error.hpp"
#include "aquilt/synthesis.hpp"
#include "testsupport.hpp"

using namespace aquilt;
using namespace aquilt::synthesis;
using nlohmann::json;
using taskspec::builtin;
using taskspec::TaskType;

namespace {

const taskspec::PromptRegistry& prompts() {
  static const auto r = taskspec::PromptRegistry::load(aquilt::testing::asset_dir() / "templates");
  return r;
}

// Scripted backend: returns bodies from a map keyed by full request id, or a
// default body.
class ScriptBackend final : public backend::Backend {
 public:
  ScriptBackend(std::map<std::string, std::string> bodies, std::string fallback)
      : Backend(backend::BackendProfile{}), bodies_(std::move(bodies)),
        fallback_(std::move(fallback)) {}
  std::vector<std::string> seen;

 protected:
  backend::CompletionResult do_complete(const backend::CompletionRequest& r) override {
    std::lock_guard lock(mu_);
    seen.push_back(r.request_id);
    auto it = bodies_.find(r.request_id);
    return {it == bodies_.end() ? fallback_ : it->second, {1, 1}};
  }

 private:
  std::mutex mu_;
  std::map<std::string, std::string> bodies_;
  std::string fallback_;
};

class ThrowingBackend final : public backend::Backend {
 public:
  ThrowingBackend() : Backend(backend::BackendProfile{}) {}

 protected:
  backend::CompletionResult do_complete(const backend::CompletionRequest&) override {
    throw TransportError("connection refused");
  }
};

corpus::Pairing pairing(const std::string& id, TaskType task, const std::string& text,
                        taskspec::Language lang = taskspec::Language::En) {
  corpus::Pairing p;
  p.id = id;
  p.record = {"rec-" + id, "src", lang, text, {}};
  p.task = builtin(task);
  p.seed = 1;
  return p;
}

backend::BackendProfile mock_profile(backend::MockFault fault = backend::MockFault::None) {
  backend::BackendProfile p;
  p.model_name = "mock-strong";
  p.fault = fault;
  return p;
}

}  // namespace

TEST(Extract, DirectTriple) {
  const auto g = parse_generation(R"({"question":"Q","thinking_steps":"T","answer":"A"})");
  EXPECT_EQ(g, (ParsedGeneration{"Q", "T", "A"}));
}

TEST(Extract, FencedInspectionWithStringScore) {
  const auto i = parse_inspection("Here you go:\n```json\n{\"analysis_steps\":\"ok\",\"score\":\"4\"}\n```");
  EXPECT_EQ(i.analysis, "ok");
  EXPECT_EQ(i.score, 4);
}

TEST(Extract, MissingThinkingStepsNamesKey) {
  try {
    parse_generation(R"({"question":"Q","answer":"A"})");
    FAIL();
  } catch (const SchemaError& e) {
    EXPECT_EQ(e.key(), "thinking_steps");
  }
}

TEST(Extract, NoObjectIsParseError) {
  EXPECT_THROW(parse_generation("I cannot help with that."), ParseError);
  EXPECT_THROW(parse_generation("{\"question\": \"unterminated"), ParseError);
  EXPECT_THROW(parse_generation(""), ParseError);
}

TEST(Extract, EmptyValueIsSchemaError) {
  EXPECT_THROW(parse_generation(R"({"question":"  ","thinking_steps":"T","answer":"A"})"),
               SchemaError);
  EXPECT_THROW(parse_logic(R"({"thought_process":""})"), SchemaError);
  EXPECT_THROW(parse_generation(R"({"question":null,"thinking_steps":"T","answer":"A"})"),
               SchemaError);
}

TEST(Extract, ScoreRange) {
  EXPECT_THROW(parse_inspection(R"({"analysis_steps":"a","score":7})"), RangeError);
  EXPECT_THROW(parse_inspection(R"({"analysis_steps":"a","score":0})"), RangeError);
  EXPECT_THROW(parse_inspection(R"({"analysis_steps":"a","score":"four"})"), RangeError);
  EXPECT_THROW(parse_inspection(R"({"analysis_steps":"a","score":3.5})"), RangeError);
  EXPECT_EQ(parse_inspection(R"({"analysis_steps":"a","score":5.0})").score, 5);
  EXPECT_EQ(parse_inspection(R"({"analysis_steps":"a","score":" 1 "})").score, 1);
}

TEST(Extract, UnquotedKeysFromInspectionPrompt) {
  const auto i = parse_inspection("{\nanalysis_steps: The answer is accurate and clear.,\nscore: 4\n}");
  EXPECT_EQ(i.score, 4);
  EXPECT_FALSE(i.analysis.empty());
}

TEST(Extract, TrimsValuesAndJoinsArrays) {
  const auto g = parse_generation(R"({"question":" Q ","thinking_steps":["1. a","2. b"],"answer":"A\n"})");
  EXPECT_EQ(g.question, "Q");
  EXPECT_EQ(g.thinking_steps, "1. a\n2. b");
  EXPECT_EQ(g.answer, "A");
}

TEST(Extract, FirstBalancedObjectWins) {
  const auto g = parse_generation(
      R"(prefix {"question":"first","thinking_steps":"T","answer":"A"} then {"question":"second","thinking_steps":"T","answer":"A"})");
  EXPECT_EQ(g.question, "first");
}

TEST(Extract, BracesInsideStrings) {
  const auto g = parse_generation(R"({"question":"What is {x}?","thinking_steps":"use \"}\"","answer":"{}"})");
  EXPECT_EQ(g.question, "What is {x}?");
  EXPECT_EQ(g.answer, "{}");
}

TEST(Extract, ProseInsensitivity) {
  const std::string payload = R"({"question":"Q","thinking_steps":"T","answer":"A"})";
  const auto bare = extract_structured(payload, Schema::GenerationTriple);
  for (const std::string pre : {"", "Sure!\n", "Here is the JSON:\n```json\n", "答案如下："}) {
    for (const std::string post : {"", "\n```", "\nHope this helps.", "。"}) {
      EXPECT_EQ(extract_structured(pre + payload + post, Schema::GenerationTriple), bare);
    }
  }
}

TEST(Extract, Verdicts) {
  EXPECT_EQ(parse_verdict("Yes."), Verdict::Yes);
  EXPECT_EQ(parse_verdict("  no, it stands alone"), Verdict::No);
  EXPECT_EQ(parse_verdict("\"YES\""), Verdict::Yes);
  EXPECT_EQ(parse_verdict("是的"), Verdict::Yes);
  EXPECT_EQ(parse_verdict("否"), Verdict::No);
  EXPECT_THROW(parse_verdict("Maybe"), ParseError);
  EXPECT_EQ(extract_structured("Yes", Schema::YesNo), (json{{"verdict", "yes"}}));
}

TEST(Extract, LogicAliases) {
  EXPECT_EQ(parse_logic(R"({"thought_process":"1. Read"})"), "1. Read");
  EXPECT_EQ(parse_logic(R"({"thinking_steps":"x"})"), "x");
}

TEST(Stage, Names) {
  for (auto s : {Stage::Distilled, Stage::Supplemented, Stage::Candidate}) {
    EXPECT_EQ(parse_stage(to_string(s)), s);
  }
  EXPECT_THROW(parse_stage("final"), ConfigError);
}

TEST(Quintuple, JsonRoundTrip) {
  QuintupleRecord r;
  r.id = "p-1";
  r.source_id = "rec";
  r.task = taskspec::resolve_task("memo", true, "Write a memo: ");
  r.language = taskspec::Language::Zh;
  r.unlabeled = "u";
  r.question = "q";
  r.logic = "l";
  r.answer = "a";
  r.provenance = {"m", "1", "p-1:distilled#1", Stage::Distilled};
  EXPECT_EQ(quintuple_from_json(to_json(r)), r);
  EXPECT_FALSE(to_json(r).contains("score"));
  r.score = 3;
  r.analysis = "fine";
  EXPECT_EQ(quintuple_from_json(to_json(r)), r);
}

TEST(Generate, HappyPathOverFixture) {
  ScriptBackend be({}, R"({"question":"Which city?","thinking_steps":"Recall.","answer":"Paris"})");
  const auto out = generate_quintuple(be, prompts(), pairing("p-1", TaskType::ClosedBookQa, "u"),
                                      Stage::Distilled);
  ASSERT_TRUE(out.record);
  EXPECT_FALSE(out.reject);
  EXPECT_EQ(out.record->provenance.stage, Stage::Distilled);
  EXPECT_EQ(out.record->question, "Which city?");
  EXPECT_EQ(out.record->logic, "Recall.");
  EXPECT_EQ(out.record->answer, "Paris");
  EXPECT_EQ(out.record->source_id, "rec-p-1");
  EXPECT_EQ(be.seen, (std::vector<std::string>{"p-1:distilled"}));
}

TEST(Generate, MalformedThenValidSucceedsOnSecondAttempt) {
  backend::MockBackend be(mock_profile(backend::MockFault::MalformedThenValid));
  const auto out = generate_quintuple(be, prompts(), pairing("p-1", TaskType::Nli, "Some text here."),
                                      Stage::Distilled, {2, true, 1});
  ASSERT_TRUE(out.record);
  EXPECT_FALSE(out.reject);
  EXPECT_EQ(out.record->provenance.request_id, "p-1:distilled#1");
}

TEST(Generate, AlwaysMalformedRejectsWithBothRawTexts) {
  backend::MockBackend be(mock_profile(backend::MockFault::Malformed));
  const auto out = generate_quintuple(be, prompts(), pairing("p-1", TaskType::Nli, "Some text."),
                                      Stage::Candidate, {2, true, 1});
  EXPECT_FALSE(out.record);
  ASSERT_TRUE(out.reject);
  EXPECT_EQ(out.reject->attempts.size(), 2u);
  EXPECT_EQ(out.reject->pairing_id, "p-1");
  EXPECT_FALSE(out.reject->reason.empty());
}

TEST(Generate, TransportErrorRejectsWithoutRetry) {
  ThrowingBackend be;
  const auto out = generate_quintuple(be, prompts(), pairing("p-1", TaskType::Nli, "x"),
                                      Stage::Distilled, {3, true, 1});
  ASSERT_TRUE(out.reject);
  EXPECT_TRUE(out.reject->attempts.empty());
  EXPECT_EQ(out.reject->reason.rfind("transport", 0), 0u);
}

TEST(Generate, NovelPrefixPrependedToQuestion) {
  ScriptBackend be({}, R"({"question":"What is due?","thinking_steps":"T","answer":"A"})");
  auto p = pairing("p-1", TaskType::ClosedBookQa, "u");
  p.task = taskspec::resolve_task("legal-translation", false, "Translate the provision: ");
  const auto out = generate_quintuple(be, prompts(), p, Stage::Distilled);
  ASSERT_TRUE(out.record);
  EXPECT_EQ(out.record->question, "Translate the provision: What is due?");
  SynthesisOptions no_prefix;
  no_prefix.prefix_question = false;
  const auto raw = generate_quintuple(be, prompts(), p, Stage::Distilled, no_prefix);
  EXPECT_EQ(raw.record->question, "What is due?");
}

TEST(Supplement, PreservesQuestionAndAnswer) {
  ScriptBackend be({}, R"({"thought_process":"1. Read the text."})");
  corpus::LabeledSeed seed{"s1", taskspec::Language::En, "Ada wrote notes.", "Who?", "Ada",
                           TaskType::ExtractiveQa};
  const auto out = supplement_logic(be, prompts(), seed);
  ASSERT_TRUE(out.record);
  EXPECT_EQ(out.record->logic, "1. Read the text.");
  EXPECT_EQ(out.record->question, "Who?");
  EXPECT_EQ(out.record->answer, "Ada");
  EXPECT_EQ(out.record->provenance.stage, Stage::Supplemented);
  EXPECT_EQ(out.record->source_id, "s1");
}

TEST(Supplement, ProseWrappedFence) {
  ScriptBackend be({}, "Sure.\n```json\n{\"thought_process\":\"step\"}\n```\nDone.");
  corpus::LabeledSeed seed{"s1", taskspec::Language::En, "t", "q", "a", TaskType::Nli};
  EXPECT_EQ(supplement_logic(be, prompts(), seed).record->logic, "step");
}

TEST(Supplement, EmptyLogicRetries) {
  ScriptBackend be({{"s1:supplemented", R"({"thought_process":""})"}},
                   R"({"thought_process":"second"})");
  corpus::LabeledSeed seed{"s1", taskspec::Language::En, "t", "q", "a", TaskType::Nli};
  const auto out = supplement_logic(be, prompts(), seed);
  ASSERT_TRUE(out.record);
  EXPECT_EQ(out.record->logic, "second");
  EXPECT_EQ(be.seen.size(), 2u);
}

TEST(Batch, RecordsPlusRejectsEqualPairingsAndOrderIsStable) {
  auto prof = mock_profile(backend::MockFault::Malformed);
  prof.fault_rate = 0.3;
  std::vector<corpus::Pairing> ps;
  for (int i = 0; i < 120; ++i) {
    ps.push_back(pairing("p-" + std::to_string(i), taskspec::kAllTasks[i % 10],
                         "Text " + std::to_string(i) + " on harbour engineering.",
                         i % 2 ? taskspec::Language::Zh : taskspec::Language::En));
  }
  backend::MockBackend a(prof), b(prof);
  const auto serial = synthesize(a, prompts(), ps, Stage::Distilled, {2, true, 1});
  const auto parallel = synthesize(b, prompts(), ps, Stage::Distilled, {2, true, 8});
  EXPECT_EQ(serial.records.size() + serial.rejects.size(), ps.size());
  EXPECT_GT(serial.rejects.size(), 0u);
  EXPECT_GT(serial.records.size(), 0u);
  EXPECT_EQ(serial.records, parallel.records);
  for (std::size_t i = 1; i < serial.records.size(); ++i) {
    EXPECT_LT(std::stoi(serial.records[i - 1].id.substr(2)), std::stoi(serial.records[i].id.substr(2)));
  }
}
