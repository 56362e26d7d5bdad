#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include "aquilt/error.hpp"
#include "aquilt/taskspec.hpp"
#include "testsupport.hpp"

using namespace aquilt;
using namespace aquilt::taskspec;

namespace {

const PromptRegistry& registry() {
  static const PromptRegistry r = PromptRegistry::load(aquilt::testing::asset_dir() / "templates");
  return r;
}

std::size_t occurrences(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1)) ++n;
  return n;
}

}  // namespace

TEST(TaskType, ExactlyTenVariantsWithRoundTripNames) {
  EXPECT_EQ(kAllTasks.size(), 10u);
  for (auto t : kAllTasks) EXPECT_EQ(parse_task(to_string(t)), t);
  EXPECT_THROW(parse_task("poetry"), ConfigError);
}

TEST(TaskType, ContextFreeFlag) {
  std::vector<TaskType> free;
  for (auto t : kAllTasks) {
    if (is_context_free(t)) free.push_back(t);
  }
  EXPECT_EQ(free, (std::vector<TaskType>{TaskType::MultiChoiceSingle, TaskType::MultiChoiceMulti,
                                         TaskType::ClosedBookQa}));
}

TEST(TaskType, TableLabels) {
  const std::vector<std::string> expected{
      "Extractive QA",         "Natural Language Inference",
      "Multi-Choice QA (Single Answer)", "Multi-Choice QA (Multiple Answers)",
      "Text Generation",       "Text Summarization",
      "Text Classification",   "Natural Language Understanding",
      "Open-Book QA",          "Closed-Book QA"};
  for (std::size_t i = 0; i < kAllTasks.size(); ++i) {
    EXPECT_EQ(table_label(kAllTasks[i]), expected[i]);
  }
}

TEST(Language, ParseAndPrint) {
  EXPECT_EQ(parse_language("en"), Language::En);
  EXPECT_EQ(parse_language("zh"), Language::Zh);
  EXPECT_THROW(parse_language("fr"), ConfigError);
  EXPECT_EQ(to_string(Language::Zh), "zh");
}

TEST(ResolveTask, BuiltinPassthrough) {
  const auto r = resolve_task("summarization", true, std::nullopt);
  EXPECT_EQ(r.base, TaskType::Summarization);
  EXPECT_FALSE(r.prefix);
  EXPECT_FALSE(r.is_novel());
}

TEST(ResolveTask, NovelContextFreeMapsToClosedBook) {
  const std::string prefix = "Please translate the following legal provision into English: ";
  const auto r = resolve_task("legal-translation", false, prefix);
  EXPECT_EQ(r.base, TaskType::ClosedBookQa);
  EXPECT_EQ(r.prefix, prefix);
  EXPECT_EQ(r.display_name, "legal-translation");
}

TEST(ResolveTask, NovelContextualMapsToOpenBook) {
  const auto r = resolve_task("contract-review", true, "Review the clause and list risks: ");
  EXPECT_EQ(r.base, TaskType::OpenBookQa);
  EXPECT_TRUE(r.is_novel());
}

TEST(ResolveTask, NovelWithoutPrefixIsConfigError) {
  EXPECT_THROW(resolve_task("contract-review", true, std::nullopt), ConfigError);
  EXPECT_THROW(resolve_task("contract-review", true, std::string("  ")), ConfigError);
}

TEST(ResolveTask, JsonRoundTrip) {
  const auto r = resolve_task("contract-review", true, "Review: ");
  EXPECT_EQ(task_from_json(to_json(r)), r);
  EXPECT_EQ(task_from_json(nlohmann::json("nli")), builtin(TaskType::Nli));
}

TEST(ResolveTask, QuestionPrefixAppliedOnce) {
  const auto r = resolve_task("contract-review", true, "Review: ");
  EXPECT_EQ(apply_question_prefix(r, "What is risky?"), "Review: What is risky?");
  EXPECT_EQ(apply_question_prefix(r, "Review: What is risky?"), "Review: What is risky?");
  EXPECT_EQ(apply_question_prefix(builtin(TaskType::Nli), "Q?"), "Q?");
}

TEST(Prompts, GenerationTemplateForEveryTaskAndLanguage) {
  for (auto t : kAllTasks) {
    for (auto l : kLanguages) {
      EXPECT_TRUE(registry().contains(PromptKind::Generation, t, l)) << to_string(t);
      EXPECT_TRUE(registry().contains(PromptKind::MetaGeneration, t, l)) << to_string(t);
      const auto out = registry().render(PromptKind::Generation, builtin(t), l, {{"u", "TEXT"}});
      EXPECT_NE(out.find("TEXT"), std::string::npos);
    }
  }
}

TEST(Prompts, SingleChoiceOpening) {
  const auto out = registry().render(PromptKind::Generation, builtin(TaskType::MultiChoiceSingle),
                                     Language::En, {{"u", "x"}});
  EXPECT_EQ(out.rfind("Please generate a single-choice question from the provided reference "
                      "materials",
                      0),
            0u);
}

TEST(Prompts, InspectionCarriesScoringCriteria) {
  const auto out = registry().render(
      PromptKind::Inspection, builtin(TaskType::Nli), Language::En,
      {{"u", "u"}, {"q", "q"}, {"l", "l"}, {"a", "a"}});
  EXPECT_NE(out.find("The scoring criteria are as follows"), std::string::npos);
  EXPECT_NE(out.find("1 point - Low quality"), std::string::npos);
  EXPECT_NE(out.find("5 points"), std::string::npos);
}

TEST(Prompts, MissingPlaceholderNamesIt) {
  try {
    (void)registry().render(PromptKind::Generation, builtin(TaskType::Summarization),
                            Language::En, {});
    FAIL() << "expected RenderError";
  } catch (const RenderError& e) {
    EXPECT_EQ(e.placeholder(), "u");
  }
}

TEST(Prompts, MissingTemplateIsLookupError) {
  EXPECT_THROW((void)registry().render(PromptKind::Evaluation, builtin(TaskType::Nlu),
                                       Language::En, {{"q", "x"}}),
               LookupError);
}

TEST(Prompts, RenderingIsByteStable) {
  const auto task = resolve_task("contract-review", true, "Review the clause: ");
  const auto a = registry().render(PromptKind::Generation, task, Language::Zh, {{"u", "文本"}});
  const auto b = registry().render(PromptKind::Generation, task, Language::Zh, {{"u", "文本"}});
  EXPECT_EQ(a, b);
}

TEST(Prompts, NovelPrefixAppearsExactlyOnce) {
  const std::string prefix = "Review the clause and list risks: ";
  for (bool ctx : {true, false}) {
    const auto task = resolve_task("contract-review", ctx, prefix);
    for (auto kind : {PromptKind::Generation, PromptKind::MetaGeneration}) {
      for (auto l : kLanguages) {
        const auto out = registry().render(kind, task, l, {{"u", "body"}});
        EXPECT_EQ(occurrences(out, prefix), 1u) << to_string(kind);
      }
    }
  }
}

TEST(Prompts, ValuesAreNotReexpanded) {
  const auto out = registry().render(PromptKind::Generation, builtin(TaskType::Nli), Language::En,
                                     {{"u", "${u} ${t}"}});
  EXPECT_NE(out.find("${u} ${t}"), std::string::npos);
}

TEST(Prompts, ChecksumMismatchRejected) {
  aquilt::testing::TempDir dir("tmpl");
  dir.write("generation/nli/en.txt", "Body ${u}");
  dir.write("manifest.json", R"({"version":"x","templates":[{"kind":"generation","task":"nli",
    "language":"en","path":"generation/nli/en.txt","version":"1","sha256":"00"}]})");
  EXPECT_THROW(PromptRegistry::load(dir.path()), ConfigError);
}

TEST(Prompts, ManifestVersionsRecorded) {
  EXPECT_EQ(registry().version(), "1.0.0");
  const auto v = registry().versions();
  EXPECT_EQ(v.size(), registry().size());
  EXPECT_TRUE(v.contains("generation/nli/en.txt"));
}

TEST(Prompts, RequiredPlaceholders) {
  EXPECT_EQ(required_placeholders(PromptKind::Generation), (std::vector<std::string>{"u"}));
  EXPECT_EQ(required_placeholders(PromptKind::LogicSupplement),
            (std::vector<std::string>{"u", "q", "a"}));
  EXPECT_EQ(required_placeholders(PromptKind::Inspection),
            (std::vector<std::string>{"u", "q", "l", "a"}));
  EXPECT_EQ(required_placeholders(PromptKind::IndependenceJudge), (std::vector<std::string>{"q"}));
}
