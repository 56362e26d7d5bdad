#include "aquilt/taskspec.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>

#include "aquilt/error.hpp"
#include "aquilt/text.hpp"
#include "aquilt/util.hpp"

namespace aquilt::taskspec {
namespace {

struct TaskInfo {
  TaskType task;
  std::string_view name;
  std::string_view label;
  std::string_view prompt_en;
  std::string_view prompt_zh;
};

constexpr std::array<TaskInfo, 10> kTaskInfo{{
    {TaskType::ExtractiveQa, "extractive-qa", "Extractive QA", "extractive QA", "抽取式问答"},
    {TaskType::Nli, "nli", "Natural Language Inference", "natural language inference",
     "自然语言推理"},
    {TaskType::MultiChoiceSingle, "multi-choice-single", "Multi-Choice QA (Single Answer)",
     "single-choice", "单项选择"},
    {TaskType::MultiChoiceMulti, "multi-choice-multi", "Multi-Choice QA (Multiple Answers)",
     "multi-choice", "多项选择"},
    {TaskType::TextGeneration, "text-generation", "Text Generation", "text generation",
     "文本生成"},
    {TaskType::Summarization, "summarization", "Text Summarization", "text summarization",
     "文本摘要"},
    {TaskType::TextClassification, "text-classification", "Text Classification",
     "text classification", "文本分类"},
    {TaskType::Nlu, "nlu", "Natural Language Understanding", "natural language understanding",
     "自然语言理解"},
    {TaskType::OpenBookQa, "open-book-qa", "Open-Book QA", "open-book", "开卷问答"},
    {TaskType::ClosedBookQa, "closed-book-qa", "Closed-Book QA", "closed-book", "闭卷问答"},
}};

const TaskInfo& info(TaskType task) {
  return kTaskInfo[static_cast<std::size_t>(task)];
}

constexpr std::array<std::string_view, 7> kKindNames{
    "generation",         "meta-generation", "logic-supplement", "inspection",
    "self-inspection",    "independence-judge", "evaluation",
};

constexpr std::string_view kAnyTask = "any";

bool is_ident(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
         c == '_';
}

// Calls on_text for literal runs and on_placeholder for each `${name}`.
template <typename TextFn, typename PlaceholderFn>
void scan_template(std::string_view body, TextFn on_text, PlaceholderFn on_placeholder) {
  std::size_t pos = 0;
  while (pos < body.size()) {
    auto open = body.find("${", pos);
    if (open == std::string_view::npos) break;
    auto end = open + 2;
    while (end < body.size() && is_ident(body[end])) ++end;
    if (end < body.size() && body[end] == '}' && end > open + 2) {
      on_text(body.substr(pos, open - pos));
      on_placeholder(body.substr(open + 2, end - open - 2));
      pos = end + 1;
    } else {
      on_text(body.substr(pos, open + 2 - pos));
      pos = open + 2;
    }
  }
  on_text(body.substr(pos));
}

std::string prefix_instruction(Language lang, const std::string& prefix) {
  if (lang == Language::Zh) {
    return "你创建的问题必须以下面的任务指令作为前缀：" + prefix + "\n";
  }
  return "The question you create must begin with the following task instruction as a "
         "prefix: " +
         prefix + "\n";
}

}  // namespace

std::string_view to_string(Language lang) {
  return lang == Language::En ? "en" : "zh";
}

Language parse_language(std::string_view code) {
  if (code == "en") return Language::En;
  if (code == "zh") return Language::Zh;
  throw ConfigError("unsupported language '" + std::string(code) + "' (expected en or zh)");
}

std::string_view to_string(TaskType task) { return info(task).name; }

std::optional<TaskType> find_task(std::string_view name) {
  for (const auto& t : kTaskInfo) {
    if (t.name == name) return t.task;
  }
  return std::nullopt;
}

TaskType parse_task(std::string_view name) {
  if (auto t = find_task(name)) return *t;
  throw ConfigError("unknown task type '" + std::string(name) + "'");
}

std::string_view table_label(TaskType task) { return info(task).label; }

std::string_view prompt_label(TaskType task, Language lang) {
  return lang == Language::Zh ? info(task).prompt_zh : info(task).prompt_en;
}

ResolvedTask builtin(TaskType task) {
  return ResolvedTask{task, std::nullopt, std::string(to_string(task))};
}

ResolvedTask resolve_task(std::string_view name, bool requires_context,
                          std::optional<std::string> instruction_prefix) {
  if (text::is_blank(name)) throw ConfigError("task name must not be empty");
  if (auto t = find_task(name)) return builtin(*t);
  if (!instruction_prefix || text::is_blank(*instruction_prefix)) {
    throw ConfigError("novel task '" + std::string(name) +
                      "' needs a non-empty instruction prefix");
  }
  return ResolvedTask{requires_context ? TaskType::OpenBookQa : TaskType::ClosedBookQa,
                      *instruction_prefix, std::string(name)};
}

nlohmann::json to_json(const ResolvedTask& task) {
  nlohmann::json j{{"base", to_string(task.base)}, {"name", task.display_name}};
  if (task.prefix) j["prefix"] = *task.prefix;
  return j;
}

ResolvedTask task_from_json(const nlohmann::json& j) {
  if (j.is_string()) return builtin(parse_task(j.get<std::string>()));
  ResolvedTask task;
  task.base = parse_task(j.at("base").get<std::string>());
  task.display_name = j.value("name", std::string(to_string(task.base)));
  if (j.contains("prefix")) task.prefix = j.at("prefix").get<std::string>();
  return task;
}

std::string apply_question_prefix(const ResolvedTask& task, std::string question) {
  if (!task.prefix || question.rfind(*task.prefix, 0) == 0) return question;
  const bool spaced = std::isspace(static_cast<unsigned char>(task.prefix->back()));
  return *task.prefix + (spaced ? "" : " ") + question;
}

std::string_view to_string(PromptKind kind) {
  return kKindNames[static_cast<std::size_t>(kind)];
}

PromptKind parse_prompt_kind(std::string_view name) {
  for (std::size_t i = 0; i < kKindNames.size(); ++i) {
    if (kKindNames[i] == name) return static_cast<PromptKind>(i);
  }
  throw ConfigError("unknown prompt kind '" + std::string(name) + "'");
}

std::vector<std::string> required_placeholders(PromptKind kind) {
  switch (kind) {
    case PromptKind::Generation:
    case PromptKind::MetaGeneration:
      return {"u"};
    case PromptKind::LogicSupplement:
      return {"u", "q", "a"};
    case PromptKind::Inspection:
    case PromptKind::SelfInspection:
      return {"u", "q", "l", "a"};
    case PromptKind::IndependenceJudge:
      return {"q"};
    case PromptKind::Evaluation:
      return {};
  }
  return {};
}

std::vector<std::string> PromptTemplate::placeholders() const {
  std::vector<std::string> names;
  scan_template(
      body, [](std::string_view) {},
      [&](std::string_view name) {
        if (std::find(names.begin(), names.end(), name) == names.end()) {
          names.emplace_back(name);
        }
      });
  return names;
}

PromptRegistry PromptRegistry::load(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(io::read_file(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("invalid template manifest " + manifest_path.string() + ": " + e.what());
  }
  PromptRegistry reg;
  reg.version_ = manifest.value("version", "unversioned");
  for (const auto& entry : manifest.at("templates")) {
    PromptTemplate tmpl;
    tmpl.kind = parse_prompt_kind(entry.at("kind").get<std::string>());
    auto task = entry.at("task").get<std::string>();
    if (task != kAnyTask) tmpl.task = parse_task(task);
    tmpl.language = parse_language(entry.at("language").get<std::string>());
    tmpl.path = entry.at("path").get<std::string>();
    tmpl.version = entry.value("version", "1");
    tmpl.verbatim = entry.value("verbatim", false);
    std::string raw = io::read_file(dir / tmpl.path);
    tmpl.sha256 = sha256_hex(raw);
    if (auto expected = entry.value("sha256", std::string{});
        !expected.empty() && expected != tmpl.sha256) {
      throw ConfigError("checksum mismatch for template " + tmpl.path +
                        " (run tools/refresh_template_manifest.py after editing)");
    }
    if (!raw.empty() && raw.back() == '\n') raw.pop_back();
    tmpl.body = std::move(raw);
    reg.add(std::move(tmpl));
  }
  return reg;
}

void PromptRegistry::add(PromptTemplate tmpl) {
  Key key{tmpl.kind, tmpl.task, tmpl.language};
  templates_.insert_or_assign(key, std::move(tmpl));
}

const PromptTemplate* PromptRegistry::lookup(PromptKind kind, TaskType task,
                                             Language lang) const {
  if (auto it = templates_.find(Key{kind, task, lang}); it != templates_.end()) {
    return &it->second;
  }
  if (auto it = templates_.find(Key{kind, std::nullopt, lang}); it != templates_.end()) {
    return &it->second;
  }
  return nullptr;
}

const PromptTemplate& PromptRegistry::find(PromptKind kind, TaskType task, Language lang) const {
  if (const auto* t = lookup(kind, task, lang)) return *t;
  throw LookupError("no " + std::string(to_string(kind)) + " template for task " +
                    std::string(to_string(task)) + " in " + std::string(to_string(lang)));
}

bool PromptRegistry::contains(PromptKind kind, TaskType task, Language lang) const {
  return lookup(kind, task, lang) != nullptr;
}

std::string PromptRegistry::render(PromptKind kind, const ResolvedTask& task, Language lang,
                                   const PromptFields& fields) const {
  const PromptTemplate& tmpl = find(kind, task.base, lang);

  for (const auto& name : required_placeholders(kind)) {
    if (!fields.contains(name)) {
      throw RenderError(name, "missing placeholder '" + name + "' for " +
                                  std::string(to_string(kind)) + " prompt");
    }
  }

  const bool generation = kind == PromptKind::Generation || kind == PromptKind::MetaGeneration;
  std::string instruction;
  if (generation && task.prefix) instruction = prefix_instruction(lang, *task.prefix);

  bool used_instruction = false;
  std::string out;
  out.reserve(tmpl.body.size() + 256);
  scan_template(
      tmpl.body, [&](std::string_view s) { out.append(s); },
      [&](std::string_view name) {
        if (name == "t") {
          out.append(prompt_label(task.base, lang));
        } else if (name == "prefix_instruction") {
          out.append(instruction);
          used_instruction = true;
        } else if (auto it = fields.find(std::string(name)); it != fields.end()) {
          out.append(it->second);
        } else {
          throw RenderError(std::string(name), "missing placeholder '" + std::string(name) +
                                                   "' in template " + tmpl.path);
        }
      });
  if (!instruction.empty() && !used_instruction) out.insert(0, instruction);
  return out;
}

std::map<std::string, std::string> PromptRegistry::versions() const {
  std::map<std::string, std::string> out;
  for (const auto& [key, tmpl] : templates_) {
    std::string path = tmpl.path;
    if (path.empty()) {
      path = std::string(to_string(key.kind)) + "/" +
             std::string(key.task ? to_string(*key.task) : kAnyTask) + "/" +
             std::string(to_string(key.language)) + ".txt";
    }
    out[path] = tmpl.version;
  }
  return out;
}

}  // namespace aquilt::taskspec
