#include "aquilt/evalkit.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <regex>
#include <set>
#include <unordered_map>

#include "aquilt/error.hpp"
#include "aquilt/text.hpp"
#include "aquilt/util.hpp"

namespace aquilt::evalkit {

using nlohmann::json;

namespace {

bool is_ascii_space(char32_t c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

bool is_ascii_alnum(char c) {
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}

// Lowercase and strip punctuation; whitespace-separated words remain.
std::vector<std::string> clean_words(std::string_view s) {
  std::vector<std::string> words;
  std::string current;
  for (char32_t cp : text::decode_utf8(s)) {
    if (is_ascii_space(cp) || cp == 0x3000) {
      if (!current.empty()) words.push_back(std::move(current));
      current.clear();
      continue;
    }
    if (cp < 0x80 && std::ispunct(static_cast<int>(cp))) continue;
    if (text::is_cjk_punct(cp)) continue;
    if (cp >= 'A' && cp <= 'Z') cp = cp - 'A' + 'a';
    text::append_utf8(current, cp);
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

bool is_article(const std::string& w) { return w == "a" || w == "an" || w == "the"; }

// Splits CJK characters out of a word; other runs stay whole.
void push_split(const std::string& word, std::vector<std::string>& out) {
  std::string run;
  for (char32_t cp : text::decode_utf8(word)) {
    if (text::is_cjk(cp)) {
      if (!run.empty()) out.push_back(std::move(run));
      run.clear();
      std::string ch;
      text::append_utf8(ch, cp);
      out.push_back(std::move(ch));
    } else {
      text::append_utf8(run, cp);
    }
  }
  if (!run.empty()) out.push_back(std::move(run));
}

std::string gold_yes_no_maybe(std::string_view gold) {
  std::string g = text::to_lower_ascii(text::trim(gold));
  while (!g.empty() && std::ispunct(static_cast<unsigned char>(g.back()))) g.pop_back();
  if (g == "是") return "yes";
  if (g == "否") return "no";
  if (g == "可能") return "maybe";
  return g;
}

}  // namespace

std::string normalize_answer(std::string_view s) {
  std::string out;
  for (const auto& w : clean_words(s)) {
    if (is_article(w)) continue;
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

std::vector<std::string> squad_tokens(std::string_view s) {
  std::vector<std::string> out;
  for (const auto& w : clean_words(s)) {
    if (!is_article(w)) push_split(w, out);
  }
  return out;
}

std::vector<std::string> rouge_tokens(std::string_view s) {
  std::vector<std::string> out;
  for (const auto& w : clean_words(s)) push_split(w, out);
  return out;
}

double token_f1(std::span<const std::string> prediction, std::span<const std::string> reference) {
  if (prediction.empty() || reference.empty()) {
    return prediction.empty() && reference.empty() ? 1.0 : 0.0;
  }
  std::unordered_map<std::string, std::size_t> ref_counts;
  for (const auto& t : reference) ++ref_counts[t];
  std::size_t common = 0;
  for (const auto& t : prediction) {
    auto it = ref_counts.find(t);
    if (it != ref_counts.end() && it->second > 0) {
      --it->second;
      ++common;
    }
  }
  if (common == 0) return 0.0;
  const double p = static_cast<double>(common) / static_cast<double>(prediction.size());
  const double r = static_cast<double>(common) / static_cast<double>(reference.size());
  return 2.0 * p * r / (p + r);
}

double squad_f1(std::string_view prediction, std::span<const std::string> references) {
  if (references.empty()) throw PreconditionError("squad_f1 needs at least one reference");
  const auto pred = squad_tokens(prediction);
  double best = 0.0;
  for (const auto& ref : references) best = std::max(best, token_f1(pred, squad_tokens(ref)));
  return best;
}

double exact_match(std::string_view prediction, std::span<const std::string> references) {
  if (references.empty()) throw PreconditionError("exact_match needs at least one reference");
  const auto pred = normalize_answer(prediction);
  for (const auto& ref : references) {
    if (normalize_answer(ref) == pred) return 1.0;
  }
  return 0.0;
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  if (a.empty() || b.empty()) return 0;
  std::vector<std::size_t> prev(b.size() + 1, 0);
  std::vector<std::size_t> cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l(std::string_view prediction, std::string_view reference) {
  const auto p = rouge_tokens(prediction);
  const auto r = rouge_tokens(reference);
  const std::size_t lcs = lcs_length(p, r);
  if (lcs == 0) return 0.0;
  const double precision = static_cast<double>(lcs) / static_cast<double>(p.size());
  const double recall = static_cast<double>(lcs) / static_cast<double>(r.size());
  return 2.0 * precision * recall / (precision + recall);
}

LetterExtraction extract_letters(std::string_view prediction, std::size_t option_count) {
  const char last = static_cast<char>('A' + std::min<std::size_t>(option_count, 26) - 1);
  LetterExtraction out;
  std::size_t start = 0;
  static const std::regex cue(
      R"re((?:(?:[Aa]nswer|ANSWER)\s*(?:is|IS|:)|答案\s*(?:是|为|：|:))\s*(?::|：)?\s*(?:\(|（)?\s*[A-Z](?![A-Za-z0-9]))re");
  const std::string s(prediction);
  std::smatch m;
  if (std::regex_search(s, m, cue)) {
    start = static_cast<std::size_t>(m.position(0));
    out.cued = true;
  }
  for (std::size_t i = start; i < s.size(); ++i) {
    const char c = s[i];
    if (c < 'A' || c > last) continue;
    if (i > 0 && is_ascii_alnum(s[i - 1])) continue;
    if (i + 1 < s.size() && is_ascii_alnum(s[i + 1])) continue;
    // "answer is" itself contains no uppercase standalone letter, so the
    // first hit after the cue is the cued letter.
    if (std::find(out.letters.begin(), out.letters.end(), c) == out.letters.end()) {
      out.letters.push_back(c);
    }
  }
  if (out.cued && out.letters.empty()) out.cued = false;
  return out;
}

std::string extract_yes_no_maybe(std::string_view prediction) {
  const std::string s = text::to_lower_ascii(prediction);
  std::size_t best_pos = std::string::npos;
  std::string best;
  for (std::string_view word : {"yes", "no", "maybe"}) {
    for (auto pos = s.find(word); pos != std::string::npos; pos = s.find(word, pos + 1)) {
      const bool left = pos == 0 || !is_ascii_alnum(s[pos - 1]);
      const bool right = pos + word.size() >= s.size() || !is_ascii_alnum(s[pos + word.size()]);
      if (left && right) {
        if (pos < best_pos) {
          best_pos = pos;
          best = std::string(word);
        }
        break;
      }
    }
  }
  if (!best.empty()) return best;
  const std::string t = text::trim(prediction);
  if (t.starts_with("不是") || t.starts_with("否")) return "no";
  if (t.starts_with("是")) return "yes";
  if (t.starts_with("可能")) return "maybe";
  return {};
}

int choice_accuracy(std::string_view prediction, std::string_view gold, ChoiceMode mode,
                    std::size_t option_count) {
  if (mode == ChoiceMode::YesNoMaybe) {
    const auto got = extract_yes_no_maybe(prediction);
    return !got.empty() && got == gold_yes_no_maybe(gold) ? 1 : 0;
  }
  const auto found = extract_letters(prediction, option_count);
  if (found.letters.empty()) return 0;
  if (mode == ChoiceMode::Single) {
    if (!found.cued && found.letters.size() != 1) return 0;
    const std::string g = text::trim(gold);
    return g.size() == 1 && g[0] == found.letters.front() ? 1 : 0;
  }
  std::set<char> gold_set;
  const std::string g = text::trim(gold);
  if (!g.empty() && std::all_of(g.begin(), g.end(), [](char c) { return c >= 'A' && c <= 'Z'; })) {
    gold_set.insert(g.begin(), g.end());
  } else {
    const auto gl = extract_letters(g, 26).letters;
    gold_set.insert(gl.begin(), gl.end());
  }
  const std::set<char> got(found.letters.begin(), found.letters.end());
  return !gold_set.empty() && got == gold_set ? 1 : 0;
}

std::string_view to_string(Metric metric) {
  switch (metric) {
    case Metric::F1: return "f1";
    case Metric::RougeL: return "rouge-l";
    case Metric::Accuracy: return "accuracy";
  }
  return "f1";
}

Metric parse_metric(std::string_view name) {
  if (name == "f1") return Metric::F1;
  if (name == "rouge-l" || name == "rouge_l") return Metric::RougeL;
  if (name == "accuracy") return Metric::Accuracy;
  throw ConfigError("unknown metric '" + std::string(name) + "'");
}

Metric default_metric(TaskType task) {
  switch (task) {
    case TaskType::Nli:
    case TaskType::MultiChoiceSingle:
    case TaskType::MultiChoiceMulti:
      return Metric::Accuracy;
    case TaskType::ExtractiveQa:
      return Metric::F1;
    default:
      return Metric::RougeL;
  }
}

EvalRecord eval_record_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("eval record must be a JSON object");
  EvalRecord r;
  r.id = j.value("id", "");
  r.task = taskspec::parse_task(j.at("task").get<std::string>());
  r.prediction = j.at("prediction").get<std::string>();
  const auto& refs = j.at("references");
  if (refs.is_string()) {
    r.references.push_back(refs.get<std::string>());
  } else {
    r.references = refs.get<std::vector<std::string>>();
  }
  if (r.references.empty()) throw ConfigError("references must be non-empty");
  if (j.contains("options")) r.options = j["options"].get<std::vector<std::string>>();
  if (j.contains("metric")) r.metric = parse_metric(j["metric"].get<std::string>());
  return r;
}

std::vector<EvalRecord> load_eval_jsonl(const std::filesystem::path& path) {
  std::vector<EvalRecord> out;
  const auto lines = text::split_lines(io::read_file(path));
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (text::is_blank(lines[i])) continue;
    try {
      out.push_back(eval_record_from_json(json::parse(lines[i])));
    } catch (const std::exception& e) {
      throw ConfigError(path.string() + " line " + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return out;
}

double score_record(const EvalRecord& r) {
  const Metric metric = r.metric.value_or(default_metric(r.task));
  switch (metric) {
    case Metric::F1:
      return squad_f1(r.prediction, r.references);
    case Metric::RougeL: {
      double best = 0.0;
      for (const auto& ref : r.references) best = std::max(best, rouge_l(r.prediction, ref));
      return best;
    }
    case Metric::Accuracy: {
      const ChoiceMode mode = r.task == TaskType::Nli                ? ChoiceMode::YesNoMaybe
                              : r.task == TaskType::MultiChoiceMulti ? ChoiceMode::Multiple
                                                                     : ChoiceMode::Single;
      const std::size_t n = r.options.empty() ? 4 : r.options.size();
      return choice_accuracy(r.prediction, r.references.front(), mode, n);
    }
  }
  return 0.0;
}

EvalReport evaluate(std::span<const EvalRecord> records) {
  EvalReport report;
  std::map<TaskType, double> sums;
  for (const auto& r : records) {
    auto& ts = report.tasks[r.task];
    ts.metric = r.metric.value_or(default_metric(r.task));
    ++ts.count;
    sums[r.task] += score_record(r);
  }
  for (auto& [task, ts] : report.tasks) ts.mean = sums[task] / static_cast<double>(ts.count);
  report.count = records.size();
  return report;
}

json to_json(const EvalReport& report) {
  json tasks = json::object();
  for (const auto& [task, ts] : report.tasks) {
    tasks[std::string(taskspec::to_string(task))] = {
        {"metric", to_string(ts.metric)}, {"count", ts.count}, {"mean", ts.mean}};
  }
  return json{{"count", report.count}, {"tasks", tasks}};
}

}  // namespace aquilt::evalkit
