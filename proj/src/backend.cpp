#include "aquilt/backend.hpp"

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>
#include <nlohmann/json.hpp>

#include <array>
#include <cmath>
#include <cstdlib>
#include <thread>

#include "aquilt/error.hpp"
#include "aquilt/text.hpp"
#include "aquilt/util.hpp"

namespace aquilt::backend {

using nlohmann::json;

void SamplingParams::validate() const {
  if (!(temperature >= 0.0)) throw ValidationError("sampling.temperature", "must be >= 0");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw ValidationError("sampling.top_p", "must lie in (0, 1]");
  if (max_tokens <= 0) throw ValidationError("sampling.max_tokens", "must be positive");
}

MockFault parse_mock_fault(std::string_view name) {
  if (name == "none") return MockFault::None;
  if (name == "malformed" || name == "always-malformed") return MockFault::Malformed;
  if (name == "malformed-then-valid") return MockFault::MalformedThenValid;
  if (name == "fenced") return MockFault::Fenced;
  if (name == "out-of-range") return MockFault::OutOfRange;
  throw ConfigError("unknown mock fault mode '" + std::string(name) + "'");
}

std::string_view to_string(MockFault fault) {
  switch (fault) {
    case MockFault::None: return "none";
    case MockFault::Malformed: return "malformed";
    case MockFault::MalformedThenValid: return "malformed-then-valid";
    case MockFault::Fenced: return "fenced";
    case MockFault::OutOfRange: return "out-of-range";
  }
  return "none";
}

void BackendProfile::validate() const {
  sampling.validate();
  if (kind == BackendKind::HttpChat && endpoint.empty()) {
    throw ValidationError("endpoint", "required for http-chat");
  }
  if (max_retries < 0 || max_retries > 20) throw ValidationError("max_retries", "must lie in [0, 20]");
  if (timeout.count() <= 0) throw ValidationError("timeout_ms", "must be positive");
  if (backoff_base.count() < 0 || backoff_ceiling < backoff_base) {
    throw ConfigError("backoff ceiling must be >= backoff base >= 0");
  }
  if (parallelism == 0) throw ValidationError("parallelism", "must be positive");
  if (!(fault_rate >= 0.0 && fault_rate <= 1.0)) throw ValidationError("fault_rate", "must lie in [0, 1]");
}

BackendProfile profile_from_json(const json& j, const std::filesystem::path& base_dir) {
  BackendProfile p;
  const auto kind = j.value("kind", "mock");
  if (kind == "http-chat") {
    p.kind = BackendKind::HttpChat;
  } else if (kind == "mock") {
    p.kind = BackendKind::Mock;
  } else {
    throw ValidationError("kind", "expected http-chat or mock, got '" + kind + "'");
  }
  p.endpoint = j.value("endpoint", "");
  p.model_name = j.value("model", j.value("model_name", p.kind == BackendKind::Mock ? "mock" : ""));
  if (j.contains("sampling")) {
    const auto& s = j["sampling"];
    p.sampling.temperature = s.value("temperature", p.sampling.temperature);
    p.sampling.top_p = s.value("top_p", p.sampling.top_p);
    p.sampling.max_tokens = s.value("max_tokens", p.sampling.max_tokens);
  }
  p.max_retries = j.value("max_retries", p.max_retries);
  p.timeout = std::chrono::milliseconds(j.value("timeout_ms", p.timeout.count()));
  p.backoff_base = std::chrono::milliseconds(j.value("backoff_base_ms", p.backoff_base.count()));
  p.backoff_ceiling =
      std::chrono::milliseconds(j.value("backoff_ceiling_ms", p.backoff_ceiling.count()));
  if (j.contains("price")) {
    Price price;
    price.per_input_token = j["price"].value("per_input_token", 0.0);
    price.per_output_token = j["price"].value("per_output_token", 0.0);
    p.price = price;
  }
  p.api_key_env = j.value("api_key_env", "");
  p.parallelism = j.value("parallelism", p.parallelism);
  if (j.contains("fixtures")) {
    p.fixtures = j["fixtures"].get<std::string>();
    if (p.fixtures.is_relative()) p.fixtures = base_dir / p.fixtures;
  }
  p.fault = parse_mock_fault(j.value("fault", "none"));
  p.fault_rate = j.value("fault_rate", p.fault_rate);
  p.validate();
  return p;
}

json to_json(const BackendProfile& profile) {
  json j{{"kind", profile.kind == BackendKind::Mock ? "mock" : "http-chat"},
         {"model", profile.model_name},
         {"sampling",
          {{"temperature", profile.sampling.temperature},
           {"top_p", profile.sampling.top_p},
           {"max_tokens", profile.sampling.max_tokens}}},
         {"max_retries", profile.max_retries}};
  if (profile.kind == BackendKind::HttpChat) j["endpoint"] = profile.endpoint;
  if (profile.kind == BackendKind::Mock) j["fault"] = to_string(profile.fault);
  return j;
}

std::chrono::milliseconds backoff_delay(const BackendProfile& profile, int retry) {
  if (retry <= 0) return std::chrono::milliseconds(0);
  const double ms = static_cast<double>(profile.backoff_base.count()) *
                    std::ldexp(1.0, std::min(retry - 1, 30));
  const double capped = std::min(ms, static_cast<double>(profile.backoff_ceiling.count()));
  return std::chrono::milliseconds(static_cast<std::int64_t>(capped));
}

json to_json(const UsageReport& report) {
  return json{{"requests", report.requests},
              {"input_tokens", report.input_tokens},
              {"output_tokens", report.output_tokens},
              {"failures", report.failures},
              {"estimated_cost", report.estimated_cost}};
}

std::uint64_t estimate_tokens(std::string_view s) {
  std::uint64_t n = 0;
  bool in_token = false;
  for (char c : s) {
    const bool space = c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
    if (!space && !in_token) ++n;
    in_token = !space;
  }
  return n;
}

int attempt_of(std::string_view request_id) {
  auto hash = request_id.rfind('#');
  if (hash == std::string_view::npos || hash + 1 >= request_id.size()) return 0;
  int n = 0;
  for (char c : request_id.substr(hash + 1)) {
    if (c < '0' || c > '9') return 0;
    n = n * 10 + (c - '0');
  }
  return n;
}

Backend::Backend(BackendProfile profile) : profile_(std::move(profile)) { profile_.validate(); }

CompletionResult Backend::complete(const CompletionRequest& request) {
  if (text::is_blank(request.prompt)) throw PreconditionError("prompt must not be empty");
  CompletionResult result = do_complete(request);
  requests_.fetch_add(1, std::memory_order_relaxed);
  input_tokens_.fetch_add(result.usage.input_tokens, std::memory_order_relaxed);
  output_tokens_.fetch_add(result.usage.output_tokens, std::memory_order_relaxed);
  return result;
}

CompletionResult Backend::complete(std::string_view prompt, std::string_view request_id) {
  return complete(CompletionRequest{std::string(prompt), std::string(request_id), {}});
}

UsageReport Backend::usage_report() const {
  UsageReport r;
  r.requests = requests_.load();
  r.input_tokens = input_tokens_.load();
  r.output_tokens = output_tokens_.load();
  r.failures = failures_.load();
  if (profile_.price) {
    r.estimated_cost = static_cast<double>(r.input_tokens) * profile_.price->per_input_token +
                       static_cast<double>(r.output_tokens) * profile_.price->per_output_token;
  }
  return r;
}

std::vector<FixtureRow> load_fixtures(const std::filesystem::path& path) {
  std::vector<FixtureRow> rows;
  const auto lines = text::split_lines(io::read_file(path));
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (text::is_blank(lines[i])) continue;
    try {
      auto j = json::parse(lines[i]);
      FixtureRow row;
      row.body = j.at("body").get<std::string>();
      if (j.contains("match")) {
        const auto& m = j["match"];
        if (m.contains("task")) row.task = taskspec::parse_task(m["task"].get<std::string>());
        if (m.contains("language")) {
          row.language = taskspec::parse_language(m["language"].get<std::string>());
        }
        if (m.contains("kind")) row.kind = m["kind"].get<std::string>();
      }
      rows.push_back(std::move(row));
    } catch (const std::exception& e) {
      throw ConfigError("fixture " + path.string() + " line " + std::to_string(i + 1) + ": " +
                        e.what());
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Mock

namespace {

// Prompt kinds that share an output schema with a fixture kind.
std::string_view schema_family(std::string_view kind) {
  if (kind == "meta-generation") return "generation";
  if (kind == "self-inspection") return "inspection";
  return kind;
}

std::string between(std::string_view s, std::string_view open, std::string_view close) {
  auto b = s.rfind(open);
  if (b == std::string_view::npos) return std::string(s);
  b += open.size();
  auto e = s.find(close, b);
  if (e == std::string_view::npos) e = s.size();
  return std::string(s.substr(b, e - b));
}

std::string after_last(std::string_view s, std::string_view marker) {
  auto p = s.rfind(marker);
  if (p == std::string_view::npos) return std::string(s);
  return text::trim(s.substr(p + marker.size()));
}

std::uint64_t request_hash(std::string_view request_id, std::string_view prompt) {
  const std::string digest = sha256_hex(std::string(request_id) + "\x1f" + sha256_hex(prompt));
  return std::stoull(digest.substr(0, 16), nullptr, 16);
}

std::string base_request_id(std::string_view request_id) {
  auto hash = request_id.rfind('#');
  return std::string(hash == std::string_view::npos ? request_id : request_id.substr(0, hash));
}

constexpr std::array<std::string_view, 12> kStemsEn{
    "How does {A} relate to {B}?",
    "Why is {A} important when discussing {B}?",
    "What role does {A} play in {B}?",
    "Explain the connection between {A} and {B}.",
    "Describe how {A} influences {B}.",
    "Which factor best accounts for {A} in relation to {B}?",
    "In what way can {A} be compared with {B}?",
    "What evidence links {A} and {B}?",
    "Summarize the significance of {A} for {B}.",
    "Compare {A} with {B} and state one difference.",
    "What would change if {A} were absent from {B}?",
    "Identify the main claim about {A} and {B}.",
};

constexpr std::array<std::string_view, 12> kStemsZh{
    "{A}与{B}之间有怎样的关联？",
    "为何说{A}对{B}很重要？",
    "{A}在{B}中起到什么作用？",
    "请说明{A}和{B}的联系。",
    "请描述{A}如何影响{B}。",
    "哪一因素最能解释{A}与{B}的关系？",
    "怎样比较{A}和{B}？",
    "有哪些证据把{A}与{B}联系起来？",
    "请概括{A}对{B}的意义。",
    "请对比{A}和{B}并指出一处不同。",
    "如果没有{A}，{B}会发生什么变化？",
    "请指出关于{A}和{B}的主要观点。",
};

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
  return s;
}

// Picks `n` topic phrases from the source text.
std::vector<std::string> topics(std::string_view u, Language lang, Rng& rng, std::size_t n) {
  std::vector<std::string> out;
  if (lang == Language::Zh) {
    std::vector<char32_t> han;
    for (char32_t cp : text::decode_utf8(u)) {
      if (text::is_cjk(cp)) han.push_back(cp);
    }
    for (std::size_t i = 0; i < n; ++i) {
      std::string t;
      if (han.size() >= 2) {
        auto start = rng.uniform_index(han.size() - 1);
        text::append_utf8(t, han[start]);
        text::append_utf8(t, han[start + 1]);
      } else {
        t = "内容";
      }
      out.push_back(t);
    }
    return out;
  }
  std::vector<std::string> words;
  for (auto& w : text::word_tokens(u)) {
    if (w.size() >= 5) words.push_back(w);
  }
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(words.empty() ? std::string("subject") : words[rng.uniform_index(words.size())]);
  }
  return out;
}

json generation_payload(const CompletionRequest& req, Rng& rng) {
  const Language lang = req.tags.language.value_or(Language::En);
  const TaskType task = req.tags.task.value_or(TaskType::ClosedBookQa);
  const std::string u = between(req.prompt, "<text>\n", "\n</text>");
  auto t = topics(u, lang, rng, 6);
  const bool zh = lang == Language::Zh;

  std::string q(zh ? kStemsZh[rng.uniform_index(kStemsZh.size())]
                   : kStemsEn[rng.uniform_index(kStemsEn.size())]);
  q = replace_all(replace_all(q, "{A}", t[0]), "{B}", t[1]);
  std::string answer;
  if (task == TaskType::MultiChoiceSingle || task == TaskType::MultiChoiceMulti) {
    q += zh ? "\nA. " + t[2] + " B. " + t[3] + " C. " + t[4] + " D. " + t[5]
            : "\nA. " + t[2] + " B. " + t[3] + " C. " + t[4] + " D. " + t[5];
    static constexpr std::array<std::string_view, 4> kLetters{"A", "B", "C", "D"};
    answer = std::string(kLetters[rng.uniform_index(4)]);
    if (task == TaskType::MultiChoiceMulti) answer += ", D";
  } else if (task == TaskType::Nli) {
    static constexpr std::array<std::string_view, 3> kEn{"Yes", "No", "Maybe"};
    static constexpr std::array<std::string_view, 3> kZh{"是", "否", "可能"};
    auto k = rng.uniform_index(3);
    answer = std::string(zh ? kZh[k] : kEn[k]);
  } else {
    answer = zh ? t[0] + "通过" + t[2] + "与" + t[1] + "相互关联。"
                : "Through " + t[2] + ", " + t[0] + " is closely tied to " + t[1] + ".";
  }
  // A slice of context-free questions leak a reference to the source text,
  // which the relevance filter is expected to catch.
  if (taskspec::is_context_free(task) && rng.uniform_index(100) < 8) {
    q = (zh ? std::string("根据上文，") : std::string("According to the text, ")) + q;
  }
  std::string steps =
      zh ? "1. 理解问题：明确" + t[0] + "的含义。2. 分析问题：梳理" + t[0] + "与" + t[1] +
               "的关系。3. 给出答案：综合以上分析作答。"
         : "1. Understand the question about " + t[0] + ". 2. Analyze how " + t[0] +
               " relates to " + t[1] + ". 3. Formulate the answer from the analysis.";
  return json{{"question", q}, {"thinking_steps", steps}, {"answer", answer}};
}

json logic_payload(const CompletionRequest& req) {
  const bool zh = req.tags.language == Language::Zh;
  const std::string q = text::trim(between(req.prompt, "<question>\n", "\n</question>"));
  return json{{"thought_process",
               zh ? "1. 阅读问题：" + q + " 2. 分析问题：定位文本中的相关部分。3. 给出最佳答案。"
                  : "1. Read the question: " + q +
                        " 2. Analyze the question: locate the relevant part of the text. "
                        "3. Provide the best answer."}};
}

int mock_score(Rng& rng) {
  auto r = rng.uniform_index(100);
  if (r < 6) return 1;
  if (r < 20) return 2;
  if (r < 50) return 3;
  if (r < 85) return 4;
  return 5;
}

json inspection_payload(const CompletionRequest& req, Rng& rng, bool out_of_range) {
  const bool zh = req.tags.language == Language::Zh;
  const int score = out_of_range ? 7 : mock_score(rng);
  return json{{"analysis_steps",
               zh ? "问题与回复相关，评分为" + std::to_string(score) + "分。"
                  : "The response is relevant; assessed at level " + std::to_string(score) + "."},
              {"score", std::to_string(score)}};
}

std::string judge_verdict(const CompletionRequest& req) {
  static constexpr std::array<std::string_view, 14> kMarkers{
      "the above content", "according to the text", "the above text", "in the text",
      "in the passage",    "the text",              "the passage",    "the context",
      "上文",              "文中",                  "根据文本",       "上述内容",
      "段落中",            "材料中",
  };
  std::string q = after_last(req.prompt, "Question:");
  if (req.tags.language == Language::Zh) q = after_last(req.prompt, "问题：");
  for (auto m : kMarkers) {
    if (text::contains_ci(q, m)) return "Yes.";
  }
  return "No.";
}

std::string malformed_text(Rng& rng) {
  return rng.uniform_index(2) == 0 ? "I am sorry, but I cannot produce that right now."
                                   : "{\"question\": \"unterminated";
}

}  // namespace

MockBackend::MockBackend(BackendProfile profile, std::vector<FixtureRow> fixtures)
    : Backend(std::move(profile)), fixtures_(std::move(fixtures)) {}

CompletionResult MockBackend::do_complete(const CompletionRequest& req) {
  Rng rng(request_hash(req.request_id, req.prompt));
  const int attempt = attempt_of(req.request_id);
  const std::string_view family = schema_family(req.tags.kind);

  bool faulted = false;
  if (profile().fault != MockFault::None) {
    const double u = static_cast<double>(
                         fnv1a64(base_request_id(req.request_id)) >> 11) * 0x1.0p-53;
    faulted = u < profile().fault_rate;
  }
  const MockFault fault = faulted ? profile().fault : MockFault::None;
  const bool malformed =
      fault == MockFault::Malformed || (fault == MockFault::MalformedThenValid && attempt == 0);

  std::string body;
  std::vector<const FixtureRow*> matches;
  for (const auto& row : fixtures_) {
    if (row.task && row.task != req.tags.task) continue;
    if (row.language && row.language != req.tags.language) continue;
    if (row.kind && *row.kind != req.tags.kind && *row.kind != family) continue;
    matches.push_back(&row);
  }

  if (family == "independence-judge") {
    body = malformed ? "Maybe" : judge_verdict(req);
  } else if (malformed) {
    body = malformed_text(rng);
  } else if (!matches.empty()) {
    body = matches[rng.uniform_index(matches.size())]->body;
  } else if (family == "generation") {
    body = generation_payload(req, rng).dump();
  } else if (family == "logic-supplement") {
    body = logic_payload(req).dump();
  } else if (family == "inspection") {
    body = inspection_payload(req, rng, fault == MockFault::OutOfRange).dump();
  } else {
    body = "OK";
  }
  if (fault == MockFault::Fenced && !malformed) {
    body = "Here is the result you asked for:\n```json\n" + body + "\n```\nLet me know if you "
           "need anything else.";
  }

  CompletionResult result;
  result.usage.input_tokens = estimate_tokens(req.prompt);
  result.usage.output_tokens = estimate_tokens(body);
  result.text = std::move(body);
  return result;
}

// ---------------------------------------------------------------------------
// HTTP chat completions

HttpChatBackend::HttpChatBackend(BackendProfile profile) : Backend(std::move(profile)) {
  const std::string& ep = this->profile().endpoint;
  auto scheme_end = ep.find("://");
  if (scheme_end == std::string::npos) {
    throw ConfigError("endpoint must include a scheme: " + ep);
  }
  auto path_start = ep.find('/', scheme_end + 3);
  scheme_host_port_ = ep.substr(0, path_start);
  base_path_ = path_start == std::string::npos ? "" : ep.substr(path_start);
  while (!base_path_.empty() && base_path_.back() == '/') base_path_.pop_back();
  if (const auto& var = this->profile().api_key_env; !var.empty()) {
    if (const char* key = std::getenv(var.c_str())) api_key_ = key;
  }
}

HttpChatBackend::~HttpChatBackend() = default;

CompletionResult HttpChatBackend::do_complete(const CompletionRequest& req) {
  const auto& prof = profile();
  const json body{{"model", prof.model_name},
                  {"messages", json::array({{{"role", "user"}, {"content", req.prompt}}})},
                  {"temperature", prof.sampling.temperature},
                  {"top_p", prof.sampling.top_p},
                  {"max_tokens", prof.sampling.max_tokens}};
  const std::string payload = body.dump();
  const std::string path = base_path_ + "/chat/completions";

  httplib::Client client(scheme_host_port_);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(prof.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(prof.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());
  httplib::Headers headers{{"X-Request-Id", req.request_id}};
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

  std::string last_error = "no attempt made";
  bool last_was_timeout = false;
  for (int attempt = 0; attempt <= prof.max_retries; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(backoff_delay(prof, attempt));
    const auto started = std::chrono::steady_clock::now();
    auto res = client.Post(path, headers, payload, "application/json");
    if (!res) {
      record_failure();
      const auto elapsed = std::chrono::steady_clock::now() - started;
      last_was_timeout = res.error() == httplib::Error::ConnectionTimeout ||
                         (res.error() == httplib::Error::Read && elapsed >= prof.timeout);
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      record_failure();
      last_was_timeout = false;
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status < 200 || res->status >= 300) {
      record_failure();
      throw ProtocolError("HTTP " + std::to_string(res->status) + " from " + scheme_host_port_ +
                          path + ": " + res->body.substr(0, 200));
    }
    json parsed;
    try {
      parsed = json::parse(res->body);
    } catch (const json::parse_error&) {
      record_failure();
      throw ProtocolError("non-JSON response body from " + scheme_host_port_ + path);
    }
    CompletionResult result;
    try {
      result.text = parsed.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception&) {
      record_failure();
      throw ProtocolError("response lacks choices[0].message.content");
    }
    if (parsed.contains("usage") && parsed["usage"].is_object()) {
      result.usage.input_tokens = parsed["usage"].value("prompt_tokens", std::uint64_t{0});
      result.usage.output_tokens = parsed["usage"].value("completion_tokens", std::uint64_t{0});
    } else {
      result.usage.input_tokens = estimate_tokens(req.prompt);
      result.usage.output_tokens = estimate_tokens(result.text);
    }
    return result;
  }
  const std::string msg = "request " + req.request_id + " failed after " +
                          std::to_string(prof.max_retries + 1) + " attempts: " + last_error;
  if (last_was_timeout) throw TimeoutError(msg);
  throw TransportError(msg);
}

std::unique_ptr<Backend> make_backend(const BackendProfile& profile) {
  if (profile.kind == BackendKind::HttpChat) return std::make_unique<HttpChatBackend>(profile);
  std::vector<FixtureRow> rows;
  if (!profile.fixtures.empty()) rows = load_fixtures(profile.fixtures);
  return std::make_unique<MockBackend>(profile, std::move(rows));
}

}  // namespace aquilt::backend
